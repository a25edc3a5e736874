"""Exact and asymptotic quantities of the d-dimensional simple random walk.

Transition kernels q_n(x) are computed three ways, each exact up to float
rounding on its domain:

* dynamic programming on a full box (radius >= n), used for small n;
* a per-axis step-count decomposition (conditioning on how many steps each
  coordinate takes turns the d-dimensional kernel into a multinomial mixture
  of 1-d binomial kernels), used for large n on small boxes;
* Gauss-Legendre quadrature of the Fourier representation, kept as an
  independent cross-check for return probabilities.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, zeta

KERNEL_FORMAT_VERSION = 1

# Empirical LLT envelope constant: q_{2n}(0) <= C * (d/(4*pi*n))^{d/2}.
# The asymptote has constant 2; a 10% safety factor makes the envelope hold
# down to n = 1 (verified in the test suite for d = 3, 4, 5).
ENVELOPE_SAFETY = 1.1


class RecurrentWalkError(ValueError):
    """Raised when an R_infinity-type quantity is requested for d <= 2."""


class TruncatedTableError(ValueError):
    """Raised when a lossy kernel table is requested without opting in."""


# ---------------------------------------------------------------------------
# canonical lattice packing, shared repo-wide
# ---------------------------------------------------------------------------

def pack_offsets(points: np.ndarray, radius: int) -> np.ndarray:
    """Flat C-order index of lattice offsets inside the centered box
    [-radius, radius]^d.  This is the one packing convention used by every
    table and field in the package."""
    pts = np.asarray(points)
    d = pts.shape[-1]
    if np.any(np.abs(pts) > radius):
        raise ValueError("offset outside box")
    side = 2 * radius + 1
    idx = np.zeros(pts.shape[:-1], dtype=np.int64)
    for i in range(d):
        idx = idx * side + (pts[..., i] + radius)
    return idx


def unpack_offsets(indices: np.ndarray, radius: int, d: int) -> np.ndarray:
    side = 2 * radius + 1
    idx = np.asarray(indices, dtype=np.int64)
    out = np.empty(idx.shape + (d,), dtype=np.int64)
    for i in range(d - 1, -1, -1):
        out[..., i] = idx % side - radius
        idx = idx // side
    return out


def offset_grid(radius: int, d: int) -> np.ndarray:
    """All offsets of the centered box, shape (2r+1,)*d + (d,), C order."""
    ax = np.arange(-radius, radius + 1)
    return np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1)


# ---------------------------------------------------------------------------
# kernel tables by dynamic programming
# ---------------------------------------------------------------------------

@dataclass
class WalkKernelTable:
    """q_n(x) for 1 <= n <= n_max on centered boxes.

    Slice n is stored flat in canonical packing over the box of radius
    min(n, radius); exact whenever radius >= n.  Immutable after
    construction and safe to share across threads.
    """

    d: int
    n_max: int
    radius: int
    truncated: bool
    slices: list = field(repr=False)  # slices[n-1]: flat array, radius min(n, radius)

    def slice_radius(self, n: int) -> int:
        return min(n, self.radius)

    def slice_array(self, n: int) -> np.ndarray:
        """q_n on its box, shape (2r+1,)*d."""
        r = self.slice_radius(n)
        return self.slices[n - 1].reshape((2 * r + 1,) * self.d)

    def q(self, n: int, x) -> float:
        x = np.asarray(x, dtype=np.int64)
        r = self.slice_radius(n)
        if np.any(np.abs(x) > r):
            return 0.0
        return float(self.slices[n - 1][pack_offsets(x, r)])


def _dp_step(arr: np.ndarray, d: int, grow: bool) -> np.ndarray:
    """One convolution with the uniform nearest-neighbor step.

    grow=True embeds into a box larger by 1 (exact); grow=False keeps the
    box and drops mass that would require neighbors outside it (kill-on-exit
    truncation)."""
    if grow:
        big = np.pad(arr, 1)
    else:
        big = arr
    out = np.zeros_like(big)
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        out[tuple(lo)] += big[tuple(hi)]
        out[tuple(hi)] += big[tuple(lo)]
    out /= 2 * d
    return out


def kernel_table(d: int, n_max: int, radius: int | None = None,
                 allow_truncation: bool = False) -> WalkKernelTable:
    """DP table of q_n for n = 1..n_max.  Exact iff radius >= n_max."""
    if d < 1 or n_max < 1:
        raise ValueError("need d >= 1 and n_max >= 1")
    if radius is None:
        radius = n_max
    if radius < n_max and not allow_truncation:
        raise TruncatedTableError(
            f"radius {radius} < n_max {n_max} yields a lossy table; "
            "pass allow_truncation=True to accept it")
    slices = []
    cur = np.zeros((1,) * d)
    cur[(0,) * d] = 1.0
    r = 0
    for n in range(1, n_max + 1):
        grow = r < radius
        cur = _dp_step(cur, d, grow)
        if grow:
            r += 1
        slices.append(cur.reshape(-1).copy())
    return WalkKernelTable(d=d, n_max=n_max, radius=radius,
                           truncated=radius < n_max, slices=slices)


# ---------------------------------------------------------------------------
# exact kernels via the per-axis step-count decomposition
# ---------------------------------------------------------------------------

def _binomial_kernel_rows(n_max: int, radius: int) -> np.ndarray:
    """p1[m, v+radius] = P(1-d SRW of m steps sits at v), m = 0..n_max.

    Built by the Pascal recursion, so each entry is exact up to rounding."""
    side = 2 * radius + 1
    p = np.zeros((n_max + 1, side + 2))
    p[0, radius + 1] = 1.0
    for m in range(1, n_max + 1):
        p[m, 1:-1] = 0.5 * (p[m - 1, :-2] + p[m - 1, 2:])
        # mass flowing beyond the stored range re-enters only from outside;
        # track the two boundary columns explicitly to stay exact
        p[m, 0] = _p1_point(m, -radius - 1)
        p[m, -1] = _p1_point(m, radius + 1)
    return p[:, 1:-1]


def _p1_point(m: int, v: int) -> float:
    if abs(v) > m or (m + v) % 2:
        return 0.0
    k = (m + v) // 2
    return float(np.exp(gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)
                        - m * np.log(2.0)))


def kernel_point(d: int, n: int, x) -> float:
    """Exact q_n(x) for a single offset, any n, via the step-count mixture."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (d,):
        raise ValueError("offset must have length d")
    if np.any(np.abs(x) > n) or (int(np.sum(x)) - n) % 2:
        return 0.0
    m = np.arange(n + 1)
    # log(p1(m, x_i) / m!) per axis, -inf where impossible
    logs = np.full((d, n + 1), -np.inf)
    for i in range(d):
        v = int(x[i])
        ok = (m >= abs(v)) & ((m + v) % 2 == 0)
        k = (m + v) // 2
        logs[i, ok] = (-gammaln(k[ok] + 1) - gammaln(m[ok] - k[ok] + 1)
                       - m[ok] * np.log(2.0))
    acc = logs[0]
    for i in range(1, d):
        acc = _logconv(acc, logs[i])
    return float(np.exp(gammaln(n + 1) - n * np.log(d) + acc[n]))


def _logconv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(log a) conv (log b) for nonnegative sequences, length preserved."""
    n = len(a)
    out = np.full(n, -np.inf)
    for t in range(n):
        terms = a[:t + 1] + b[t::-1]
        mx = np.max(terms)
        if mx > -np.inf:
            out[t] = mx + np.log(np.sum(np.exp(terms - mx)))
    return out


def kernel_box(d: int, n: int, radius: int) -> np.ndarray:
    """Exact q_n on the centered box of the given radius, any n.

    Shape (2*radius+1,)*d.  Uses DP when affordable; otherwise the
    step-count decomposition (d = 3) or per-point evaluation."""
    if radius >= n or (n <= 48 and d <= 3):
        cur = np.zeros((1,) * d)
        cur[(0,) * d] = 1.0
        for _ in range(n):
            cur = _dp_step(cur, d, grow=True)
        return _crop_or_pad(cur, n, radius, d)
    if d == 3:
        return _kernel_box_mixture3(n, radius)
    grid = offset_grid(radius, d).reshape(-1, d)
    vals = np.array([kernel_point(d, n, g) for g in grid])
    return vals.reshape((2 * radius + 1,) * d)


def _crop_or_pad(arr: np.ndarray, r_in: int, r_out: int, d: int) -> np.ndarray:
    if r_out == r_in:
        return arr
    if r_out < r_in:
        sl = tuple(slice(r_in - r_out, r_in + r_out + 1) for _ in range(d))
        return arr[sl]
    pad = r_out - r_in
    return np.pad(arr, pad)


def _kernel_box_mixture3(n: int, radius: int) -> np.ndarray:
    p1 = _binomial_kernel_rows(n, radius)          # (n+1, side)
    m = np.arange(n + 1)
    lg = gammaln(m + 1)
    # W[a, b] = n! / (a! b! (n-a-b)!) / 3^n over valid compositions
    a = m[:, None]
    b = m[None, :]
    c = n - a - b
    valid = c >= 0
    logw = np.where(valid,
                    gammaln(n + 1) - lg[:, None] - lg[None, :]
                    - gammaln(np.where(valid, c, 0) + 1) - n * np.log(3.0),
                    -np.inf)
    w = np.exp(logw)
    t3 = p1[np.clip(c, 0, n)] * valid[..., None]   # (n+1, n+1, side)
    s = w[..., None] * t3
    tmp = np.einsum("abk,bj->ajk", s, p1)
    return np.einsum("ajk,ai->ijk", tmp, p1)


# ---------------------------------------------------------------------------
# return probabilities and the return series
# ---------------------------------------------------------------------------

def _c1_half(n_max: int) -> np.ndarray:
    """c1[k] = P(1-d SRW returns to 0 at step 2k) = C(2k,k) 4^{-k}."""
    c = np.empty(n_max + 1)
    c[0] = 1.0
    k = np.arange(1, n_max + 1)
    c[1:] = np.cumprod((2 * k - 1) / (2 * k))
    return c


def _binom_even_pmf(n2: int, p: float, kmax: int) -> np.ndarray:
    """pmf[k] = C(n2, 2k) p^{2k} (1-p)^{n2-2k}, k = 0..kmax, stable at any n2.

    Built from the term ratio with one log-anchored entry near the mode."""
    k = np.arange(kmax + 1)
    j = 2 * k
    # ratio pmf[k+1]/pmf[k]
    num = (n2 - j[:-1]) * (n2 - j[:-1] - 1)
    den = (j[:-1] + 2) * (j[:-1] + 1)
    ratio = (num / den) * (p / (1 - p)) ** 2
    k0 = min(int(round(n2 * p / 2)), kmax)
    lp0 = (gammaln(n2 + 1) - gammaln(2 * k0 + 1) - gammaln(n2 - 2 * k0 + 1)
           + 2 * k0 * np.log(p) + (n2 - 2 * k0) * np.log1p(-p))
    pmf = np.empty(kmax + 1)
    pmf[k0] = 1.0
    if k0 < kmax:
        pmf[k0 + 1:] = np.cumprod(ratio[k0:])
    if k0 > 0:
        with np.errstate(divide="ignore"):
            pmf[k0 - 1::-1] = np.cumprod(1.0 / ratio[k0 - 1::-1])
    return pmf * np.exp(lp0)


def return_prob_series(d: int, n_max: int) -> np.ndarray:
    """Exact q_{2n}(0) for n = 1..n_max via induction on the dimension.

    Conditioning on the (even) number of steps the walk spends in the last
    axis reduces dimension d to dimension d-1 with a binomial mixture."""
    if d < 1:
        raise ValueError("d >= 1")
    c1 = _c1_half(n_max)
    cur = c1.copy()                      # r_1(2n)
    for dim in range(2, d + 1):
        nxt = np.empty(n_max + 1)
        nxt[0] = 1.0
        for n in range(1, n_max + 1):
            pmf = _binom_even_pmf(2 * n, 1.0 / dim, n)
            nxt[n] = float(np.dot(pmf * c1[:n + 1], cur[n::-1]))
        cur = nxt
    return cur[1:]


def return_prob(d: int, n: int, method: str = "auto") -> float:
    """q_{2n}(0).  'dp' (exact, small n), 'series' (exact, any n),
    'fourier' (Gauss-Legendre quadrature, reports convergence)."""
    if n < 1:
        raise ValueError("n >= 1")
    if method == "auto":
        method = "dp" if (2 * n) ** d <= 4 ** 6 and 2 * n <= 24 else "series"
    if method == "dp":
        return kernel_table(d, 2 * n).q(2 * n, (0,) * d)
    if method == "series":
        return float(return_prob_series(d, n)[-1])
    if method == "fourier":
        val, err = return_prob_fourier(d, n)
        return val
    raise ValueError(f"unknown method {method!r}")


def return_prob_fourier(d: int, n: int, nodes: int | None = None) -> tuple[float, float]:
    """q_{2n}(0) = pi^{-d} int_{[0,pi]^d} ((1/d) sum cos k_i)^{2n} dk by
    tensor Gauss-Legendre; returns (value, error estimate).

    Raises if the two finest node counts disagree beyond 1e-10 relative."""
    if nodes is None:
        nodes = max(24, int(6 * np.sqrt(n)) + 8)
    vals = []
    for m in (nodes, nodes + 16):
        x, w = np.polynomial.legendre.leggauss(m)
        k = 0.5 * np.pi * (x + 1.0)
        w = 0.5 * np.pi * w
        cos = np.cos(k)
        mesh = np.zeros((m,) * d)
        for ax in range(d):
            shape = [1] * d
            shape[ax] = m
            mesh = mesh + cos.reshape(shape)
        integ = (mesh / d) ** (2 * n)
        for ax in range(d - 1, -1, -1):
            integ = np.tensordot(integ, w, axes=([ax], [0]))
        vals.append(float(integ) / np.pi ** d)
    err = abs(vals[1] - vals[0])
    if err > 1e-10 * max(abs(vals[1]), 1e-300):
        raise ArithmeticError(
            f"fourier quadrature not converged: estimate {vals[1]}, error {err}")
    return vals[1], err


@dataclass
class ReturnSeries:
    """q_{2n}(0) partial sums, the R_infinity estimate and pi_d."""

    d: int
    q0: np.ndarray          # q_{2n}(0), n = 1..n_max
    partial: np.ndarray     # R_N = sum_{n<=N} q_{2n}(0)
    n_max: int
    tail_estimate: float    # LLT tail beyond n_max
    tail_bound: float       # certified envelope tail (>= true tail)
    r_inf: float            # R_{n_max} + tail_estimate
    r_inf_bound: float      # R_{n_max} + tail_bound
    pi_d: float
    pi_error: float

    def __post_init__(self):
        self.n_max = len(self.q0)


def _llt_prefactor(d: int) -> float:
    return 2.0 * (d / (4 * np.pi)) ** (d / 2)


@lru_cache(maxsize=8)
def return_series(d: int, tol: float = 4e-3, n_max: int | None = None) -> ReturnSeries:
    """R_N series with a certified tail, and pi_d = R_inf/(1+R_inf).

    n_max is chosen so the envelope tail C (d/(4 pi n))^{d/2} (C carrying a
    10% safety factor over the LLT constant) sums below tol."""
    if d <= 2:
        raise RecurrentWalkError("walk recurrent, R_infinity divergent")
    c_env = ENVELOPE_SAFETY * _llt_prefactor(d)
    if n_max is None:
        # envelope tail ~ c_env * M^{1-d/2} / (d/2 - 1)
        n_max = int(np.ceil((c_env / ((d / 2 - 1) * tol)) ** (1 / (d / 2 - 1)))) + 1
        if n_max > 2_000_000:
            raise ValueError(f"tolerance {tol} needs n_max={n_max}, too large")
    q0 = return_prob_series(d, n_max)
    partial = np.cumsum(q0)
    tail_est = _llt_prefactor(d) * float(zeta(d / 2, n_max + 1))
    tail_bound = c_env * float(zeta(d / 2, n_max + 1))
    r_inf = float(partial[-1]) + tail_est
    pi_d = r_inf / (1 + r_inf)
    return ReturnSeries(d=d, q0=q0, partial=partial, n_max=n_max,
                        tail_estimate=tail_est, tail_bound=tail_bound,
                        r_inf=r_inf, r_inf_bound=float(partial[-1]) + tail_bound,
                        pi_d=pi_d, pi_error=tail_est)


@lru_cache(maxsize=8)
def pi_d(d: int, tol: float = 4e-3) -> float:
    return return_series(d, tol).pi_d


# ---------------------------------------------------------------------------
# heat kernel and LLT diagnostics
# ---------------------------------------------------------------------------

def heat_kernel(t: float, x, d: int) -> float:
    """g_t(x) = (2 pi t)^{-d/2} exp(-|x|^2 / (2t))."""
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    return float((2 * np.pi * t) ** (-d / 2) * np.exp(-np.dot(x, x) / (2 * t)))


def llt_error(d: int, n: int, window: int) -> float:
    """sup over even-parity |x|_inf <= window of
    |q_{2n}(x) - 2 g_{2n/d}(x)| * n^{d/2}."""
    q = kernel_box(d, 2 * n, window)
    grid = offset_grid(window, d)
    even = (grid.sum(axis=-1) % 2 == 0)
    t = 2 * n / d
    g = (2 * np.pi * t) ** (-d / 2) * np.exp(-(grid.astype(float) ** 2).sum(axis=-1) / (2 * t))
    diff = np.abs(q - 2 * g)
    return float(np.max(diff[even]) * n ** (d / 2))


# ---------------------------------------------------------------------------
# optional binary cache
# ---------------------------------------------------------------------------

def _cache_path(cache_dir: str, d: int, n_max: int, radius: int) -> str:
    key = f"v{KERNEL_FORMAT_VERSION}-d{d}-n{n_max}-r{radius}"
    h = hashlib.sha256(key.encode()).hexdigest()[:16]
    return os.path.join(cache_dir, f"kernels-{key}-{h}.npz")


def save_table(table: WalkKernelTable, cache_dir: str) -> str:
    os.makedirs(cache_dir, exist_ok=True)
    path = _cache_path(cache_dir, table.d, table.n_max, table.radius)
    np.savez_compressed(path,
                        meta=np.array([KERNEL_FORMAT_VERSION, table.d,
                                       table.n_max, table.radius]),
                        **{f"s{n}": table.slices[n - 1]
                           for n in range(1, table.n_max + 1)})
    return path


def load_table(d: int, n_max: int, radius: int, cache_dir: str) -> WalkKernelTable | None:
    path = _cache_path(cache_dir, d, n_max, radius)
    if not os.path.exists(path):
        return None
    data = np.load(path)
    ver = int(data["meta"][0])
    if ver != KERNEL_FORMAT_VERSION:
        return None
    slices = [data[f"s{n}"] for n in range(1, n_max + 1)]
    return WalkKernelTable(d=d, n_max=n_max, radius=radius,
                           truncated=radius < n_max, slices=slices)
