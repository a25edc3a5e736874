"""Environment laws, the L2-critical temperature, and reproducible
counter-based disorder sampling.

Sampling is a pure function of (master seed, replica id, time index, site):
each site value is derived by avalanche-mixing a 64-bit counter built from
those inputs, so replicas can run in any order, in parallel, and regenerate
bit-identical fields slice by slice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import walks

_U64 = np.uint64
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_TIME_SALT = _U64(0xD6E8FEB86659FD93)
_STREAM2 = _U64(0x2545F4914F6CDD1D)
_AX = (_U64(0x9E3779B97F4A7C15), _U64(0xC2B2AE3D27D4EB4F),
       _U64(0x165667B19E3779F9), _U64(0x27D4EB2F165667C5))

_COORD_LIMIT = 1 << 40

try:  # optional fused site generators; numpy fallback below is equivalent
    import numba as _nb
except ImportError:  # pragma: no cover
    _nb = None

if _nb is not None:
    @_nb.njit(cache=True)
    def _gauss_sites(acc, beta, lam, as_weights):  # pragma: no cover (jit)
        M1 = _U64(0xBF58476D1CE4E5B9)
        M2 = _U64(0x94D049BB133111EB)
        S2 = _U64(0x2545F4914F6CDD1D)
        c30, c27, c31, c11 = _U64(30), _U64(27), _U64(31), _U64(11)
        out = np.empty(acc.size)
        for i in range(acc.size):
            x = acc[i]
            x = (x ^ (x >> c30)) * M1
            x = (x ^ (x >> c27)) * M2
            h = x ^ (x >> c31)
            y = h ^ S2
            y = (y ^ (y >> c30)) * M1
            y = (y ^ (y >> c27)) * M2
            y = y ^ (y >> c31)
            u1 = (np.float64(h >> c11) + 0.5) * (2.0 ** -53)
            u2 = (np.float64(y >> c11) + 0.5) * (2.0 ** -53)
            g = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
            out[i] = np.exp(beta * g - lam) if as_weights else g
        return out

    @_nb.njit(cache=True)
    def _sign_sites(acc, w_plus, w_minus):  # pragma: no cover (jit)
        M1 = _U64(0xBF58476D1CE4E5B9)
        M2 = _U64(0x94D049BB133111EB)
        c30, c27, c31, c63 = _U64(30), _U64(27), _U64(31), _U64(63)
        out = np.empty(acc.size)
        for i in range(acc.size):
            x = acc[i]
            x = (x ^ (x >> c30)) * M1
            x = (x ^ (x >> c27)) * M2
            h = x ^ (x >> c31)
            out[i] = w_plus if (h >> c63) else w_minus
        return out
else:
    _gauss_sites = None
    _sign_sites = None


def _mix64(x: np.ndarray | np.uint64):
    x = x.astype(_U64) if isinstance(x, np.ndarray) else _U64(x)
    with np.errstate(over="ignore"):  # wraparound mod 2^64 is the point
        x = (x ^ (x >> _U64(30))) * _M1
        x = (x ^ (x >> _U64(27))) * _M2
    return x ^ (x >> _U64(31))


def _to_unit(h):
    """uint64 -> float64 in (0, 1), using the top 53 bits."""
    return ((h >> _U64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


class DisorderSupportError(ValueError):
    pass


@dataclass(frozen=True)
class DisorderLaw:
    """An i.i.d. environment law with E[w] = 0, E[w^2] = 1 and closed-form
    cumulant generating function.

    gamma is the concentration exponent of the law's Lipschitz tail
    inequality; recorded as metadata only (the tail constants are not
    pinned by anything computable here).
    """

    kind: str  # "gaussian" | "rademacher"

    def __post_init__(self):
        if self.kind not in ("gaussian", "rademacher"):
            raise DisorderSupportError(f"unsupported law {self.kind!r}")

    @property
    def gamma(self) -> float:
        return 2.0

    def cgf(self, beta: float) -> float:
        """lambda(beta) = log E[exp(beta * w)]."""
        if beta < 0:
            raise ValueError("beta >= 0")
        if self.kind == "gaussian":
            return 0.5 * beta * beta
        return float(np.log(np.cosh(beta)))

    def lambda2(self, beta: float) -> float:
        return self.cgf(2 * beta) - 2 * self.cgf(beta)

    def lambda2_sup(self) -> float:
        """Supremum of lambda2 over beta (inf for Gaussian)."""
        if self.kind == "gaussian":
            return math.inf
        return math.log(2.0)  # log cosh(2b) - 2 log cosh(b) -> log 2

    def sigma2(self, beta: float) -> float:
        return float(np.expm1(self.lambda2(beta)))

    def sigma(self, beta: float) -> float:
        return math.sqrt(self.sigma2(beta))

    def eta(self, beta: float, omega):
        """eta = (exp(beta*w - lambda(beta)) - 1) / sigma(beta)."""
        if beta <= 0:
            raise ValueError("eta undefined at beta = 0 (sigma = 0)")
        omega = np.asarray(omega, dtype=float)
        return np.expm1(beta * omega - self.cgf(beta)) / self.sigma(beta)

    def eta_moment(self, beta: float, k: int) -> float:
        """E[eta^k], exact from the law (k = 3, 4 are the cases used)."""
        if beta <= 0:
            raise ValueError("beta > 0")
        if self.kind == "gaussian":
            lam2 = self.lambda2(beta)
            m = lambda j: math.exp(j * (j - 1) * lam2 / 2)  # E[Y^j]
            s = self.sigma(beta)
            from math import comb
            return sum((-1) ** (k - j) * comb(k, j) * m(j) for j in range(k + 1)) / s ** k
        yp = math.exp(beta - self.cgf(beta))
        ym = math.exp(-beta - self.cgf(beta))
        s = self.sigma(beta)
        return (((yp - 1) / s) ** k + ((ym - 1) / s) ** k) / 2


GAUSSIAN = DisorderLaw("gaussian")
RADEMACHER = DisorderLaw("rademacher")


def law_from_name(name: str) -> DisorderLaw:
    return DisorderLaw(name.lower())


def beta_l2(law: DisorderLaw, d: int, pi: float | None = None,
            tol: float = 1e-10) -> float:
    """The L2-critical temperature: root of lambda2(beta) = log(1/pi_d).

    Returns +inf when the law's lambda2 never reaches the threshold
    (e.g. Rademacher in d = 3, where sup lambda2 = log 2 < log(1/pi_3))."""
    if d <= 2:
        raise walks.RecurrentWalkError("no L2 region: walk recurrent for d <= 2")
    if pi is None:
        pi = walks.pi_d(d)
    thr = math.log(1.0 / pi)
    if law.lambda2_sup() <= thr:
        return math.inf
    lo, hi = 0.0, 1.0
    while law.lambda2(hi) < thr:
        hi *= 2
        if hi > 1e9:
            return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if law.lambda2(mid) < thr:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# counter-based field sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Closed space-time region [t_min, t_max] x prod [lo_i, hi_i]."""
    t_min: int
    t_max: int
    lo: tuple
    hi: tuple


class DisorderField:
    """A lazily materialized i.i.d. field over a space-time region.

    Slices are regenerated on demand; the value at (n, z) depends only on
    (master_seed, replica_id, n, z)."""

    def __init__(self, law: DisorderLaw, master_seed: int, replica_id: int,
                 region: Region | None = None):
        self.law = law
        self.master_seed = int(master_seed)
        self.replica_id = int(replica_id)
        self.region = region
        with np.errstate(over="ignore"):
            self._key = _mix64(
                _mix64(_U64(self.master_seed & (2 ** 64 - 1)))
                ^ _mix64(_U64(self.replica_id & (2 ** 64 - 1)) + _GOLDEN))

    def _check(self, n: int, lo, hi):
        if n < 1 or n >= _COORD_LIMIT:
            raise ValueError("time index out of packable range")
        if any(abs(int(a)) >= _COORD_LIMIT or abs(int(b)) >= _COORD_LIMIT
               for a, b in zip(lo, hi)):
            raise ValueError("site coordinates overflow index packing")
        if self.region is not None:
            r = self.region
            if n < r.t_min or n > r.t_max or any(
                    int(a) < la or int(b) > hb
                    for a, b, la, hb in zip(lo, hi, r.lo, r.hi)):
                raise ValueError("request outside field region")

    def _counters(self, n: int, lo, hi) -> np.ndarray:
        """Per-site 64-bit counters (pre-avalanche) on the box grid."""
        with np.errstate(over="ignore"):
            h_n = _mix64(self._key ^ (_U64(n) * _TIME_SALT))
            acc = np.full(tuple(int(b) - int(a) + 1 for a, b in zip(lo, hi)),
                          h_n, dtype=_U64)
            for ax, (a, b) in enumerate(zip(lo, hi)):
                coords = np.arange(int(a), int(b) + 1,
                                   dtype=np.int64).astype(_U64)
                coords = coords * _AX[ax % len(_AX)]
                shape = [1] * len(lo)
                shape[ax] = -1
                acc = acc + coords.reshape(shape)
        return acc

    def omega_box(self, n: int, lo, hi) -> np.ndarray:
        """omega on the closed coordinate box at time n (C-order grid)."""
        self._check(n, lo, hi)
        acc = self._counters(n, lo, hi)
        if self.law.kind == "rademacher":
            if _sign_sites is not None:
                return _sign_sites(acc.ravel(), 1.0, -1.0).reshape(acc.shape)
            return np.where(_mix64(acc) >> _U64(63), 1.0, -1.0)
        if _gauss_sites is not None:
            return _gauss_sites(acc.ravel(), 0.0, 0.0, False).reshape(acc.shape)
        h = _mix64(acc)
        u1 = _to_unit(h)
        u2 = _to_unit(_mix64(h ^ _STREAM2))
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def weights_box(self, n: int, lo, hi, beta: float, lam: float) -> np.ndarray:
        """exp(beta*omega - lam) on the box; fused with generation."""
        self._check(n, lo, hi)
        acc = self._counters(n, lo, hi)
        if self.law.kind == "rademacher":
            wp, wm = math.exp(beta - lam), math.exp(-beta - lam)
            if _sign_sites is not None:
                return _sign_sites(acc.ravel(), wp, wm).reshape(acc.shape)
            return np.where(_mix64(acc) >> _U64(63), wp, wm)
        if _gauss_sites is not None:
            return _gauss_sites(acc.ravel(), beta, lam, True).reshape(acc.shape)
        h = _mix64(acc)
        u1 = _to_unit(h)
        u2 = _to_unit(_mix64(h ^ _STREAM2))
        g = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return np.exp(beta * g - lam)

    def omega_centered(self, n: int, radius: int, center=None) -> np.ndarray:
        d = len(center) if center is not None else len(self.region.lo) if self.region else 3
        c = center if center is not None else (0,) * d
        lo = tuple(int(ci) - radius for ci in c)
        hi = tuple(int(ci) + radius for ci in c)
        return self.omega_box(n, lo, hi)

    def omega_at(self, n: int, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        vals = np.array([
            self.omega_box(n, tuple(p), tuple(p)).reshape(()) for p in pts])
        return vals[0] if single else vals


def sample_field(law: DisorderLaw, master_seed: int, replica_id: int,
                 region: Region | None = None) -> DisorderField:
    if region is not None:
        for a, b in zip(region.lo, region.hi):
            if abs(int(a)) >= _COORD_LIMIT or abs(int(b)) >= _COORD_LIMIT:
                raise ValueError("region overflows index packing")
        if region.t_max >= _COORD_LIMIT:
            raise ValueError("region overflows index packing")
    return DisorderField(law, master_seed, replica_id, region)
