"""Partition-function fields by dynamic programming over masked disorder.

The field Z(x) = E_x[ prod_{n=1}^{N} w_n(S_n) ] is computed by the backward
recursion V_{n-1}(y) = (2d)^{-1} sum_e w_n(y+e) V_n(y+e), with per-site
weights w_n(z) = exp(beta*omega(n,z) - cgf(beta)) inside the active mask
and 1 outside.  Masks: the full lattice, a space-time window around a
start point (time <= N^eps, sup-norm radius < N^{eps/2+alpha}), a tail
slab (N^rho, N] x Z^d, or an explicit site list.

Spatial truncation freezes rather than kills: a path that leaves the
computational box is assigned weight 1 from then on.  Frozen paths have
disorder-mean weight 1, so E[Z] = 1 holds exactly at any padding; only
fluctuations are (slightly) dampened, controlled by truncation_bound().
Window sweeps use the exact time-varying support radius and need no
truncation at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .disorder import DisorderField, DisorderLaw


class EngineError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    d: int
    n_steps: int
    beta: float
    law: DisorderLaw
    query_radius: int = 0
    padding: int | None = None  # default ceil(5*sqrt(N))

    def __post_init__(self):
        if self.d < 1:
            raise EngineError("d must be >= 1")
        if self.n_steps < 1:
            raise EngineError("n_steps must be >= 1")
        if self.beta < 0:
            raise EngineError("beta must be >= 0")
        if self.query_radius < 0:
            raise EngineError("query_radius must be >= 0")
        if self.padding is not None and self.padding < 1:
            raise EngineError("padding must be >= 1")

    @property
    def pad(self) -> int:
        if self.padding is not None:
            return self.padding
        return math.ceil(5.0 * math.sqrt(self.n_steps))

    @property
    def box_radius(self) -> int:
        # no path from the query box travels farther than n_steps
        return self.query_radius + min(self.pad, self.n_steps)

    def truncation_bound(self) -> float:
        """Bound on the probability that a path is frozen (union over the
        2d one-sided axis exits, sub-Gaussian tail per axis); 0 when the
        box is exact."""
        if self.pad >= self.n_steps:
            return 0.0
        b = 2.0 * self.d * math.exp(-self.pad ** 2 / (2.0 * self.n_steps))
        return min(1.0, b)


@dataclass
class PartitionField:
    """Z-values on the centered query box, C-order over (2Q+1)^d sites."""
    values: np.ndarray
    query_radius: int
    config: EngineConfig
    mask: str
    truncation_bound: float

    def at_origin(self) -> float:
        idx = (self.query_radius,) * self.config.d
        return float(self.values[idx])


class WeightCache:
    """Per-replica cache of weight slices w_n on centered boxes.

    Slices are grown on demand; per-site purity of the disorder makes a
    regenerated larger box bit-identical on the overlap."""

    def __init__(self, config: EngineConfig, field: DisorderField):
        self.config = config
        self.field = field
        self._lam = config.law.cgf(config.beta) if config.beta > 0 else 0.0
        self._slices: dict[int, tuple[int, np.ndarray]] = {}

    def weights(self, n: int, radius: int) -> np.ndarray:
        cfg = self.config
        cached = self._slices.get(n)
        if cached is None or cached[0] < radius:
            if cfg.beta == 0:
                arr = np.ones((2 * radius + 1,) * cfg.d)
            else:
                arr = self.field.weights_box(n, (-radius,) * cfg.d,
                                             (radius,) * cfg.d,
                                             cfg.beta, self._lam)
            self._slices[n] = (radius, arr)
            cached = self._slices[n]
        r0, arr = cached
        if r0 == radius:
            return arr
        sl = (slice(r0 - radius, r0 + radius + 1),) * cfg.d
        return arr[sl]


def _neighbor_mean(P: np.ndarray, d: int, two_d: int) -> np.ndarray:
    """Mean over the 2d lattice neighbors; input has one ghost layer on
    each side of each of the trailing d axes, output drops the ghosts."""
    nd = P.ndim
    core = [slice(None)] * (nd - d) + [slice(1, -1)] * d
    out = None
    for ax in range(nd - d, nd):
        for off in (0, 2):
            sl = list(core)
            sl[ax] = slice(off, P.shape[ax] - 2 + off)
            piece = P[tuple(sl)]
            out = piece.copy() if out is None else out + piece
    return out * (1.0 / two_d)


def _sweep(config: EngineConfig, wcache: WeightCache, active) -> np.ndarray:
    """Backward DP on the fixed box, freezing paths at the boundary;
    active(n) -> bool says whether slice n carries disorder weights."""
    d, R = config.d, config.box_radius
    L = 2 * R + 1
    V = np.ones((L,) * d)
    P = np.ones((L + 2,) * d)
    core = (slice(1, -1),) * d
    for n in range(config.n_steps, 0, -1):
        if active(n) and config.beta != 0:
            P[core] = wcache.weights(n, R) * V
        else:
            P[core] = V
        V = _neighbor_mean(P, d, 2 * d)
    Q = config.query_radius
    sl = (slice(R - Q, R + Q + 1),) * d
    return V[sl]


def partition_field(config: EngineConfig, disorder: DisorderField | WeightCache,
                    mask: str = "full", rho: float | None = None,
                    region=None) -> PartitionField:
    """Z-field on the query box under the given mask.

    mask: "full" | "tail" (needs rho in (0,1); active times (N^rho, N]) |
    "region" (explicit iterable of (n, site-tuple) carrying disorder).
    """
    wcache = disorder if isinstance(disorder, WeightCache) \
        else WeightCache(config, disorder)
    if mask == "full":
        vals = _sweep(config, wcache, lambda n: True)
    elif mask == "tail":
        if rho is None or not 0.0 < rho < 1.0:
            raise EngineError("tail mask needs rho in (0, 1)")
        n0 = int(math.floor(config.n_steps ** rho + 1e-9))
        vals = _sweep(config, wcache, lambda n: n > n0)
    elif mask == "region":
        if region is None:
            raise EngineError("region mask needs an explicit region")
        vals = _region_sweep(config, wcache, region)
    else:
        raise EngineError(f"unknown mask {mask!r}")
    return PartitionField(vals, config.query_radius, config, mask,
                          config.truncation_bound())


def tail_partition(config: EngineConfig, disorder, rho: float) -> PartitionField:
    """Z^tail: only disorder at times in (N^rho, N] is active."""
    return partition_field(config, disorder, mask="tail", rho=rho)


def _region_sweep(config, wcache, region) -> np.ndarray:
    d, R = config.d, config.box_radius
    by_time: dict[int, list] = {}
    for n, site in region:
        if not 1 <= n <= config.n_steps:
            raise EngineError("region time index outside [1, N]")
        if any(abs(c) > R for c in site):
            raise EngineError("region site outside the computational box")
        by_time.setdefault(int(n), []).append(tuple(int(c) for c in site))
    L = 2 * R + 1
    V = np.ones((L,) * d)
    P = np.ones((L + 2,) * d)
    core = (slice(1, -1),) * d
    for n in range(config.n_steps, 0, -1):
        sites = by_time.get(n)
        if sites and config.beta != 0:
            w = np.ones((L,) * d)
            full = wcache.weights(n, R)
            for s in sites:
                idx = tuple(c + R for c in s)
                w[idx] = full[idx]
            P[core] = w * V
        else:
            P[core] = V
        V = _neighbor_mean(P, d, 2 * d)
    Q = config.query_radius
    sl = (slice(R - Q, R + Q + 1),) * d
    return V[sl]


# ---------------------------------------------------------------------------
# window fields
# ---------------------------------------------------------------------------

def window_geometry(n_steps: int, eps: float, alpha: float) -> tuple[int, int]:
    """(time cut floor(N^eps), site radius = largest integer < N^{eps/2+alpha})."""
    if not 7.0 / 8.0 < eps < 1.0:
        raise EngineError("eps must lie in (7/8, 1)")
    if not 0.0 < alpha < eps / 2.0:
        raise EngineError("alpha must lie in (0, eps/2)")
    n_eps = int(math.floor(n_steps ** eps + 1e-9))
    r_w = int(math.ceil(n_steps ** (eps / 2.0 + alpha) - 1e-9)) - 1
    if n_eps < 2 or r_w < 1:
        raise EngineError("degenerate window (time cut < 2 or radius < 1)")
    return n_eps, r_w


def window_partition(x, config: EngineConfig,
                     disorder: DisorderField | WeightCache,
                     eps: float, alpha: float):
    """Z^A(x): disorder restricted to {(n,z): n <= N^eps, |x-z|_inf < N^{eps/2+alpha}}.

    x may be a single site (returns float) or an (nx, d) array of sites
    (returns a vector).  Exact: the sweep carries the full influence
    region of the window, which shrinks linearly away from the time cut.
    """
    wcache = disorder if isinstance(disorder, WeightCache) \
        else WeightCache(config, disorder)
    xs = np.asarray(x, dtype=np.int64)
    single = xs.ndim == 1
    if single:
        xs = xs[None, :]
    if xs.shape[1] != config.d:
        raise EngineError("start sites must have d coordinates")
    out = np.empty(len(xs))
    for lo in range(0, len(xs), 32):
        out[lo:lo + 32] = _window_batch(xs[lo:lo + 32], config, wcache,
                                        eps, alpha)
    return float(out[0]) if single else out


def _window_batch(xs, config, wcache, eps, alpha) -> np.ndarray:
    d = config.d
    n_eps, r_w = window_geometry(config.n_steps, eps, alpha)
    if config.beta == 0:
        return np.ones(len(xs))
    # exact support radius of (V_n - 1) restricted to what can reach x
    u = [min(n, r_w + n_eps - n) for n in range(n_eps + 1)]
    x_max = int(np.abs(xs).max())
    glob_r = x_max + r_w
    nx = len(xs)
    V = np.ones((nx,) + (2 * u[n_eps] + 1,) * d)
    for n in range(n_eps, 0, -1):
        r_out = u[n - 1]
        r_in = r_out + 1
        # V_n is exactly 1 beyond its stored radius: extend with ones
        P = np.ones((nx,) + (2 * r_in + 1,) * d)
        r_v = min(u[n], r_in)
        ins = (slice(None),) + (slice(r_in - r_v, r_in + r_v + 1),) * d
        src = (slice(None),) + (slice(u[n] - r_v, u[n] + r_v + 1),) * d
        P[ins] = V[src]
        # apply disorder weights on the window block |z - x| <= min(r_w, r_in)
        m = min(r_w, r_in)
        wsl = wcache.weights(n, glob_r)
        blk = (slice(None),) + (slice(r_in - m, r_in + m + 1),) * d
        P[blk] *= _gather_boxes(wsl, glob_r, xs, m)
        V = _neighbor_mean_batch(P, d)
    return V.reshape(nx)


def _gather_boxes(slab: np.ndarray, slab_radius: int, centers: np.ndarray,
                  m: int) -> np.ndarray:
    """Per-center (2m+1)^d subboxes of a centered slab, stacked on axis 0."""
    d = centers.shape[1]
    off = np.arange(-m, m + 1)
    idx = [centers[:, a].reshape((-1,) + (1,) * d)
           + off.reshape((1,) * (a + 1) + (-1,) + (1,) * (d - 1 - a))
           + slab_radius
           for a in range(d)]
    return slab[tuple(idx)]


def _neighbor_mean_batch(P: np.ndarray, d: int) -> np.ndarray:
    return _neighbor_mean(P, d, 2 * d)
