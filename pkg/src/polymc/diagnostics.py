"""Localization diagnostics: window decomposition, remainder norms,
tail factorization, left tails, and moment stability of the field.

The partition function splits as Z = Z^A + Zhat^A, where Z^A keeps only
disorder inside the space-time window A around the start point.  With the
ratio r = Zhat^A / Z^A this gives the exact identity

    log Z = log Z^A + log(1 + r),       O = log(1 + r) - r,

and the remainder O, centered across replicas and averaged against phi,
should vanish as N grows.  The tail-factorization residual compares r with
Z^tail - 1, where Z^tail keeps only disorder at times beyond N^rho.  All
convergence statements are tested as monotone trends over an N-grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import disorder, engine
from .config import ExperimentConfig
from .estimator import FLAT_EXPONENT, stream_id


@dataclass(frozen=True)
class WindowSpec:
    """Space-time window exponents and their lattice geometry at size N."""
    eps: float = 0.9
    alpha: float = 0.05

    def geometry(self, n_steps: int) -> tuple:
        """(time cut, site radius); raises on inadmissible exponents."""
        return engine.window_geometry(n_steps, self.eps, self.alpha)


@dataclass(frozen=True)
class DecompositionRecord:
    """Window decomposition of one field value."""
    x: tuple
    z: float            # full partition function
    z_window: float     # Z^A, disorder kept inside the window only
    z_hat: float        # Z - Z^A
    ratio: float        # z_hat / z_window
    remainder: float    # log(1 + ratio) - ratio
    z_tail: float       # disorder kept at times > N^rho only
    gamma: float        # concentration exponent of the disorder law

    def log_identity_gap(self) -> float:
        return abs(math.log(self.z) - math.log(self.z_window)
                   - math.log1p(self.ratio))


def decomposition(x, config: engine.EngineConfig, dis, window: WindowSpec,
                  rho: float) -> DecompositionRecord:
    """Exact window decomposition of Z at a single start site."""
    if rho <= window.eps:
        raise engine.EngineError(
            "rho must exceed eps: the tail slab must start after the "
            "window time cut")
    x = tuple(int(c) for c in np.atleast_1d(x))
    cache = dis if isinstance(dis, engine.WeightCache) \
        else engine.WeightCache(config, dis)
    qcfg = config if config.query_radius >= max(map(abs, x)) else \
        engine.EngineConfig(config.d, config.n_steps, config.beta, config.law,
                            query_radius=max(map(abs, x)),
                            padding=config.padding)
    idx = tuple(c + qcfg.query_radius for c in x)
    z = float(engine.partition_field(qcfg, cache).values[idx])
    zt = float(engine.partition_field(qcfg, cache, mask="tail",
                                      rho=rho).values[idx])
    za = engine.window_partition(x, qcfg, cache, window.eps, window.alpha)
    zhat = z - za
    r = zhat / za
    return DecompositionRecord(x, z, za, zhat, r, math.log1p(r) - r, zt,
                               config.law.gamma)


# ---------------------------------------------------------------------------
# replica sample collection
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticSamples:
    """Per-replica field values on the test-function support sites."""
    n_steps: int
    d: int
    sites: np.ndarray       # (S, d) lattice offsets
    phi_weights: np.ndarray  # (S,) values of phi_N on the sites
    z: np.ndarray           # (R, S) full field
    z_window: np.ndarray    # (R, S) window field Z^A
    z_tail: np.ndarray      # (R, S) tail field


def collect_samples(cfg: ExperimentConfig, n_steps: int,
                    replicas: int | None = None) -> DiagnosticSamples:
    """Run full, window, and tail sweeps on shared disorder for every
    replica, at every lattice site in the test-function support."""
    law = cfg.law_object()
    phi = cfg.phi_object()
    beta = cfg.beta_value()
    R = cfg.replicas if replicas is None else replicas
    grid, rad = phi.lattice_values(n_steps)
    offs = np.stack(np.meshgrid(*[np.arange(-rad, rad + 1)] * cfg.d,
                                indexing="ij"), axis=-1).reshape(-1, cfg.d)
    w = grid.reshape(-1)
    keep = w != 0.0
    offs, w = offs[keep], w[keep]
    econf = engine.EngineConfig(cfg.d, n_steps, beta, law,
                                query_radius=rad, padding=cfg.padding)
    wspec = WindowSpec(cfg.eps, cfg.alpha)
    wspec.geometry(n_steps)  # fail early on inadmissible exponents

    S = len(offs)
    z = np.empty((R, S))
    zw = np.empty((R, S))
    zt = np.empty((R, S))
    flat = tuple((offs + rad).T)
    for r_id in range(R):
        dis = disorder.DisorderField(law, cfg.master_seed,
                                     stream_id(r_id, n_steps))
        cache = engine.WeightCache(econf, dis)
        z[r_id] = engine.partition_field(econf, cache).values[flat]
        zt[r_id] = engine.partition_field(econf, cache, mask="tail",
                                          rho=cfg.rho).values[flat]
        zw[r_id] = engine.window_partition(offs, econf, cache,
                                           wspec.eps, wspec.alpha)
    return DiagnosticSamples(n_steps, cfg.d, offs, w, z, zw, zt)


# ---------------------------------------------------------------------------
# aggregate diagnostics
# ---------------------------------------------------------------------------

def remainder_norm(samples: DiagnosticSamples) -> float:
    """E| N^{(d-2)/4} sum_x phi_N(x) (O(x) - mean_R O(x)) | with
    O = log(1+r) - r, the remainder of the log decomposition."""
    if samples.z.shape[0] < 100:
        raise ValueError("remainder_norm needs at least 100 replicas")
    r = (samples.z - samples.z_window) / samples.z_window
    o = np.log1p(r) - r
    o = o - o.mean(axis=0)
    scale = samples.n_steps ** FLAT_EXPONENT(samples.d)
    return float(np.mean(np.abs(scale * (o @ samples.phi_weights))))


def factorization_residual(samples: DiagnosticSamples) -> float:
    """E| N^{(d-2)/4} sum_x phi_N(x) ( r(x) - (Z^tail(x) - 1) ) |, the
    distance from the asymptotic factorization Zhat^A ~ Z^A (Z^tail - 1)."""
    r = (samples.z - samples.z_window) / samples.z_window
    resid = r - (samples.z_tail - 1.0)
    scale = samples.n_steps ** FLAT_EXPONENT(samples.d)
    return float(np.mean(np.abs(scale * (resid @ samples.phi_weights))))


def origin_samples(cfg: ExperimentConfig, n_steps: int, replicas: int,
                   mask: str = "full") -> np.ndarray:
    """Z^mask at the origin for `replicas` independent disorder streams;
    mask is 'full', 'tail', or 'window'."""
    law = cfg.law_object()
    beta = cfg.beta_value()
    econf = engine.EngineConfig(cfg.d, n_steps, beta, law,
                                query_radius=0, padding=cfg.padding)
    out = np.empty(replicas)
    origin = (0,) * cfg.d
    for r_id in range(replicas):
        dis = disorder.DisorderField(law, cfg.master_seed,
                                     stream_id(r_id, n_steps))
        if mask == "full":
            out[r_id] = engine.partition_field(econf, dis).at_origin()
        elif mask == "tail":
            out[r_id] = engine.partition_field(econf, dis, mask="tail",
                                               rho=cfg.rho).at_origin()
        elif mask == "window":
            out[r_id] = engine.window_partition(origin, econf, dis,
                                                cfg.eps, cfg.alpha)
        else:
            raise ValueError(f"unknown mask {mask!r}")
    return out


@dataclass(frozen=True)
class TailCurve:
    t: np.ndarray
    survival: np.ndarray       # P(log Z <= -t)
    resolution: float          # smallest reliably probed probability, 10/R
    below_resolution: np.ndarray  # flags: estimate under the resolution


def left_tail_curve(z_samples, t_grid) -> TailCurve:
    """Empirical survival P(log Z <= -t) over a t-grid, with estimates
    below the 10/R resolution flagged rather than trusted."""
    z = np.asarray(z_samples, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("left tail of log Z needs positive samples")
    logz = np.log(z)
    t = np.asarray(t_grid, dtype=np.float64)
    surv = np.array([np.mean(logz <= -ti) for ti in t])
    res = 10.0 / z.size
    return TailCurve(t, surv, res, surv < res)


@dataclass(frozen=True)
class MomentEstimate:
    n_steps: int
    value: float
    se: float


def moment_stability(z_by_n: dict, p: float, sign: int = -1) -> list:
    """E[Z^{sign*p}] with standard errors across an N-grid, from origin
    samples keyed by size.  sign=-1 probes negative moments, +1 positive."""
    if sign not in (-1, 1):
        raise ValueError("sign must be -1 or +1")
    out = []
    for n in sorted(z_by_n):
        z = np.asarray(z_by_n[n], dtype=np.float64)
        if z.size < 1000:
            raise ValueError("moment_stability needs at least 1000 replicas")
        v = z ** (sign * p)
        out.append(MomentEstimate(n, float(v.mean()),
                                  float(v.std(ddof=1) / np.sqrt(v.size))))
    return out


def stable_within(estimates: list, n_se: float = 3.0) -> bool:
    """True when every pair of estimates agrees within n_se joint SEs."""
    for i, a in enumerate(estimates):
        for b in estimates[i + 1:]:
            joint = math.hypot(a.se, b.se)
            if abs(a.value - b.value) > n_se * joint:
                return False
    return True
