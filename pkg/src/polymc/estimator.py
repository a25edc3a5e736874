"""Monte Carlo estimation of the averaged partition-function field.

The central observable is the flat-scaled averaged field

    X_N = N^{(d-2)/4} * sum_x (Z_N(x) - 1) phi_N(x),

with phi_N(x) = phi(x / sqrt(N)) N^{-d/2}, whose distribution approaches a
centered Gaussian with the variance computed in :mod:`polymc.chaos`.  The
same scaling applied to the across-replica-centered log field and to the
tail-restricted field gives the companion observables.

`run_monte_carlo` drives full experiments from an
:class:`polymc.config.ExperimentConfig`: one disorder stream per
(system size, replica) pair, a JSONL record per replica with the raw
observables, checkpoint/resume by re-reading those records, and a summary
with the collected sample arrays.  All numbers are a pure function of the
configuration hash and master seed; timestamps live in a sidecar file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import disorder, engine
from .config import ExperimentConfig
from .testfunc import TestFunction

FLAT_EXPONENT = lambda d: (d - 2) / 4.0  # noqa: E731

# Disorder streams for distinct system sizes must be independent even at
# the same replica index: fold the size into the high bits of the stream id.
_SIZE_STRIDE = 1 << 32


def stream_id(replica: int, n_steps: int) -> int:
    return int(replica) + _SIZE_STRIDE * int(n_steps)


# ---------------------------------------------------------------------------
# single-field estimators
# ---------------------------------------------------------------------------

def averaged_field(field: engine.PartitionField, phi: TestFunction) -> float:
    """Flat-scaled, phi-averaged, centered partition function.

    Requires the field's query box to cover the lattice support of phi at
    this system size.
    """
    n = field.config.n_steps
    d = field.config.d
    grid, r = phi.lattice_values(n)
    if r > field.query_radius:
        raise ValueError(
            f"query_radius {field.query_radius} is too small for the test "
            f"function support (needs {r} at size {n})")
    z = _central_crop(field.values, field.query_radius, r, d)
    return float(n ** FLAT_EXPONENT(d) * np.sum((z - 1.0) * grid))


def log_weighted_sum(field: engine.PartitionField, phi: TestFunction) -> float:
    """sum_x phi_N(x) log Z(x), the per-replica ingredient of the centered
    log-field observable.  Requires a strictly positive field."""
    n = field.config.n_steps
    d = field.config.d
    grid, r = phi.lattice_values(n)
    if r > field.query_radius:
        raise ValueError(
            f"query_radius {field.query_radius} is too small for the test "
            f"function support (needs {r} at size {n})")
    z = _central_crop(field.values, field.query_radius, r, d)
    if np.any(z <= 0.0):
        raise ValueError("log field undefined: nonpositive Z value present")
    return float(np.sum(grid * np.log(z)))


def log_averaged_field(log_sums: np.ndarray, n_steps: int, d: int) -> np.ndarray:
    """Across-replica-centered, flat-scaled log-field samples.

    Centering log Z(x) by its empirical across-replica mean c(x) and then
    averaging against phi_N is identical to centering the phi-weighted sums
    t_r = sum_x phi_N(x) log Z_r(x) by their replica mean, so only the t_r
    need to be kept.
    """
    t = np.asarray(log_sums, dtype=np.float64)
    if t.size < 50:
        raise ValueError("empirical centering needs at least 50 replicas")
    return n_steps ** FLAT_EXPONENT(d) * (t - t.mean())


def _central_crop(values: np.ndarray, r_in: int, r_out: int, d: int) -> np.ndarray:
    if r_out == r_in:
        return values
    sl = (slice(r_in - r_out, r_in + r_out + 1),) * d
    return values[sl]


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

@dataclass
class MCSummary:
    """Collected per-size sample arrays from a Monte Carlo run."""
    config_hash: str
    replicas: int
    linear: dict = field(default_factory=dict)     # n -> (R,) averaged field
    log_sums: dict = field(default_factory=dict)   # n -> (R,) phi-weighted log sums
    tail: dict = field(default_factory=dict)       # n -> (R,) tail averaged field
    z_origin: dict = field(default_factory=dict)   # n -> (R,) Z at the origin
    truncation_bound: dict = field(default_factory=dict)  # n -> float

    def log_field(self, n: int, d: int) -> np.ndarray:
        return log_averaged_field(self.log_sums[n], n, d)


def replica_record(cfg: ExperimentConfig, n_steps: int, replica: int) -> dict:
    """Run all configured sweeps for one (size, replica) pair.

    The full-box and tail sweeps share one cached-disorder pass, so the
    tail observable is computed on the same environment as the linear one.
    """
    law = cfg.law_object()
    phi = cfg.phi_object()
    beta = cfg.beta_value()
    econf = engine.EngineConfig(
        d=cfg.d, n_steps=n_steps, beta=beta, law=law,
        query_radius=phi.lattice_radius(n_steps), padding=cfg.padding)
    dis = disorder.DisorderField(
        law, cfg.master_seed, stream_id(replica, n_steps))
    cache = engine.WeightCache(econf, dis)

    rec = {"n": n_steps, "replica": replica}
    need_linear = "linear" in cfg.observables
    need_log = "log" in cfg.observables
    need_tail = "tail" in cfg.observables

    if need_linear or need_log:
        fld = engine.partition_field(econf, cache)
        rec["z_origin"] = float(fld.at_origin())
        if need_linear:
            rec["linear"] = averaged_field(fld, phi)
        if need_log:
            rec["log_sum"] = log_weighted_sum(fld, phi)
    if need_tail:
        tfld = engine.partition_field(econf, cache, mask="tail", rho=cfg.rho)
        rec["tail"] = averaged_field(tfld, phi)
    return rec


def _records_path(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.out_dir, f"records_{cfg.config_hash()}.jsonl")


def _load_done(path: str, chash: str) -> dict:
    done = {}
    if not os.path.exists(path):
        return done
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("config") == chash:
                done[(rec["n"], rec["replica"])] = rec
    return done


def run_monte_carlo(cfg: ExperimentConfig, resume: bool = False,
                    progress=None) -> MCSummary:
    """Run the configured experiment, writing one JSONL record per
    (size, replica) pair, and return the collected samples.

    With ``resume=True`` existing records for this configuration hash are
    kept and only missing pairs are computed.  The output bytes depend
    only on the configuration; wall-clock metadata goes to a ``.meta.json``
    sidecar.
    """
    import time

    chash = cfg.config_hash()
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = _records_path(cfg)
    done = _load_done(path, chash) if resume else {}
    if not resume and os.path.exists(path):
        os.remove(path)

    jobs = [(n, r) for n in cfg.n_grid for r in range(cfg.replicas)
            if (n, r) not in done]
    t0 = time.time()

    # Stream records to disk as they arrive, flushing every
    # checkpoint_every, so an interrupted run can resume from the file.
    new_records = []
    with open(path, "a") as fh:
        for i, rec in enumerate(_iter_jobs(cfg, jobs)):
            rec["config"] = chash
            new_records.append(rec)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if (i + 1) % cfg.checkpoint_every == 0:
                fh.flush()
                os.fsync(fh.fileno())

    # Rewrite the record file in canonical (n, replica) order so the bytes
    # are reproducible regardless of resume history or parallelism.
    all_recs = dict(done)
    for rec in new_records:
        all_recs[(rec["n"], rec["replica"])] = rec
    with open(path, "w") as fh:
        for key in sorted(all_recs):
            rec = all_recs[key]
            rec["config"] = chash
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    with open(path.replace(".jsonl", ".meta.json"), "w") as fh:
        json.dump({"config": chash, "wall_seconds": time.time() - t0,
                   "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ",
                                                time.gmtime())}, fh)

    return summarize_records(cfg, list(all_recs.values()))


def _iter_jobs(cfg: ExperimentConfig, jobs):
    if cfg.threads > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        from functools import partial
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            yield from pool.map(partial(_job, cfg), jobs, chunksize=8)
        return
    for job in jobs:
        yield _job(cfg, job)


def _job(cfg: ExperimentConfig, job) -> dict:
    n, r = job
    return replica_record(cfg, n, r)


def summarize_records(cfg: ExperimentConfig, records: list) -> MCSummary:
    summary = MCSummary(config_hash=cfg.config_hash(), replicas=cfg.replicas)
    law = cfg.law_object()
    phi = cfg.phi_object()
    beta = cfg.beta_value()
    for n in cfg.n_grid:
        recs = sorted((r for r in records if r["n"] == n),
                      key=lambda r: r["replica"])
        if len(recs) != cfg.replicas:
            raise ValueError(
                f"size {n}: have {len(recs)} records, expected "
                f"{cfg.replicas} (resume incomplete?)")
        for key, store in (("linear", summary.linear),
                           ("log_sum", summary.log_sums),
                           ("tail", summary.tail),
                           ("z_origin", summary.z_origin)):
            if key in recs[0]:
                store[n] = np.array([r[key] for r in recs])
        econf = engine.EngineConfig(
            d=cfg.d, n_steps=n, beta=beta, law=law,
            query_radius=phi.lattice_radius(n), padding=cfg.padding)
        summary.truncation_bound[n] = econf.truncation_bound()
    return summary
