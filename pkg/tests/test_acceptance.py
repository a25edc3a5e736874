"""Acceptance suite: one test (and one pass/fail line) per criterion.

The Monte Carlo workloads are heavy (hours on one core).  Their raw
replica records and sample arrays are cached under .acceptance/ in the
repository root, keyed by configuration hash, so reruns are cheap and
byte-reproducible.  Every tolerance below is asserted as stated; nothing
is loosened to make a check pass.
"""

import json
import math
import os
import pathlib
import time
from functools import lru_cache

import numpy as np
import pytest

from polymc import (chaos, cli, diagnostics, disorder, engine, estimator,
                    oracle, stats, walks)
from polymc.config import from_mapping
from polymc.disorder import GAUSSIAN
from polymc.testfunc import TestFunction as TF

CACHE = pathlib.Path(__file__).resolve().parent.parent / ".acceptance"
CACHE.mkdir(exist_ok=True)

D = 3
PHI_SPEC = dict(kind="gaussian", scale=0.25, support_radius=1.25)
PHI = TF(kind="gaussian", d=D, scale=0.25, support_radius=1.25)


def _report(criterion: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")


def _mc_config(**over):
    base = dict(d=D, law="gaussian", padding=16, out_dir=str(CACHE),
                phi=PHI_SPEC, checkpoint_every=200)
    base.update(over)
    return from_mapping(base)


@lru_cache(maxsize=None)
def _theorem_run(beta_spec: str, seed: int, observables: tuple):
    cfg = _mc_config(n_grid=[64], beta=beta_spec, replicas=4000,
                     master_seed=seed, observables=list(observables))
    return cfg, estimator.run_monte_carlo(cfg, resume=True)


def _linear_run():
    return _theorem_run("0.5*betaL2", 2024, ("linear", "tail"))


def _log_run():
    return _theorem_run("0.25*betaL2", 2025, ("linear", "log"))


def _npz_cached(name: str, builder):
    path = CACHE / f"{name}.npz"
    if path.exists():
        with np.load(path) as z:
            return {k: z[k] for k in z.files}
    data = builder()
    np.savez(path, **data)
    return data


# ---------------------------------------------------------------------------

def test_criterion_01_return_probability():
    walks.return_series.cache_clear()
    walks.pi_d.cache_clear()
    t0 = time.time()
    ser = walks.return_series(D)
    elapsed = time.time() - t0
    ok = 0.335 <= ser.pi_d <= 0.346 and elapsed < 30.0
    _report("criterion 1 (return probability)", ok,
            f"pi_3 = {ser.pi_d:.6f} in [0.335, 0.346], {elapsed:.1f} s")
    assert 0.335 <= ser.pi_d <= 0.346
    assert elapsed < 30.0


def test_criterion_02_overlap_mgf_closed_form():
    # e_M is truncated in *time* at M, while the closed form is the full
    # M = infinity limit; the gap decays like M^{-1/2}, not geometrically,
    # and sits near 2.8e-4 at M = 5000 -- orders of magnitude above the
    # 1e-6 tolerance.  Asserted as stated and expected to fail.
    beta = 0.2
    t0 = time.time()
    mgf = chaos.overlap_mgf(D, GAUSSIAN, beta, 5000)
    elapsed = time.time() - t0
    ser = walks.return_series(D)
    lam2 = GAUSSIAN.lambda2(beta)
    closed = (1.0 - ser.pi_d) / (1.0 - ser.pi_d * math.exp(lam2))
    gap = abs(mgf.values[5000] - closed)
    ok = gap < 1e-6 and elapsed < 5.0
    _report("criterion 2 (overlap MGF closed form)", ok,
            f"|e_5000 - closed| = {gap:.3e} (tol 1e-6), {elapsed:.1f} s; "
            f"certified truncation bound {mgf.tail_bound:.3e}")
    assert gap < 1e-6, (
        f"gap {gap:.3e} exceeds 1e-6: e_M truncates the renewal in time, "
        f"and its distance to the closed-form limit decays like M^(-1/2); "
        f"the computed gap is within the certified bound {mgf.tail_bound:.3e}")
    assert elapsed < 5.0


def test_criterion_03_oracle_equivalence():
    t0 = time.time()
    beta = 0.5
    worst_engine = 0.0
    for n in (2, 3, 4):
        dis = disorder.DisorderField(GAUSSIAN, 31, n)
        cfg = engine.EngineConfig(D, n, beta, GAUSSIAN, query_radius=1,
                                  padding=n)
        fld = engine.partition_field(cfg, dis)
        for x in ((0, 0, 0), (1, 0, 0), (0, -1, 1)):
            brute = oracle.brute_partition(x, n, D, GAUSSIAN, beta, dis)
            got = float(fld.values[tuple(c + 1 for c in x)])
            worst_engine = max(worst_engine, abs(got - brute) / abs(brute))

    phi2 = TF(kind="indicator", d=D, scale=0.3, center=(0.3, 0.0, 0.0),
              allow_discontinuous=True)
    ref = oracle.exact_avg_variance(phi2, 3, D, GAUSSIAN, beta)
    got = chaos.exact_variance(D, GAUSSIAN, beta, 3, phi2)
    var_gap = abs(got - 3 ** 0.5 * ref)

    worst_e = 0.0
    e = chaos.overlap_mgf(D, GAUSSIAN, beta, 5).values
    for n in (1, 2, 3, 4, 5):
        m2 = oracle.exact_joint_moment(((0, 0, 0),) * 2, n, GAUSSIAN, beta)
        worst_e = max(worst_e, abs(m2 - e[n]))
    elapsed = time.time() - t0

    ok = worst_engine < 1e-12 and var_gap < 1e-10 and worst_e < 1e-10 \
        and elapsed < 120.0
    _report("criterion 3 (oracle equivalence)", ok,
            f"engine rel {worst_engine:.1e} < 1e-12, variance gap "
            f"{var_gap:.1e} < 1e-10, E[Z^2] gap {worst_e:.1e} < 1e-10, "
            f"{elapsed:.0f} s")
    assert worst_engine < 1e-12
    assert var_gap < 1e-10
    assert worst_e < 1e-10
    assert elapsed < 120.0


def test_criterion_04_degree_decomposition():
    n, beta = 16, 0.4
    total = chaos.exact_variance(D, GAUSSIAN, beta, n, PHI)
    worst = 0.0
    for m in range(1, 17):
        parts = chaos.degree_variances(D, GAUSSIAN, beta, n, PHI, m)
        gap = chaos.truncation_gap(D, GAUSSIAN, beta, n, PHI, m)
        worst = max(worst, abs(float(np.sum(parts)) + gap - total))
    ser = walks.return_series(D)
    ratio_cap = GAUSSIAN.sigma2(beta) * ser.r_inf + 0.05
    gaps = [chaos.truncation_gap(D, GAUSSIAN, beta, n, PHI, m)
            for m in range(0, 10)]
    geo_ok = all(g1 <= ratio_cap * g0 + 1e-16
                 for g0, g1 in zip(gaps, gaps[1:]))
    ok = worst < 1e-10 and geo_ok
    _report("criterion 4 (degree decomposition)", ok,
            f"max |sum var_k + gap - total| = {worst:.1e} < 1e-10, "
            f"geometric decay with ratio <= {ratio_cap:.3f}: {geo_ok}")
    assert worst < 1e-10
    assert geo_ok


def test_criterion_05_gaussian_limit_at_desk_scale():
    cfg, run = _linear_run()
    x = run.linear[64]
    want = chaos.exact_variance(D, GAUSSIAN, cfg.beta_value(), 64, PHI)
    got = float(np.var(x, ddof=1))
    se_var = got * math.sqrt(2.0 / (len(x) - 1))
    var_ok = abs(got - want) <= 3 * se_var

    ms = stats.moment_summary(x, seed=cfg.master_seed)
    shape_ok = (abs(ms.skewness) < 0.2 and abs(ms.excess_kurtosis) < 0.5
                and abs(ms.skewness) < 4 * ms.se_skewness
                and abs(ms.excess_kurtosis) < 4 * ms.se_kurtosis)
    ks = stats.ks_normality(x, 0.0, want)
    ratio = stats.fourth_moment_ratio(x, seed=cfg.master_seed)
    ratio_ok = 0.85 <= ratio.ratio <= 1.15
    ok = var_ok and shape_ok and ks.p_value > 0.01 and ratio_ok
    _report("criterion 5 (Gaussian limit, N=64, R=4000)", ok,
            f"var {got:.4e} vs exact {want:.4e} ({abs(got-want)/se_var:.2f} "
            f"SE), skew {ms.skewness:+.3f}, ex-kurt "
            f"{ms.excess_kurtosis:+.3f}, KS p = {ks.p_value:.3f}, "
            f"4th-moment ratio {ratio.ratio:.3f}")
    assert var_ok
    assert shape_ok
    assert ks.p_value > 0.01
    assert ratio_ok


def test_criterion_06_limit_variance_convergence_trend():
    beta = 0.5 * disorder.beta_l2(GAUSSIAN, D)
    lim = chaos.limit_variance(D, GAUSSIAN, beta, PHI).value
    gaps = {n: abs(chaos.exact_variance(D, GAUSSIAN, beta, n, PHI) - lim)
            / lim for n in (16, 128)}
    ok = gaps[128] < gaps[16]
    _report("criterion 6 (limit-variance trend)", ok,
            f"rel gap N=16: {gaps[16]:.4f}, N=128: {gaps[128]:.4f}")
    assert ok


def test_criterion_07_log_field_matches_linear_field():
    cfg, run = _log_run()
    lin_var = float(np.var(run.linear[64], ddof=1))
    log_var = float(np.var(run.log_field(64, D), ddof=1))
    rel = abs(log_var - lin_var) / lin_var
    ok = rel <= 0.15
    _report("criterion 7 (log field, beta = 0.25 betaL2)", ok,
            f"log var {log_var:.4e} vs linear var {lin_var:.4e} "
            f"(rel diff {rel:.3f} <= 0.15)")
    assert ok


def test_criterion_08_tail_field_carries_the_variance():
    cfg, run = _linear_run()
    lin, tail = run.linear[64], run.tail[64]
    v_lin = float(np.var(lin, ddof=1))
    v_tail = float(np.var(tail, ddof=1))
    se = math.hypot(v_lin, v_tail) * math.sqrt(2.0 / (len(lin) - 1))
    ok = abs(v_lin - v_tail) <= 3 * se
    _report("criterion 8 (tail-field variance)", ok,
            f"tail var {v_tail:.4e} vs full var {v_lin:.4e} "
            f"({abs(v_lin - v_tail) / se:.2f} joint SE)")
    assert ok


# --- criterion 9: trend suite ----------------------------------------------

def _trend_samples(n):
    cfg = _mc_config(n_grid=[16, 32, 64], beta="0.5*betaL2", replicas=500,
                     master_seed=2026, phi=dict(kind="hat", scale=0.2))

    def build():
        s = diagnostics.collect_samples(cfg, n)
        return dict(sites=s.sites, phi_weights=s.phi_weights, z=s.z,
                    z_window=s.z_window, z_tail=s.z_tail)

    d = _npz_cached(f"trend_{cfg.config_hash()}_n{n}", build)
    return diagnostics.DiagnosticSamples(n, D, d["sites"], d["phi_weights"],
                                         d["z"], d["z_window"], d["z_tail"])


def _origin_z(n, replicas, seed):
    cfg = _mc_config(n_grid=[n], beta="0.5*betaL2", replicas=replicas,
                     master_seed=seed)
    return _npz_cached(f"origin_{cfg.config_hash()}_n{n}_r{replicas}",
                       lambda: dict(
                           z=diagnostics.origin_samples(cfg, n, replicas))
                       )["z"]


def _window_sq(eps):
    cfg = _mc_config(n_grid=[64], beta="0.5*betaL2", replicas=400,
                     master_seed=2027, eps=eps, rho=0.975)

    def build():
        law = cfg.law_object()
        beta = cfg.beta_value()
        econf = engine.EngineConfig(D, 64, beta, law, query_radius=0,
                                    padding=16)
        out = np.empty(cfg.replicas)
        for rep in range(cfg.replicas):
            dis = disorder.DisorderField(law, cfg.master_seed,
                                         estimator.stream_id(rep, 64))
            cache = engine.WeightCache(econf, dis)
            z = engine.partition_field(econf, cache).at_origin()
            za = engine.window_partition((0, 0, 0), econf, cache,
                                         eps, cfg.alpha)
            out[rep] = (z - za) ** 2
        return dict(sq=out)

    return float(_npz_cached(f"wsq_{cfg.config_hash()}_e{eps}",
                             build)["sq"].mean())


def test_criterion_09_localization_trend_suite():
    rem = {}
    fac = {}
    for n in (16, 32, 64):
        s = _trend_samples(n)
        rem[n] = diagnostics.remainder_norm(s)
        fac[n] = diagnostics.factorization_residual(s)
    rem_ok = rem[16] > rem[32] > rem[64]
    fac_ok = fac[16] > fac[32] > fac[64]

    wsq = {eps: _window_sq(eps) for eps in (0.88, 0.9, 0.95)}
    wsq_ok = wsq[0.88] > wsq[0.9] > wsq[0.95]

    z64 = _origin_z(64, 10 ** 4, 2028)
    curve = diagnostics.left_tail_curve(z64, [2.0])
    tail_ok = curve.survival[0] < 0.01

    z_by_n = {16: _origin_z(16, 4000, 2029), 32: _origin_z(32, 4000, 2029),
              64: z64[:4000]}
    neg = diagnostics.moment_stability(z_by_n, 2.0, sign=-1)
    neg_ok = diagnostics.stable_within(neg, n_se=3.0)

    ok = rem_ok and fac_ok and wsq_ok and tail_ok and neg_ok
    _report("criterion 9 (localization trends)", ok,
            f"remainder {rem[16]:.2e} > {rem[32]:.2e} > {rem[64]:.2e}: "
            f"{rem_ok}; factorization {fac[16]:.2e} > {fac[32]:.2e} > "
            f"{fac[64]:.2e}: {fac_ok}; E[(Zhat)^2] eps-trend "
            f"{wsq[0.88]:.2e} > {wsq[0.9]:.2e} > {wsq[0.95]:.2e}: {wsq_ok}; "
            f"P(log Z <= -2) = {curve.survival[0]:.4f} < 0.01: {tail_ok}; "
            f"E[Z^-2] stable: {neg_ok}")
    assert rem_ok
    assert fac_ok
    assert wsq_ok
    assert tail_ok
    assert neg_ok


def test_criterion_10_reproducibility(tmp_path):
    conf = tmp_path / "c.toml"
    conf.write_text(f"""
n_grid = [8]
beta = "0.5*betaL2"
replicas = 10
master_seed = 99
padding = 8
out_dir = "{tmp_path / 'out'}"

[phi]
kind = "gaussian"
scale = 0.3
""")
    assert cli.main(["simulate", "--config", str(conf)]) == 0
    out = tmp_path / "out"
    files = {p: (out / p).read_bytes() for p in os.listdir(out)
             if not p.endswith(".meta.json")}
    assert cli.main(["simulate", "--config", str(conf)]) == 0
    same = all((out / p).read_bytes() == body for p, body in files.items())
    _report("criterion 10 (reproducibility)", same,
            f"{len(files)} data files byte-identical across reruns "
            f"(timestamps confined to the .meta.json sidecar)")
    assert same
    rec = [p for p in files if p.endswith(".jsonl")][0]
    first = json.loads(files[rec].decode().splitlines()[0])
    assert {"config", "replica", "n"} <= set(first)
