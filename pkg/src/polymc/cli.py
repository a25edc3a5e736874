"""Command-line interface.

Subcommands:
  kernels    walk-kernel reference numbers (return probabilities, pi_d)
  analytics  exact variance identities and the limiting variance
  simulate   Monte Carlo replicas -> JSONL records + summary JSON
  oracle     small-system exact-enumeration equality checks
  diagnose   window/tail decomposition trend tables -> CSV
  report     verdicts from previously produced outputs (nonzero on failure)
  dump-field one replica's partition-function field as CSV

All numbers from every subcommand are a pure function of the configuration
and master seed; wall-clock metadata is isolated to sidecar files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import chaos, diagnostics, disorder, engine, estimator, oracle, stats, walks
from .config import ConfigError, ExperimentConfig, from_mapping, load_config

_OUT_ENV = "POLYMC_OUT"


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    over = {}
    if args.replicas is not None:
        over["replicas"] = args.replicas
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.threads is not None:
        over["threads"] = args.threads
    out = args.out or os.environ.get(_OUT_ENV)
    if out:
        over["out_dir"] = out
    if over:
        from dataclasses import asdict
        data = asdict(cfg)
        data["phi"] = dict(data["phi"])
        data.update(over)
        cfg = from_mapping(data)
    return cfg


def _summary_path(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.out_dir, f"summary_{cfg.config_hash()}.json")


def cmd_kernels(cfg, args) -> int:
    d = cfg.d
    ser = walks.return_series(d)
    print(f"d = {d}")
    print(f"pi_d              = {ser.pi_d:.10f}  (+- {ser.pi_error:.2e})")
    print(f"R_inf             = {ser.r_inf:.10f}")
    q = np.diff(ser.partial, prepend=0.0)
    for n in (1, 2, 3, 5, 10):
        if n <= ser.n_max:
            print(f"q_{2 * n}(0)          = {q[n - 1]:.12e}")
    law = cfg.law_object()
    bc = disorder.beta_l2(law, d)
    print(f"beta_L2 ({cfg.law}) = {bc:.10f}")
    return 0


def cmd_analytics(cfg, args) -> int:
    law = cfg.law_object()
    beta = cfg.beta_value()
    phi = cfg.phi_object()
    print(f"law = {cfg.law}, beta = {beta:.10f}, phi = {dict(cfg.phi)}")
    lim = chaos.limit_variance(cfg.d, law, beta, phi)
    print(f"limit variance      = {lim.value:.10e} "
          f"(quadrature err {lim.quadrature_error:.1e})")
    for n in cfg.n_grid:
        ev = chaos.exact_variance(cfg.d, law, beta, n, phi)
        gap = abs(ev - lim.value) / lim.value if lim.value else float("nan")
        print(f"N = {n:5d}: exact variance = {ev:.10e}   rel gap to "
              f"limit = {gap:.4f}")
    return 0


def cmd_simulate(cfg, args) -> int:
    summary = estimator.run_monte_carlo(cfg, resume=args.resume)
    out = {"schema": 1, "config": cfg.config_hash(),
           "master_seed": cfg.master_seed, "replicas": cfg.replicas,
           "beta": cfg.beta_value(), "sizes": {}}
    law = cfg.law_object()
    phi = cfg.phi_object()
    beta = cfg.beta_value()
    for n in cfg.n_grid:
        entry = {"truncation_bound": summary.truncation_bound[n]}
        if n in summary.linear:
            ms = stats.moment_summary(summary.linear[n], seed=cfg.master_seed)
            entry["linear"] = {"mean": ms.mean, "variance": ms.variance,
                               "skewness": ms.skewness,
                               "excess_kurtosis": ms.excess_kurtosis}
            entry["exact_variance"] = chaos.exact_variance(
                cfg.d, law, beta, n, phi)
        if n in summary.log_sums and cfg.replicas >= 50:
            lf = summary.log_field(n, cfg.d)
            entry["log"] = {"variance": float(np.var(lf, ddof=1))}
        if n in summary.tail:
            entry["tail"] = {"mean": float(summary.tail[n].mean()),
                             "variance": float(np.var(summary.tail[n],
                                                      ddof=1))}
        out["sizes"][str(n)] = entry
    with open(_summary_path(cfg), "w") as fh:
        json.dump(out, fh, sort_keys=True, indent=1)
    print(f"wrote {estimator._records_path(cfg)}")
    print(f"wrote {_summary_path(cfg)}")
    return 0


def cmd_oracle(cfg, args) -> int:
    """Exact-enumeration equality checks on small systems."""
    law = cfg.law_object()
    beta = min(cfg.beta_value(), 0.5)
    d = cfg.d
    failures = 0

    for n in (2, 3, 4):
        ref = oracle.exact_joint_moment(((0,) * d,) * 2, n, law, beta)
        ren = chaos.overlap_mgf(d, law, beta, n).values[n]
        ok = abs(ref - ren) < 1e-10
        failures += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] E[Z_{n}^2]: enumeration "
              f"{ref:.12f} vs renewal {ren:.12f}")

    econf = engine.EngineConfig(d, 3, beta, law, query_radius=1, padding=3)
    dis = disorder.DisorderField(law, cfg.master_seed, 1)
    fld = engine.partition_field(econf, dis)
    worst = 0.0
    for x in ((0,) * d, (1,) + (0,) * (d - 1)):
        brute = oracle.brute_partition(x, 3, d, law, beta, dis)
        got = fld.values[tuple(c + 1 for c in x)]
        worst = max(worst, abs(brute - got))
    ok = worst < 1e-12
    failures += not ok
    print(f"[{'PASS' if ok else 'FAIL'}] engine vs path enumeration, "
          f"max |diff| = {worst:.2e}")
    return 1 if failures else 0


def cmd_diagnose(cfg, args) -> int:
    rows = []
    for n in cfg.n_grid:
        s = diagnostics.collect_samples(cfg, n)
        rows.append({"n": n,
                     "remainder_norm": diagnostics.remainder_norm(s),
                     "factorization_residual":
                         diagnostics.factorization_residual(s)})
        print(f"N = {n:5d}: remainder_norm = {rows[-1]['remainder_norm']:.6e}"
              f"  factorization_residual = "
              f"{rows[-1]['factorization_residual']:.6e}")
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, f"diagnose_{cfg.config_hash()}.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=["n", "remainder_norm",
                                            "factorization_residual"])
        wr.writeheader()
        wr.writerows(rows)
    print(f"wrote {path}")
    return 0


def cmd_report(cfg, args) -> int:
    path = _summary_path(cfg)
    if not os.path.exists(path):
        print(f"error: no samples found for config hash "
              f"{cfg.config_hash()} (expected {path}); run `simulate` first",
              file=sys.stderr)
        return 2
    with open(path) as fh:
        summary = json.load(fh)
    failures = 0
    for key, entry in sorted(summary["sizes"].items(), key=lambda kv: int(kv[0])):
        if "linear" not in entry:
            continue
        got = entry["linear"]["variance"]
        want = entry["exact_variance"]
        se = got * math.sqrt(2.0 / max(summary["replicas"] - 1, 1))
        ok = abs(got - want) <= 3.0 * se
        failures += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] N = {key}: sample variance "
              f"{got:.6e} vs exact {want:.6e} (3 SE = {3 * se:.2e})")
    if failures:
        print(f"{failures} check(s) failed", file=sys.stderr)
    return 1 if failures else 0


def cmd_dump_field(cfg, args) -> int:
    law = cfg.law_object()
    phi = cfg.phi_object()
    n = args.n or cfg.n_grid[0]
    econf = engine.EngineConfig(cfg.d, n, cfg.beta_value(), law,
                                query_radius=phi.lattice_radius(n),
                                padding=cfg.padding)
    dis = disorder.DisorderField(law, cfg.master_seed,
                                 estimator.stream_id(args.replica, n))
    fld = engine.partition_field(econf, dis)
    r = fld.query_radius
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir,
                        f"field_{cfg.config_hash()}_n{n}_r{args.replica}.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{i}" for i in range(cfg.d)] + ["z"])
        for idx in np.ndindex(fld.values.shape):
            wr.writerow([i - r for i in idx] + [repr(fld.values[idx])])
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "kernels": cmd_kernels,
    "analytics": cmd_analytics,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "diagnose": cmd_diagnose,
    "report": cmd_report,
    "dump-field": cmd_dump_field,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="polymc",
        description="Directed-polymer partition-function simulation and "
                    "verification suite")
    sub = p.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--replicas", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--resume", action="store_true")
        if name == "dump-field":
            sp.add_argument("--n", type=int, default=None)
            sp.add_argument("--replica", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return _COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
