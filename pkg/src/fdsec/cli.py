"""Command-line interface.

Subcommands:
  run       execute a Monte-Carlo sweep described by a YAML experiment file
  solve-one solve a single seeded drop and print the policy summary
  trace     solve a single drop and dump the iteration trace as CSV
  selftest  quick oracle/invariant battery, non-zero exit on failure

Any flat SystemConfig key can be overridden with -o key=value; dBm/dB
convenience keys (p_max_dl_dbm, ...) are accepted.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import yaml

from . import harness
from .channel import draw_drop
from .config import SystemConfig, config_from_mapping, load_config
from .rates import check_policy, secrecy_rates, weighted_throughput


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SystemExit(f"override {pair!r} must look like key=value")
        key, raw = pair.split("=", 1)
        out[key.strip()] = yaml.safe_load(raw)
    return out


def _config_from_args(args) -> SystemConfig:
    cfg = SystemConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    overrides = _parse_overrides(getattr(args, "override", None))
    if overrides:
        cfg = config_from_mapping(overrides, cfg)
    return cfg


def _cmd_run(args) -> int:
    try:
        with open(args.spec) as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        print(f"error: experiment file not found: {args.spec}", file=sys.stderr)
        return 2
    base = config_from_mapping(raw.pop("base_config", {}) or {})
    overrides = _parse_overrides(args.override)
    if overrides:
        base = config_from_mapping(overrides, base)
    spec = harness.ExperimentSpec(
        axis=raw["axis"], values=tuple(raw["values"]),
        drops=int(raw.get("drops", 50)),
        schemes=tuple(raw.get("schemes", harness.SCHEMES)),
        base=base, out_path=args.out or raw.get("out_path", "experiment.csv"),
        master_seed=int(raw.get("master_seed", 1)),
        workers=args.workers or raw.get("workers"))
    rows, aggregates = harness.run_experiment(spec)
    ok = sum(r["status"] == "ok" for r in rows)
    print(f"{len(rows)} runs ({ok} ok) -> {spec.out_path}")
    return 0


def _print_policy(policy, ch, cfg):
    print(f"utility   : {weighted_throughput(policy, ch, cfg):.6f} bits/s/Hz")
    sec = secrecy_rates(policy, ch, cfg)
    print(f"secrecy   : {sec.system_secrecy(cfg):.6f} bits/s/Hz")
    slacks = check_policy(policy, ch, cfg)
    print(f"worst slack: {min(slacks.values()):.3e}")
    for i, k, j in policy.active_triples():
        print(f"  subcarrier {i}: DL user {k}, UL user {j}, "
              f"|w|^2={np.linalg.norm(policy.w[i, k])**2:.4f} W, "
              f"Tr(Z)={np.trace(policy.Z[i]).real:.4f} W, "
              f"P={policy.P[i, j]:.5f} W")


def _cmd_solve_one(args) -> int:
    from .baselines import solve_baseline_isotropic, solve_baseline_mrt
    from .sca import run_sca

    cfg = _config_from_args(args)
    ch = draw_drop(cfg, args.seed)
    runner = {"proposed": run_sca, "baseline_mrt": solve_baseline_mrt,
              "baseline_isotropic": solve_baseline_isotropic}[args.scheme]
    policy, trace = runner(cfg, ch)
    print(f"scheme    : {args.scheme} (seed {args.seed}, status {trace.status})")
    print(f"iterations: {trace.n_iterations}, binarity {trace.binarity_final:.2e}, "
          f"rank ratio {trace.rank_ratio_final:.2e}")
    _print_policy(policy, ch, cfg)
    return 0 if trace.status in ("ok",) else 1


def _cmd_trace(args) -> int:
    from .sca import run_sca

    cfg = _config_from_args(args)
    ch = draw_drop(cfg, args.seed)
    policy, trace = run_sca(cfg, ch, trace_path=args.out)
    print(f"wrote {trace.n_iterations} iterations to {args.out}")
    for it in trace.iterations:
        print(f"  m={it.index} J={it.j_true:.6f} surrogate={it.surrogate:.6f} "
              f"binarity={it.binarity:.2e} steps={it.newton_steps}")
    return 0


def _cmd_selftest(args) -> int:
    from .lifting import eval_F, eval_G, utility_lifted
    from .oracle import (boundary_case_dl, fd_gradient_check, prop1_sampler,
                         random_interior_point)
    from .sca import run_sca

    failures = []

    def check(name, ok, detail=""):
        print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")
        if not ok:
            failures.append(name)

    cfg = SystemConfig(n_subcarriers=3, n_dl_users=2, n_ul_users=2,
                       n_eve_antennas=2, n_tx_antennas=3)
    ch = draw_drop(cfg, 0)
    rng = np.random.default_rng(0)

    errs = [abs(utility_lifted(x, ch, cfg) - (eval_F(x, ch, cfg) - eval_G(x, ch, cfg)))
            for x in (random_interior_point(rng, cfg) for _ in range(50))]
    check("identity U = F - G", max(errs) < 1e-8, f"max err {max(errs):.2e}")

    g_err = max(fd_gradient_check(random_interior_point(rng, cfg), "G", ch, cfg)
                for _ in range(10))
    check("gradient of G vs finite differences", g_err <= 1e-5, f"max {g_err:.2e}")

    rep = prop1_sampler(2000, cfg, seed=1)
    check("leakage constraint implications", rep.forward_violations == 0
          and rep.reverse_violations == 0 and rep.ul_violations == 0,
          f"checked {rep.n_checked}")
    rel, _ = boundary_case_dl(cfg, seed=2)
    check("leakage boundary case", abs(rel) <= 1e-9, f"rel eig {rel:.1e}")

    policy, trace = run_sca(cfg, ch)
    check("small end-to-end run", trace.status == "ok"
          and min(trace.policy_slacks.values()) >= -1e-6,
          f"status {trace.status}")
    check("exit binarity", trace.binarity_final <= 1e-3,
          f"{trace.binarity_final:.2e}")
    check("rank-one recovery", trace.rank_ratio_final <= 1e-6,
          f"{trace.rank_ratio_final:.2e}")
    return 1 if failures else 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fdsec", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment sweep from a YAML spec")
    p_run.add_argument("spec", help="experiment YAML file")
    p_run.add_argument("--out", help="output CSV path (overrides the spec)")
    p_run.add_argument("--workers", type=int, help="parallel worker processes")
    p_run.add_argument("-o", "--override", action="append",
                       help="base config override key=value")

    for name, fn in (("solve-one", _cmd_solve_one), ("trace", _cmd_trace)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-o", "--override", action="append")
        if name == "solve-one":
            p.add_argument("--scheme", default="proposed",
                           choices=("proposed", "baseline_mrt", "baseline_isotropic"))
        else:
            p.add_argument("--out", default="sca_trace.csv")
        p.set_defaults(func=fn)

    p_self = sub.add_parser("selftest", help="oracle and invariant battery")
    p_self.set_defaults(func=_cmd_selftest)
    p_run.set_defaults(func=_cmd_run)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
