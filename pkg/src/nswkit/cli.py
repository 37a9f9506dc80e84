"""Command-line front end: ``nswkit <solve|exact|gap|verify|check> [flags]``.

Exit codes: 0 success or certified, 1 a check failed or a region was not
certified, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import SPEC_VERSION, conflp, gapgen, mpverify, properties, rounding
from .core import brute_force_opt, load_instance, validate_instance

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    instance: Optional[str] = None
    seed: int = 1
    trials: int = 10_000
    enum_size: int = 3
    eps1: float = rounding.EPS1_DEFAULT
    m_max: int = 12
    target: Optional[float] = None
    out: Optional[str] = None
    threads: int = 1

    def validate(self):
        if self.trials < 1:
            raise UsageError("--trials must be at least 1")
        if not (0 <= self.seed < 1 << 64):
            raise UsageError("--seed must be a 64-bit unsigned value")
        if self.enum_size < 0:
            raise UsageError("--enum-size must be nonnegative")
        if not (0 < self.eps1 < 1):
            raise UsageError("--eps1 must lie in (0, 1)")
        if self.threads < 1:
            raise UsageError("--threads must be at least 1")
        if self.instance is not None and not os.path.isfile(self.instance):
            raise UsageError(f"instance file not found: {self.instance}")
        if self.out is not None:
            parent = os.path.dirname(os.path.abspath(self.out))
            if not os.path.isdir(parent):
                raise UsageError(f"output directory does not exist: {parent}")


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, np.generic):
        return _finite(x.item())
    return x


def _emit(report: dict, out: Optional[str]):
    report = dict(report)
    report["spec_version"] = SPEC_VERSION
    text = json.dumps(_finite(report), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(cfg: RunConfig):
    if cfg.instance is None:
        raise UsageError("--instance is required")
    try:
        inst = load_instance(cfg.instance)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read instance: {exc}") from exc
    problems = validate_instance(inst)
    if problems:
        raise UsageError("invalid instance: " + "; ".join(f"{v.field}: {v.predicate} {v.detail}".strip()
                                                          for v in problems[:5]))
    return inst


def run_solve(cfg: RunConfig) -> tuple:
    inst = _load(cfg)
    start = time.perf_counter()
    if inst.num_items <= min(cfg.m_max, conflp.EXACT_MAX_ITEMS):
        sol = conflp.solve_conflp_exact(inst)
        method = "exact"
    else:
        sol = conflp.column_generation_solve(inst, enum_size=cfg.enum_size)
        method = "column_generation"
    g = rounding.build_multigraph(inst, sol)
    rows = rounding.round_trials(g, cfg.seed, cfg.trials, cfg.threads)
    summary = properties.summarize_trials(inst, sol, g, rows, cfg.enum_size)
    freq = rows.mean(axis=0)
    sig = np.sqrt(np.maximum(g.x * (1 - g.x), 1e-300) / cfg.trials)
    report = {"command": "solve", "method": method, "lp_value": sol.lp_value, **summary,
              "trials": cfg.trials, "seed": cfg.seed,
              "max_marginal_z": float(np.max(np.abs(freq - g.x) / sig, initial=0.0))}
    # wall time goes to stderr so that reports stay byte-identical across runs
    sys.stderr.write(f"nswkit: solve finished in {time.perf_counter() - start:.3f}s\n")
    return report, EXIT_OK


def run_exact(cfg: RunConfig) -> tuple:
    inst = _load(cfg)
    alloc, value = brute_force_opt(inst, threads=cfg.threads)
    report = {"command": "exact", "log_nsw": value, "nsw": math.exp(value) if value > -math.inf else 0.0,
              "allocation": [{"agent": i, "items": list(s)} for i, s in enumerate(alloc)]}
    return report, EXIT_OK


def run_gap(cfg: RunConfig, args) -> tuple:
    fam = args.family
    if fam == "square":
        reps = [gapgen.eval_square(args.t if args.t is not None else 1e6)]
    elif fam == "additive":
        reps = [gapgen.eval_additive_gap(gapgen.AdditiveGapParams(args.h, args.k if args.k else 632,
                                                                  args.t if args.t is not None else 1e9, args.eps))]
    else:
        ks = [args.k] if args.k else [10, 100, 1000]
        reps = []
        for k in ks:
            lam = args.lam if args.lam else int(math.floor(k * math.log(2)))
            reps.append(gapgen.eval_submodular_gap(gapgen.SubmodularGapParams(
                k, lam, args.t if args.t is not None else 1e12, args.eps, args.log_t)))
    bad = [r for r in reps if r.feasibility_max_residual > gapgen.FEAS_RESIDUAL]
    report = {"command": "gap", "reports": [r.to_dict() for r in reps]}
    return report, EXIT_FAIL if bad else EXIT_OK


def run_verify(cfg: RunConfig, args) -> tuple:
    mode = args.mode
    target = cfg.target if cfg.target is not None else (3.56 if mode == "mp3" else 3.45)
    box = mpverify.Mp3Box(args.mu_lo, args.mu_hi, args.k_lo, args.k_hi,
                          args.alpha_lo if mode == "mp3" else 0.0, args.alpha_hi if mode == "mp3" else 1.0, args.lt)
    rep = mpverify.verify_region(mode, box, target, args.max_depth, args.lt_cap)
    report = rep.to_dict()
    report["command"] = "verify"
    return report, EXIT_OK if rep.certified else EXIT_FAIL


def run_check(cfg: RunConfig) -> tuple:
    rng = np.random.default_rng(cfg.seed)
    trials = cfg.trials
    suites = [
        properties.proxy_properties(rng, count=50),
        properties.extension_sandwich(rng, count=20, max_items=10),
        properties.pipage_suite(rng, count=5, trials=trials, seed=cfg.seed),
        properties.negative_correlation_suite(rng, count=5, trials=trials, seed=cfg.seed),
    ]
    worst_marg = worst_mgf = worst_conc = math.inf
    one_large = True
    for case in range(5):
        inst, sol = properties.random_rounding_case(rng)
        rc = properties.rounding_instance_check(inst, sol, cfg.seed + case, trials, cfg.eps1)
        one_large &= rc.one_large
        worst_marg = min(worst_marg, rc.marginal_margin)
        worst_mgf = min(worst_mgf, rc.mgf_margin)
        worst_conc = min(worst_conc, rc.conc_margin)
    suites.append(properties.CheckResult("rounding", one_large and min(worst_marg, worst_mgf, worst_conc) >= 0, 5,
                                         min(worst_marg, worst_mgf, worst_conc),
                                         {"marginals": worst_marg, "sum_mgf": worst_mgf, "agent_mgf": worst_conc,
                                          "one_large": one_large}))
    ok = all(s.passed for s in suites)
    report = {"command": "check", "passed": ok, "seed": cfg.seed, "trials": trials,
              "suites": [s.to_dict() for s in suites]}
    return report, EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance")
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--trials", type=int, default=10_000)
    common.add_argument("--enum-size", type=int, default=3)
    common.add_argument("--eps1", type=float, default=rounding.EPS1_DEFAULT)
    common.add_argument("--m-max", type=int, default=12)
    common.add_argument("--target", type=float)
    common.add_argument("--out")
    common.add_argument("--threads", type=int, default=1)

    p = argparse.ArgumentParser(prog="nswkit", description="Weighted Nash social welfare toolkit")
    sub = p.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("solve", parents=[common], help="LP, rounding and per-agent statistics")
    sub.add_parser("exact", parents=[common], help="brute-force optimum")
    g = sub.add_parser("gap", parents=[common], help="integrality-gap families")
    g.add_argument("family", choices=["square", "additive", "submodular"])
    g.add_argument("--t", type=float)
    g.add_argument("--log-t", type=float)
    g.add_argument("--k", type=int)
    g.add_argument("--lam", type=int)
    g.add_argument("--h", type=int, default=1000)
    g.add_argument("--eps", type=float, default=1e-6)
    v = sub.add_parser("verify", parents=[common], help="certify a parameter region")
    v.add_argument("mode", choices=list(mpverify.MODES))
    v.add_argument("--mu-lo", type=float, required=True)
    v.add_argument("--mu-hi", type=float, required=True)
    v.add_argument("--k-lo", type=float, required=True)
    v.add_argument("--k-hi", type=float, required=True)
    v.add_argument("--alpha-lo", type=float, default=0.0)
    v.add_argument("--alpha-hi", type=float, default=1.0)
    v.add_argument("--lt", type=int, default=64)
    v.add_argument("--lt-cap", type=int, default=1024)
    v.add_argument("--max-depth", type=int, default=45)
    sub.add_parser("check", parents=[common], help="randomized property suites")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    cfg = RunConfig(args.subcommand, args.instance, args.seed, args.trials, args.enum_size, args.eps1, args.m_max,
                    args.target, args.out, args.threads)
    try:
        cfg.validate()
        if cfg.subcommand == "solve":
            report, code = run_solve(cfg)
        elif cfg.subcommand == "exact":
            report, code = run_exact(cfg)
        elif cfg.subcommand == "gap":
            report, code = run_gap(cfg, args)
        elif cfg.subcommand == "verify":
            report, code = run_verify(cfg, args)
        else:
            report, code = run_check(cfg)
    except UsageError as exc:
        sys.stderr.write(f"nswkit: error: {exc}\n")
        return EXIT_USAGE
    except ValueError as exc:
        sys.stderr.write(f"nswkit: error: {exc}\n")
        return EXIT_USAGE
    _emit(report, cfg.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
