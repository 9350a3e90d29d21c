"""Command-line interface.

Subcommands: threshold, sample, recover, sweep, validate. Exit codes: 0 on
success, 1 on usage errors, 2 on configuration or assumption violations, 3 on
runtime failures.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_raw_config, model_config_from_raw
from .distributions import validate_family
from .errors import (AssumptionViolation, ConfigurationError, ContractViolation,
                     DomainError, GhcmError)
from .evaluation import permissible_relabelings
from .harness import ALGORITHMS, ExperimentPlan, run_sweep, run_trial, select_algorithm
from .infotheory import threshold_report
from .model import sample_instance, save_instance

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ghcm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, out=False, algorithm=False, trials=False):
        p.add_argument("--config", required=True, help="TOML configuration file")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="rng seed (default 0)")
        if out:
            p.add_argument("--out", help="output path")
        if algorithm:
            p.add_argument("--algorithm", choices=ALGORITHMS, default="auto")
        if trials:
            p.add_argument("--trials", type=int, help="override trials per sweep point")

    p = sub.add_parser("threshold", help="print the divergence/capacity report")
    common(p)
    p.set_defaults(func=_cmd_threshold)

    p = sub.add_parser("sample", help="sample an instance and write it to a file")
    common(p, seed=True, out=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("recover", help="run one recovery trial and print diagnostics")
    common(p, seed=True, algorithm=True)
    p.add_argument("--delta", type=float, help="override the occupancy constant")
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("sweep", help="run the configured experiment sweep")
    common(p, out=True, algorithm=False, trials=True)
    p.add_argument("--workers", type=int, help="parallel trial processes")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("validate", help="check family assumptions and symmetries")
    common(p, algorithm=True)
    p.set_defaults(func=_cmd_validate)
    return parser


def _cmd_threshold(args) -> int:
    cfg = model_config_from_raw(load_raw_config(args.config))
    print(threshold_report(cfg).format_text())
    return EXIT_OK


def _cmd_sample(args) -> int:
    if not args.out:
        raise ConfigurationError("sample needs --out")
    cfg = model_config_from_raw(load_raw_config(args.config))
    inst = sample_instance(cfg, args.seed)
    save_instance(inst, args.out)
    print(f"wrote {inst.num_vertices} vertices, {inst.num_edges} edges to {args.out}")
    return EXIT_OK


def _cmd_recover(args) -> int:
    cfg = model_config_from_raw(load_raw_config(args.config))
    result = run_trial(cfg, args.seed, algorithm=args.algorithm, delta=args.delta)
    for name in ("algorithm", "capacity", "regime", "connected", "exact", "agreement",
                 "seed_mistakes", "max_block_mistakes", "refine_changes",
                 "flip_bad_count", "segments", "wall_time_s"):
        print(f"{name}: {getattr(result, name)}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    raw = load_raw_config(args.config)
    plan = ExperimentPlan.from_raw(raw)
    if args.trials is not None:
        plan.trials_per_point = args.trials
        plan.__post_init__()
    if args.workers is not None:
        plan.workers = args.workers
        plan.__post_init__()
    results = run_sweep(plan, output=args.out)
    by_point = {}
    for r in results:
        by_point.setdefault(r.point_index, []).append(r)
    for idx in sorted(by_point):
        rows = by_point[idx]
        rate = sum(r.exact for r in rows) / len(rows)
        print(f"point {idx} {rows[0].axis_values}: exact-recovery rate "
              f"{rate:.3f} over {len(rows)} trials")
    print(f"wrote {args.out or plan.output}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = model_config_from_raw(load_raw_config(args.config))
    report = validate_family(cfg.family)
    omega = permissible_relabelings(cfg.pi, cfg.family)
    print(report.format_text())
    print(f"permissible relabelings |Omega| = {len(omega)}")
    algorithm = select_algorithm(cfg, args.algorithm, omega_count=len(omega))
    if algorithm == "segmented_1d":
        ok = report.identifiability_ok and report.strong_distinctness_ok and len(omega) == 1
        needed = "identifiability + strong distinctness + trivial symmetry group"
    else:
        ok = report.identifiability_ok and report.distinctness_ok
        needed = "identifiability + distinctness"
    print(f"algorithm {algorithm} needs {needed}: {'ok' if ok else 'VIOLATED'}")
    return EXIT_OK if ok else EXIT_CONFIG


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, AssumptionViolation, ContractViolation, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GhcmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
