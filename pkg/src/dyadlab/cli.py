"""Command line front end: ``dyadlab <command> [--config PATH] [--seed N] [--out PATH] [--format csv|json]``."""
from __future__ import annotations

import argparse
import json
import sys

from . import experiments as ex
from .config import ConfigError, ExperimentConfig, validate
from .normlab import HypothesisError

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 2, 3
COMMANDS = ("constants", "sparse", "norm", "verify", "entropy", "sharpness", "corona")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyadlab", description="Sparse square-function experiments on dyadic grids.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "constants": "A_p, A_inf and entropy characteristics per instance",
        "sparse": "generate a sparse collection and list its cover ratios",
        "norm": "lower bound on the operator norm (and the exact p = r = 2 value)",
        "verify": "ensemble check of norm against bounds plus corona and slicing invariants",
        "entropy": "entropy bounds across bump exponents",
        "sharpness": "p = r = 2 power-weight sweep and log-log slope",
        "corona": "parallel corona fibers for one instance",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="JSON experiment config (defaults used when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("csv", "json"), help="report format (default from config, else csv)")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("--seed: must lie in [0, 2^64)")
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output.path = args.out
    if args.format is not None:
        cfg.output.format = args.format
    validate(cfg)
    return cfg


def _run(command: str, cfg: ExperimentConfig) -> tuple[str, list[str]]:
    fmt = cfg.output.format
    if command == "sparse":
        report, cubes = ex.run_sparse(cfg)
        if fmt == "json":
            return json.dumps({"n": cfg.grid.n, "L": cfg.grid.L, "cubes": cubes, "summary": report.summary},
                              indent=1), []
        return report.to_csv(), []
    if command == "corona":
        try:
            report, corona = ex.run_corona(cfg)
        except AssertionError as exc:
            return "", [str(exc)]
        return (corona.dumps() + "\n" if fmt == "json" else report.to_csv()), []
    runner = {"constants": ex.run_constants, "norm": ex.run_norm, "verify": ex.run_verify,
              "entropy": ex.run_entropy, "sharpness": ex.run_sharpness}[command]
    report = runner(cfg)
    return report.render(fmt), report.violations


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        text, violations = _run(args.command, cfg)
    except (ConfigError, HypothesisError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.output.path:
        with open(cfg.output.path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for v in violations:
        print(f"invariant violated: {v}", file=sys.stderr)
    return EXIT_VIOLATION if violations else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
