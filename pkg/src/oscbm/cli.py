"""Command-line front end.

    python -m oscbm --config exp.yaml [--seed N] [--out DIR] [--quiet]
    python -m oscbm --list-builtins

Exit status: 0 when every verdict passes, 1 when any fails, 2 when the
config is invalid or the experiment cannot run.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from .config import EXPERIMENT_KINDS, parse_config
from .covariance import CovarianceModel
from .errors import ConfigInvalid, OscBMError
from .experiments import run_outcome
from .gaussian_field import write_field
from .hermite import BUILTIN_FUNCTIONALS, expand

EXIT_PASS, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def list_builtins() -> str:
    lines = ["covariance models:"]
    for name, model in (("exponential", CovarianceModel.exponential()),
                        ("gaussian", CovarianceModel.gaussian())):
        lines.append(f"  {name} (correlation length {model.correlation_length:g} at unit parameter)")
    lines.append("  table (two-column CSV: x, rho)")
    lines.append("functionals:")
    for name, phi in BUILTIN_FUNCTIONALS.items():
        lines.append(f"  {name} (rank {expand(phi).rank})")
    lines.append("experiment kinds:")
    lines.extend(f"  {k}" for k in EXPERIMENT_KINDS)
    return "\n".join(lines) + "\n"


def write_samples(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replication", "observable", "value", "admissible"])
        for rep, obs, value, ok in rows:
            w.writerow([rep, obs, repr(float(value)), int(bool(ok))])


def write_targets(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "target", "error_budget"])
        for x, target, budget in rows:
            w.writerow([repr(float(x)), repr(float(target)), repr(float(budget))])


def run(config_path, seed=None, out=None, quiet: bool = False, env=None) -> int:
    """Validate, run and write artifacts; returns the exit status."""
    env = os.environ if env is None else env
    say = (lambda *a: None) if quiet else (lambda *a: print(*a))
    try:
        path = Path(config_path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {str(path)!r}: {exc}") from exc
        cfg = parse_config(text, base_dir=path.parent, seed_override=seed,
                           env_seed=env.get("BM_SEED"))
        outcome = run_outcome(cfg)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OscBMError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID

    # --out is a location, not part of the experiment, so it stays out of config_echo
    out_dir = Path(cfg.out_dir if out is None else out)
    if not out_dir.is_absolute():
        out_dir = Path.cwd() / out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    report = outcome.report
    (out_dir / "report.json").write_text(report.to_json())
    write_targets(out_dir / "targets.csv", outcome.targets)
    if cfg.data["out"]["samples"] and outcome.samples:
        write_samples(out_dir / "samples.csv", outcome.samples)
        for name, (header, rows) in outcome.extra_csv.items():
            with open(out_dir / name, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)
    if outcome.field_sample is not None:
        write_field(out_dir / "field.bin", outcome.field_sample)

    for name, rec in report.verdict.items():
        say(f"{'PASS' if rec['pass'] else 'FAIL'}  {name}")
    say(f"{report.experiment_id}: {'PASS' if report.passed else 'FAIL'} -> {out_dir}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oscbm", description="Oscillatory Breuer-Major and "
                                "random corrector verification experiments.")
    p.add_argument("--config", metavar="PATH", help="experiment config (YAML)")
    p.add_argument("--seed", type=int, help="master seed; overrides mc.seed and BM_SEED")
    p.add_argument("--out", metavar="DIR", help="output directory; overrides out.dir")
    p.add_argument("--quiet", action="store_true", help="suppress per-criterion output")
    p.add_argument("--list-builtins", action="store_true",
                   help="list built-in models, functionals and experiment kinds")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_builtins:
        sys.stdout.write(list_builtins())
        return EXIT_PASS
    if args.config is None:
        parser.print_usage(sys.stderr)
        print("oscbm: error: --config is required", file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("oscbm: error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    return run(args.config, args.seed, args.out, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
