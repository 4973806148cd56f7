"""``salemlab`` command line: run experiments, emit plot data, find admissible primes.

Exit codes: 0 all hard checks pass, 1 a hard check failed, 2 only soft
checks or warnings failed, 64 invalid config or arguments, 66 missing input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import sys
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

from .config import ConfigError, load_config, param_line

EXIT_OK, EXIT_HARD, EXIT_SOFT, EXIT_USAGE, EXIT_NOINPUT = 0, 1, 2, 64, 66


def _versions():
    import numpy
    import scipy

    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"salemlab": pkg, "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__}


def _dump_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _new_run_dir(base: Path, digest: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    path = base / f"{stamp}-{digest[:12]}"
    i = 1
    while path.exists():
        path = base / f"{stamp}-{digest[:12]}-{i}"
        i += 1
    return path


def write_run(cfg, outcome, run_dir: Path) -> Path:
    from .calibration import calibration_hash

    run_dir.mkdir(parents=True, exist_ok=False)
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "calibration_hash": calibration_hash(),
        "versions": _versions(),
        "exit_code": outcome.exit_code,
        "checks": [c.row() for c in outcome.checks],
        "warnings": list(outcome.warnings),
        **outcome.manifest_extra,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    (run_dir / "config.json").write_text(cfg.to_json(), encoding="utf-8")
    with open(run_dir / "events.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for line in outcome.lines:
            fh.write(_dump_line(line) + "\n")
    header = ["check", "tag", "hard", "trials", "passed", "observed", "threshold", "ok"]
    (run_dir / "summary.csv").write_text(_csv_text(header, [c.row() for c in outcome.checks]), encoding="utf-8")
    if cfg.kind == "concentration":
        cols = ["t", "empirical", "ci_low", "ci_high", "bound", "trials", "pass"]
        rows = [{k: x[k] for k in cols} for x in outcome.lines]
        (run_dir / "tails.csv").write_text(_csv_text(cols, rows), encoding="utf-8")
    return run_dir


def cmd_run(args) -> int:
    from .errors import SalemlabError
    from .experiments import run_experiment

    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.output_dir:
        cfg.output_dir = args.output_dir
    try:
        outcome = run_experiment(cfg)
    except (SalemlabError, ValueError) as exc:
        line = param_line(args.config, _mentioned_key(str(exc), cfg.params))
        where = f"{args.config}:{line}: " if line else f"{args.config}: "
        print(f"error: {where}{exc}", file=sys.stderr)
        return EXIT_USAGE
    run_dir = Path(args.run_dir) if args.run_dir else _new_run_dir(Path(cfg.output_dir), cfg.hash())
    write_run(cfg, outcome, run_dir)
    for c in outcome.checks:
        status = "ok" if c.ok else ("FAIL" if c.hard else "soft-fail")
        print(f"{c.name:24s} [{c.tag}] {c.passed}/{c.trials} {status}")
    for w in outcome.warnings:
        print(f"warning: {w}")
    print(run_dir)
    return outcome.exit_code


def _mentioned_key(message, params):
    for key in sorted(params, key=len, reverse=True):
        if key in message:
            return key
    return "params"


def cmd_plot(args) -> int:
    from .plotting import FUNCTIONALS, MissingRunData, emit_plotdata

    if args.functional not in FUNCTIONALS:
        print(f"error: unknown functional {args.functional!r}; expected one of {list(FUNCTIONALS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        csv_path, png_path = emit_plotdata(args.run_dir, args.functional)
    except MissingRunData as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    print(csv_path)
    print(png_path)
    return EXIT_OK


def admissible_primes(near: int, coprime: int) -> dict:
    """Nearest primes below and above ``near`` that are coprime to ``coprime!``."""
    import sympy

    floor = max(coprime, 1)
    below = sympy.prevprime(near + 1) if near > 2 else None
    if below is not None and below <= floor:
        below = None
    above = sympy.nextprime(max(near - 1, floor))
    return {"near": near, "factorial_coprime": coprime, "below": below, "above": above}


def cmd_primes(args) -> int:
    if args.near < 2 or args.factorial_coprime < 0:
        print("error: need --near >= 2 and --factorial-coprime >= 0", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(admissible_primes(args.near, args.factorial_coprime)))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="salemlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run an experiment from a TOML or JSON config")
    run.add_argument("config")
    run.add_argument("--output-dir", help="override output_dir from the config")
    run.add_argument("--run-dir", help="write into exactly this directory")
    run.set_defaults(func=cmd_run)
    plot = sub.add_parser("plot", help="emit tidy plot data and a PNG for a completed run")
    plot.add_argument("run_dir")
    plot.add_argument("functional")
    plot.set_defaults(func=cmd_plot)
    primes = sub.add_parser("primes", help="primes near N coprime to n!")
    primes.add_argument("--near", type=int, required=True)
    primes.add_argument("--factorial-coprime", type=int, default=0)
    primes.set_defaults(func=cmd_primes)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
