"""Command-line runner: ``cooprelay --config FILE [overrides]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .acceptance import Budget, CHECKS, run_acceptance
from .config import ExperimentSpec, load_config
from .errors import ConfigError
from .experiments import PointFailure, Table, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cooprelay", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="experiment config file")
    ap.add_argument("--out", help="output CSV path (overrides experiment.output)")
    ap.add_argument("--seed", help="master seed")
    ap.add_argument("--trials", help="Monte Carlo trials per point")
    ap.add_argument("--tol", help="relative quadrature tolerance")
    ap.add_argument("--workers", help="worker processes")
    ap.add_argument("--eta-nudge", nargs="?", const="true", metavar="EPS",
                    help="move relays off MRC-singular positions by EPS (default 1e-6) instead of failing")
    return ap


def _overrides(args) -> dict[str, str]:
    flags = {"out": "experiment.output", "seed": "experiment.seed", "trials": "experiment.trials",
             "tol": "experiment.tol", "workers": "experiment.workers", "eta_nudge": "experiment.eta_nudge"}
    out = {key: str(getattr(args, name)) for name, key in flags.items() if getattr(args, name) is not None}
    return out


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if not math.isfinite(f):
        raise PointFailure(f"non-finite value {f!r} in output")
    return f"{f:.10g}"


def _path_for(spec: ExperimentSpec, table: Table, n_tables: int) -> Path:
    base = Path(spec.output)
    if table.suffix is None or (n_tables == 1 and spec.kind == "point"):
        return base
    return base.with_name(f"{base.stem}_{table.suffix}{base.suffix or '.csv'}")


def render(spec: ExperimentSpec, table: Table) -> str:
    buf = io.StringIO()
    buf.write(f"# cooprelay {__version__}; python {platform.python_version()}; "
              f"numpy {np.__version__}; scipy {scipy.__version__}\n")
    buf.write(f"# kind={spec.kind} channel={table.suffix or '-'} seed={spec.seed} config={spec.digest()}\n")
    for note in table.notes:
        buf.write(f"# {note}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _acceptance(spec: ExperimentSpec) -> int:
    unknown = [c for c in spec.checks if c not in CHECKS]
    if unknown:
        print(f"config error: experiment.checks: unknown {', '.join(unknown)}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_acceptance(Budget(spec.trials, spec.replicates, spec.seed), spec.checks or None)
    table = Table(None, ["criterion", "check", "passed", "measured", "limit", "seconds"],
                  [[r.number, r.name, r.passed, r.measured if math.isfinite(r.measured) else -1.0,
                    r.limit if math.isfinite(r.limit) else -1.0, round(r.seconds, 1)] for r in results])
    Path(spec.output).parent.mkdir(parents=True, exist_ok=True)
    Path(spec.output).write_text(render(spec, table))
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        spec = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if spec.kind == "acceptance":
        return _acceptance(spec)
    try:
        tables = run_experiment(spec)
        rendered = [(_path_for(spec, t, len(tables)), render(spec, t)) for t in tables]
    except PointFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path, text in rendered:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
