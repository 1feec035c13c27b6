"""Command-line front end: scenario files in, CSV reports out.

`simulate` writes sampled path values, `verify` runs named check suites,
`list-checks` prints the suite names.  Exit code 0 means success, 1 means
a check failed, 2 means the configuration or invocation was unusable.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .cbi import cbi_ensemble
from .checks import SUITES, run_checks
from .fv import fv_ensemble
from .scenario import ConfigError, build_params, initial_values, load_scenario, output_times

CHECK_HEADER = ("suite", "check", "statistic", "target", "stderr", "tolerance", "pass")
PATH_HEADER = ("time", "replica", "label", "value")


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "True" if x else "False"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    # 17 significant digits: parsing the text recovers the exact double
    return format(float(x), ".17g")


def emit_csv(rows, header, path=None, comment=None):
    """Write comment line (if any), header, then rows; deterministic bytes."""
    lines = []
    if comment:
        lines.append("# " + comment)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def _comment(sc, overrides, env_seed):
    parts = [
        f"scenario={os.path.basename(sc.source)}",
        f"seed={sc.seed}",
        "overrides=" + (";".join(overrides) if overrides else "none"),
    ]
    if env_seed is not None:
        parts.append(f"env_seed={env_seed}")
    return "flowsim " + " ".join(parts)


def _path_rows(sc, workers):
    if sc.kind not in ("cbi", "fv"):
        raise ConfigError(f"{sc.source}: simulate supports cbi and fv scenarios; use verify for scaling")
    params = build_params(sc)
    ensemble = cbi_ensemble if sc.kind == "cbi" else fv_ensemble
    times = output_times(sc)
    vals = ensemble(
        params,
        sc.labels,
        sc.horizon,
        sc.dt,
        sc.replicas,
        eps=sc.eps,
        x0=initial_values(sc),
        seed=sc.seed,
        times=list(times),
        workers=workers,
    )
    rows = []
    for ti, t in enumerate(times):
        for r in range(sc.replicas):
            for j, label in enumerate(sc.labels):
                rows.append((t, r, label, vals[ti, r, j]))
    return rows


def _load(args):
    sc = load_scenario(args.scenario, args.overrides)
    env_seed = os.environ.get("FLOWSIM_SEED")
    if env_seed is not None:
        try:
            sc = replace(sc, seed=int(env_seed))
        except ValueError:
            raise ConfigError(f"FLOWSIM_SEED must be an integer, got {env_seed!r}") from None
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    return sc, env_seed


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="flowsim",
        description="Simulate coupled branching and reweighting flows and verify them against closed-form oracles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "sample flow paths and write them as CSV"),
        ("verify", "run the scenario's check suites and write a CSV report"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", required=True, help="scenario config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario key (repeatable)")
        p.add_argument("--out", help="output CSV path (default: stdout)")
        p.add_argument("--workers", type=int, default=1, help="worker processes (result-invariant)")
    sub.add_parser("list-checks", help="list the available check suites")
    args = parser.parse_args(argv)

    if args.command == "list-checks":
        for name, (_, description) in SUITES.items():
            print(f"{name}: {description}")
        return 0
    try:
        sc, env_seed = _load(args)
        comment = _comment(sc, args.overrides, env_seed)
        out = args.out if args.out is not None else sc.out
        if args.command == "simulate":
            emit_csv(_path_rows(sc, args.workers), PATH_HEADER, out, comment)
            return 0
        rows = run_checks(sc, args.workers)
        emit_csv(
            [(r.suite, r.check, r.statistic, r.target, r.stderr, r.tolerance, r.passed) for r in rows],
            CHECK_HEADER,
            out,
            comment,
        )
        return 0 if all(r.passed for r in rows) else 1
    except ValueError as exc:
        print(f"flowsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
