"""Command-line runner.

    pvdg list
    pvdg run ch4-case1 [--set K6=19 ...] [--out DIR]
    pvdg run ch4-case1 ch4-case2 ch4-case3 --jobs 3 --out runs

Each run writes ``trace.csv``, ``metrics.txt`` and ``manifest.txt`` (plus
``estimates.csv`` for the estimator-driven boost stage).  With several
targets every run gets its own subdirectory of ``--out``.

Exit status: 0 on success, 2 for configuration errors, 3 when a simulation
fails (non-finite state, infeasible operating point, ...), 1 otherwise.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import NonFinite, PvdgError
from .pvmodel import CH2_ARRAY
from .report import build_report, format_report
from .scenarios import ConfigError, PRESETS, ResolvedRun, canonical_lines, list_scenarios, resolve
from .sim import Trace, run_scenario

TRACE_COLUMNS = ("t", "x1", "x2", "x3", "x4", "x5", "x6", "u1", "u2", "d1", "d2", "d3",
                 "d1hat", "d2hat", "d3hat", "P_pv", "P_batt", "P_load")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3


def trace_matrix(trace: Trace) -> np.ndarray:
    return np.column_stack([trace.t] + [trace.series(c) for c in TRACE_COLUMNS[1:]])


def write_trace_csv(trace: Trace, path: Path) -> None:
    """Header plus one row per sample; 17 significant digits, blank cells for absent values."""
    data = trace_matrix(trace)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in data.tolist():
            fh.write(",".join("" if v != v else f"{v:.16e}" for v in row) + "\n")


def write_estimates_csv(trace: Trace, path: Path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("t,T_true,lam_true,T_hat,lam_hat,iterations,straddles_event,status\n")
        for e in trace.estimates:
            fh.write(f"{e.t:.16e},{e.T_true:.16e},{e.lam_true:.16e},{e.T_hat:.16e},"
                     f"{e.lam_hat:.16e},{e.iterations},{int(e.straddles_event)},{e.status}\n")


def _k_i_note(run: ResolvedRun) -> str:
    k = run.system.pv.k_I
    if any(_is_key(key, "k_I") for key, _ in run.overrides):
        return f"{k!r} A/K (set on the command line)"
    if run.preset.system.pv == CH2_ARRAY:
        return f"{k!r} A/K (calibrated default; absent from the parameter table)"
    return f"{k!r} A/K (module datasheet)"


def _is_key(key: str, name: str) -> bool:
    return key == name or key.endswith("." + name)


def manifest_text(run: ResolvedRun, paths: dict[str, Path], timestamp: str) -> str:
    lines = [
        f"scenario = {run.preset.name}",
        f"description = {run.preset.description}",
        f"controller = {run.sim.controller}",
        f"config_hash = {run.config_hash}",
        f"timestamp = {timestamp}",
        "overrides = " + "; ".join(f"{k}={v}" for k, v in run.overrides),
    ]
    lines += [f"output.{name} = {p}" for name, p in paths.items()]
    lines.append(f"k_I = {_k_i_note(run)}")
    lines.append("")
    lines.append("[resolved parameters]")
    lines += canonical_lines(run.values)
    lines.append("")
    lines.append("[parameter table]")
    lines.append(run.preset.table)
    return "\n".join(lines) + "\n"


def metrics_text(run: ResolvedRun, trace: Trace) -> str:
    rows = build_report(run.preset.report, trace, run.schedule, run.system)
    head = [f"scenario = {run.preset.name}", f"controller = {run.sim.controller}",
            f"config_hash = {run.config_hash}", f"samples = {len(trace)}"]
    if trace.guarded.size:
        head.append(f"guard_fraction = {float(np.mean(trace.guarded)):.6g}")
        head.append(f"saturation_fraction = {float(np.mean(trace.saturated)):.6g}")
    return "\n".join(head) + "\n\n" + format_report(run.preset.report, rows)


def execute(target: str, overrides, out_dir: Path) -> tuple[int, str]:
    """Resolve, simulate and write one run.  Returns ``(exit_status, message)``."""
    try:
        run = resolve(target, overrides)
    except ConfigError as exc:
        return EXIT_CONFIG, f"{target}: configuration error: {exc}"
    try:
        trace = run_scenario(run.schedule, run.system, run.sim)
    except NonFinite as exc:
        return EXIT_SIM, f"{target}: simulation failed: {exc}"
    except PvdgError as exc:
        return EXIT_SIM, f"{target}: simulation failed: {type(exc).__name__}: {exc}"

    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"trace": out_dir / "trace.csv", "metrics": out_dir / "metrics.txt",
             "manifest": out_dir / "manifest.txt"}
    if trace.estimates:
        paths["estimates"] = out_dir / "estimates.csv"
        write_estimates_csv(trace, paths["estimates"])
    write_trace_csv(trace, paths["trace"])
    paths["metrics"].write_text(metrics_text(run, trace))
    stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    paths["manifest"].write_text(manifest_text(run, paths, stamp))
    return EXIT_OK, f"{target}: ok -> {out_dir}"


def _execute_packed(args):
    return execute(*args)


def _run_dirs(targets: list[str], out: Path | None) -> list[Path]:
    if out is not None and len(targets) == 1:
        return [out]
    out = Path("runs") if out is None else out
    names = [t if t in PRESETS else Path(t).stem for t in targets]
    seen: dict[str, int] = {}
    dirs = []
    for n in names:
        seen[n] = seen.get(n, 0) + 1
        dirs.append(out / (n if seen[n] == 1 else f"{n}-{seen[n]}"))
    return dirs


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pvdg", description="PV microgrid scenario runner")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list the scenario presets")
    r = sub.add_parser("run", help="run presets or config files")
    r.add_argument("targets", nargs="+", metavar="scenario|path")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    r.add_argument("--out", type=Path, default=None,
                   help="output directory (default: runs/<scenario>)")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, desc in list_scenarios():
            print(f"{name:14s} {desc}")
        return EXIT_OK

    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    dirs = _run_dirs(args.targets, args.out)
    work = [(t, tuple(args.overrides), d) for t, d in zip(args.targets, dirs)]
    if args.jobs == 1 or len(work) == 1:
        results = [execute(*w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_execute_packed, work))

    status = EXIT_OK
    for code, msg in results:
        print(msg, file=sys.stderr if code else sys.stdout)
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
