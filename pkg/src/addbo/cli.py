"""Experiment runner.

``addbo run`` executes seeded batches of BO runs and writes, into the
output directory: per-evaluation ``traces.csv``, per-run ``summary.csv``,
across-seed ``bestseen_curves.csv``, and a rendered ``bestseen.png``.
``--gnuplot`` additionally emits whitespace ``.dat`` files plus a ready
``plot.gp`` script. ``addbo report`` aggregates summary files into an
aligned comparison table and renders ``report.png`` next to the first
input.

Exit codes: 0 success, 1 runtime failure (partial outputs flushed),
2 invalid usage or config (the message names the offending key or file).
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
from pathlib import Path

import numpy as np

from .engine import RunSpec, Trace, execute_run, run_batch, write_trace_csv

__all__ = ["main", "run_experiment", "compare_report", "build_specs"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

PROBLEMS = ("styblinski_tang", "sep_quadratic", "watersim")
MODES = ("standard", "additive")
ACQS = ("ts", "lcb", "ei")

_SUMMARY_HEADER = ["run_id", "mode", "acq", "seed", "final_best", "evals_to_best", "total_ms"]
_CURVES_HEADER = ["mode", "acq", "t", "median", "q25", "q75"]

_DEFAULTS = {
    "problem": "styblinski_tang",
    "dim": 10,
    "mode": "standard,additive",
    "acq": "ts",
    "budget": 100,
    "n0": None,
    "seeds": "10",
    "features": 128,
    "out": "results",
    "wdn_config": None,
    "gnuplot": False,
    "jobs": 1,
}
_INT_KEYS = {"dim", "budget", "n0", "features", "jobs"}


class UsageError(Exception):
    """Configuration problem; maps to exit code 2."""


def _parse_seeds(text: str) -> list[int]:
    """A bare integer is a seed count (0..n-1); a comma list is explicit."""
    text = str(text).strip()
    try:
        if "," in text:
            return [int(v) for v in text.split(",") if v.strip() != ""]
        return list(range(int(text)))
    except ValueError:
        raise UsageError(f"seeds: expected a count or comma list, got {text!r}") from None


def _parse_choices(text: str, allowed: tuple[str, ...], key: str) -> list[str]:
    values = [v.strip() for v in str(text).split(",") if v.strip()]
    if not values:
        raise UsageError(f"{key}: no values given")
    for v in values:
        if v not in allowed:
            raise UsageError(f"{key}: unknown value {v!r} (choose from {', '.join(allowed)})")
    return values


def _load_run_config(path: str) -> dict:
    """Flat ``key = value`` file mirroring the CLI flags."""
    values: dict[str, object] = {}
    try:
        fh = open(path)
    except OSError as e:
        raise UsageError(f"config: cannot read {path}: {e.strerror}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            if key == "gnuplot":
                if val.lower() not in ("0", "1", "true", "false"):
                    raise UsageError(f"{path}:{lineno}: gnuplot must be true or false")
                values[key] = val.lower() in ("1", "true")
            elif key in _INT_KEYS:
                try:
                    values[key] = int(val)
                except ValueError:
                    raise UsageError(f"{path}:{lineno}: {key} must be an integer") from None
            else:
                values[key] = val
    return values


def _resolve(args: argparse.Namespace) -> dict:
    """Merge CLI flags over config-file values over defaults, then validate."""
    file_cfg = _load_run_config(args.config) if args.config else {}
    cfg: dict = {}
    for key, default in _DEFAULTS.items():
        cli_val = getattr(args, key)
        if cli_val is not None:
            cfg[key] = cli_val
        elif key in file_cfg:
            cfg[key] = file_cfg[key]
        else:
            cfg[key] = default

    if cfg["problem"] not in PROBLEMS:
        raise UsageError(
            f"problem: unknown value {cfg['problem']!r} (choose from {', '.join(PROBLEMS)})"
        )
    cfg["mode"] = _parse_choices(cfg["mode"], MODES, "mode")
    cfg["acq"] = _parse_choices(cfg["acq"], ACQS, "acq")
    cfg["seeds"] = _parse_seeds(cfg["seeds"])
    if not cfg["seeds"]:
        raise UsageError("seeds: at least one seed is required")
    if cfg["budget"] < 1:
        raise UsageError("budget: must be at least 1")
    if cfg["n0"] is not None and cfg["n0"] < 2:
        raise UsageError("n0: must be at least 2")
    if cfg["features"] < 1:
        raise UsageError("features: must be at least 1")
    if cfg["dim"] < 1:
        raise UsageError("dim: must be at least 1")
    if cfg["jobs"] < 1:
        raise UsageError("jobs: must be at least 1")
    if cfg["wdn_config"]:
        if cfg["problem"] != "watersim":
            raise UsageError("wdn_config: only applies to the watersim problem")
        from .watersim import load_config

        try:
            load_config(cfg["wdn_config"])
        except OSError as e:
            raise UsageError(f"wdn_config: cannot read {cfg['wdn_config']}: {e.strerror}") from None
        except ValueError as e:
            raise UsageError(f"wdn_config: {e}") from None
    return cfg


def build_specs(cfg: dict) -> list[RunSpec]:
    return [
        RunSpec(
            problem=cfg["problem"],
            dim=cfg["dim"],
            mode=mode,
            acq=acq,
            seed=seed,
            budget=cfg["budget"],
            n0=cfg["n0"],
            m=cfg["features"],
            wdn_config=cfg["wdn_config"],
        )
        for mode in cfg["mode"]
        for acq in cfg["acq"]
        for seed in cfg["seeds"]
    ]


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_summary(traces: list[Trace], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_SUMMARY_HEADER)
        for tr in traces:
            final = tr.final_best()
            evals = tr.evals_to_best()
            w.writerow(
                [
                    tr.run_id,
                    tr.mode,
                    tr.acq,
                    tr.seed,
                    "none" if final is None else _fmt(final),
                    "none" if evals is None else evals,
                    _fmt(tr.total_ms()),
                ]
            )


def _group_curves(traces: list[Trace]) -> list[tuple[str, str, np.ndarray]]:
    """Per (mode, acq): stacked best-seen medians and quartiles over seeds.

    Returns rows of (mode, acq, array of shape (L, 4)) with columns
    t, median, q25, q75; missing best-seen entries enter as NaN.
    """
    groups: dict[tuple[str, str], list[Trace]] = {}
    for tr in traces:
        groups.setdefault((tr.mode, tr.acq), []).append(tr)
    out = []
    for (mode, acq), members in sorted(groups.items()):
        L = min(len(tr) for tr in members)
        mat = np.full((len(members), L), np.nan)
        for i, tr in enumerate(members):
            for j, v in enumerate(tr.best_seen_series()[:L]):
                if v is not None:
                    mat[i, j] = v
        stats = np.full((L, 4), np.nan)
        stats[:, 0] = np.arange(1, L + 1)
        for j in range(L):
            col = mat[:, j]
            col = col[~np.isnan(col)]
            if col.size:
                stats[j, 1] = np.quantile(col, 0.5)
                stats[j, 2] = np.quantile(col, 0.25)
                stats[j, 3] = np.quantile(col, 0.75)
        out.append((mode, acq, stats))
    return out


def _write_curves(curves, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CURVES_HEADER)
        for mode, acq, stats in curves:
            for row in stats:
                w.writerow(
                    [mode, acq, int(row[0])]
                    + [("nan" if np.isnan(v) else _fmt(v)) for v in row[1:]]
                )


def _render_curves_png(curves, path: Path, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.5, 5.0))
    for mode, acq, stats in curves:
        t = stats[:, 0]
        ax.plot(t, stats[:, 1], label=f"{mode} {acq}", linewidth=1.8)
        ax.fill_between(t, stats[:, 2], stats[:, 3], alpha=0.2)
    ax.set_xlabel("evaluation")
    ax.set_ylabel("best seen")
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _write_gnuplot(curves, outdir: Path) -> None:
    plot_lines = []
    for mode, acq, stats in curves:
        dat = outdir / f"bestseen_{mode}_{acq}.dat"
        with open(dat, "w") as fh:
            fh.write("# t median q25 q75\n")
            for row in stats:
                fh.write(
                    f"{int(row[0])} "
                    + " ".join("nan" if np.isnan(v) else repr(float(v)) for v in row[1:])
                    + "\n"
                )
        label = f"{mode} {acq}"
        plot_lines.append(
            f"'{dat.name}' using 1:3:4 with filledcurves fs transparent solid 0.15 notitle"
        )
        plot_lines.append(f"'{dat.name}' using 1:2 with lines lw 2 title '{label}'")
    script = outdir / "plot.gp"
    with open(script, "w") as fh:
        fh.write("# run from this directory: gnuplot plot.gp\n")
        fh.write("set terminal pngcairo size 900,600\n")
        fh.write("set output 'bestseen_gnuplot.png'\n")
        fh.write("set xlabel 'evaluation'\n")
        fh.write("set ylabel 'best seen'\n")
        fh.write("set key top right\n")
        fh.write("plot \\\n  " + ", \\\n  ".join(plot_lines) + "\n")


def run_experiment(cfg: dict) -> int:
    """Execute the configured batch and write all outputs; see module doc."""
    specs = build_specs(cfg)
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    traces: list[Trace] = []
    failure: str | None = None
    if cfg["jobs"] > 1:
        try:
            traces = run_batch(specs, jobs=cfg["jobs"])
        except Exception as e:
            failure = f"{type(e).__name__}: {e}"
    else:
        for spec in specs:
            try:
                traces.append(execute_run(spec))
            except Exception as e:
                failure = f"run {spec.run_id} failed: {type(e).__name__}: {e}"
                break

    if traces:
        write_trace_csv(traces, outdir / "traces.csv")
        _write_summary(traces, outdir / "summary.csv")
        curves = _group_curves(traces)
        _write_curves(curves, outdir / "bestseen_curves.csv")
        _render_curves_png(curves, outdir / "bestseen.png", cfg["problem"])
        if cfg["gnuplot"]:
            _write_gnuplot(curves, outdir)
    if failure is not None:
        print(failure, file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _read_summary(path: str) -> list[dict]:
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise UsageError(f"{path}: cannot read: {e.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _SUMMARY_HEADER:
            raise UsageError(f"{path}:1: expected header {','.join(_SUMMARY_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_SUMMARY_HEADER):
                raise UsageError(f"{path}:{lineno}: expected {len(_SUMMARY_HEADER)} columns")
            try:
                rows.append(
                    {
                        "mode": row[1],
                        "acq": row[2],
                        "final_best": None if row[4] == "none" else float(row[4]),
                        "evals_to_best": None if row[5] == "none" else int(row[5]),
                        "total_ms": float(row[6]),
                    }
                )
            except ValueError:
                raise UsageError(f"{path}:{lineno}: malformed numeric field") from None
    return rows


def _median_or_none(values: list[float]) -> float | None:
    return statistics.median(values) if values else None


def compare_report(paths: list[str]) -> str:
    """Aggregate summary files into an aligned per-(mode, acq) table."""
    if not paths:
        raise UsageError("report: at least one summary file is required")
    rows: list[dict] = []
    for path in paths:
        rows.extend(_read_summary(path))
    groups: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["mode"], row["acq"]), []).append(row)

    # additive rows first, then alphabetical within each mode
    ordered = sorted(groups.items(), key=lambda kv: (kv[0][0] != "additive", kv[0]))
    table = [["mode", "acq", "runs", "final_best", "evals_to_best", "total_ms"]]
    for (mode, acq), members in ordered:
        final = _median_or_none([r["final_best"] for r in members if r["final_best"] is not None])
        evals = _median_or_none(
            [r["evals_to_best"] for r in members if r["evals_to_best"] is not None]
        )
        ms = _median_or_none([r["total_ms"] for r in members])
        table.append(
            [
                mode,
                acq,
                str(len(members)),
                "none" if final is None else f"{final:.6g}",
                "none" if evals is None else f"{evals:.6g}",
                "none" if ms is None else f"{ms:.6g}",
            ]
        )
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = []
    for row in table:
        cells = [row[0].ljust(widths[0]), row[1].ljust(widths[1])]
        cells += [row[i].rjust(widths[i]) for i in range(2, len(row))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def _render_report_png(paths: list[str], table: str) -> None:
    """Bar chart of median final best per (mode, acq), next to the first input."""
    rows = []
    for path in paths:
        rows.extend(_read_summary(path))
    groups: dict[tuple[str, str], list[float]] = {}
    for row in rows:
        if row["final_best"] is not None:
            groups.setdefault((row["mode"], row["acq"]), []).append(row["final_best"])
    if not groups:
        return
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ordered = sorted(groups.items(), key=lambda kv: (kv[0][0] != "additive", kv[0]))
    labels = [f"{m}\n{a}" for (m, a), _ in ordered]
    medians = [statistics.median(vs) for _, vs in ordered]
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(labels), 4.5))
    ax.bar(range(len(labels)), medians, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_ylabel("median final best")
    fig.tight_layout()
    fig.savefig(Path(paths[0]).parent / "report.png", dpi=120)
    plt.close(fig)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="addbo",
        description="Seeded standard-vs-additive BO experiments.",
    )
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="execute a batch of runs and write CSVs + figures")
    run.add_argument("--problem", help=f"one of: {', '.join(PROBLEMS)}")
    run.add_argument("--dim", type=int, help="benchmark dimension (ignored by watersim)")
    run.add_argument("--mode", help="comma list from: standard, additive")
    run.add_argument("--acq", help="comma list from: ts, lcb, ei")
    run.add_argument("--budget", type=int, help="evaluations after the initial design")
    run.add_argument("--n0", type=int, help="initial design size")
    run.add_argument("--seeds", help="seed count, or explicit comma list")
    run.add_argument("--features", type=int, help="Fourier features per group")
    run.add_argument("--out", help="output directory")
    run.add_argument("--wdn-config", dest="wdn_config", help="network config file (watersim)")
    run.add_argument("--config", help="run config file (key = value; flags override)")
    run.add_argument("--gnuplot", action="store_true", default=None,
                     help="also emit .dat files and a plot.gp script")
    run.add_argument("--jobs", type=int, help="parallel worker processes")

    report = sub.add_parser("report", help="aggregate summary.csv files into a table")
    report.add_argument("summaries", nargs="+", help="summary.csv files from runs")
    report.add_argument("--no-figure", action="store_true",
                        help="skip rendering report.png")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(_resolve(args))
        if args.command == "report":
            table = compare_report(args.summaries)
            print(table)
            if not args.no_figure:
                _render_report_png(args.summaries, table)
            return EXIT_OK
        parser.print_help()
        return EXIT_USAGE
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
