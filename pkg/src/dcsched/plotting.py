"""Figure data files and SVG line charts from a summary CSV.

Charts are rendered with matplotlib's SVG backend using a fixed hash salt and
no date stamp, so identical summaries give byte-identical files.
"""
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

from .experiment import read_csv, write_csv
from .policies import POLICY_NAMES

LABELS = {
    "fcfs": "FCFS",
    "jsq_priority": "JSQ-Priority",
    "jsq_mw": "JSQ-MaxWeight",
    "jsq_mw_pod": "JSQ-MaxWeight-Pod",
    "bp": "Balanced-Pandas",
    "bp_pod": "Balanced-Pandas-Pod",
}
MARKERS = dict(zip(POLICY_NAMES, "osD^v*"))
HIGH_LOAD = 0.8

RC = {
    "svg.hashsalt": "dcsched",
    "svg.fonttype": "path",
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "legend.fontsize": 8,
}


def _series(rows):
    """``{policy: [(rho, mean, hw), ...]}`` sorted by load, policies in canonical order."""
    out = {}
    for r in rows:
        out.setdefault(r["policy"], []).append(
            (float(r["rho"]), float(r["mean_completion_time"]), float(r["ci_half_width"])))
    order = [p for p in POLICY_NAMES if p in out] + sorted(set(out) - set(POLICY_NAMES))
    return {p: sorted(out[p]) for p in order}


def line_chart(series, path, title):
    with matplotlib.rc_context(RC):
        fig = Figure(figsize=(5.0, 3.4))
        ax = fig.add_subplot()
        for policy, pts in series.items():
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            errs = [p[2] for p in pts]
            ax.errorbar(xs, ys, yerr=errs, marker=MARKERS.get(policy, "o"), capsize=2,
                        label=LABELS.get(policy, policy))
        ax.set_xlabel("load (fraction of capacity)")
        ax.set_ylabel("mean task completion time")
        ax.set_title(title)
        ax.grid(True, linewidth=0.3)
        if series:
            ax.legend(loc="upper left", frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})


def emit_plot_data(summary_csv, out_dir=None):
    """Write one CSV and one SVG per figure; returns the written paths.

    ``mean_completion_time`` covers every load; ``mean_completion_time_high``
    zooms into loads of at least 0.8 when the summary has any.
    """
    summary_csv = Path(summary_csv)
    out_dir = Path(out_dir) if out_dir is not None else summary_csv.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = read_csv(summary_csv)
    figures = [("mean_completion_time", rows, "Mean task completion time vs load")]
    high = [r for r in rows if float(r["rho"]) >= HIGH_LOAD]
    if high:
        figures.append(("mean_completion_time_high", high, "High loads"))
    written = []
    for name, subset, title in figures:
        series = _series(subset)
        data = out_dir / f"fig_{name}.csv"
        write_csv(data, ("policy", "rho", "mean_completion_time", "ci_half_width"),
                  [(p, x, y, e) for p, pts in series.items() for x, y, e in pts])
        svg = out_dir / f"fig_{name}.svg"
        line_chart(series, svg, title)
        written += [data, svg]
    return written
