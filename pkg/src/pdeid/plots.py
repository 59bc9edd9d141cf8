"""Figure data (CSV) and SVG renderings of aggregate tables.

``figure1``: recovery probability with the dual-norm spread against N.
``figure2``: spread of the sample incoherence norm with the ground-truth references.
``figure3``: recovery probability against N, one curve per series (e.g. viscosity).
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.patches  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import QUARTILES, _cell  # noqa: E402

FIG1_COLUMNS = ["series", "N", "recovery_prob"] + [f"dual_{q}" for q in QUARTILES]
FIG2_COLUMNS = (["series", "N"] + [f"incoherence_{q}" for q in QUARTILES]
                + ["incoherence_truth_raw", "incoherence_truth_normalized"])
FIG3_COLUMNS = ["series", "N", "recovery_prob", "trials"]


def _write(path, columns, series):
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for name, rows in series.items():
            for row in rows:
                w.writerow([name] + [_cell(row[c]) for c in columns[1:]])
                n += 1
    return n


def _boxes(ax, rows, prefix, width):
    for row in rows:
        q = [row[f"{prefix}_{k}"] for k in QUARTILES]
        if any(math.isnan(v) for v in q):
            continue
        N = row["N"]
        ax.add_patch(matplotlib.patches.Rectangle((N - width / 2, q[1]), width, q[3] - q[1],
                                                  fill=False, lw=0.8))
        ax.plot([N - width / 2, N + width / 2], [q[2], q[2]], color="k", lw=1.2)
        ax.plot([N, N], [q[0], q[1]], color="k", lw=0.6)
        ax.plot([N, N], [q[3], q[4]], color="k", lw=0.6)


def _width(rows):
    Ns = sorted(r["N"] for r in rows)
    gaps = [b - a for a, b in zip(Ns, Ns[1:])]
    return 0.4 * (min(gaps) if gaps else max(Ns[0], 1) * 0.2)


def _figure1(series, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax2 = ax.twinx()
    for name, rows in series.items():
        if not rows:
            continue
        ax.plot([r["N"] for r in rows], [r["recovery_prob"] for r in rows], "o-", label=name)
        _boxes(ax2, rows, "dual", _width(rows))
    ax2.axhline(1.0, ls=":", color="gray", lw=0.8)
    ax.set_xlabel("N")
    ax.set_ylabel("recovery probability")
    ax.set_ylim(-0.05, 1.05)
    ax2.set_ylabel("dual sup-norm")
    ax2.autoscale_view()
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _figure2(series, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, (name, rows) in enumerate(series.items()):
        if not rows:
            continue
        _boxes(ax, rows, "incoherence", _width(rows))
        Ns = [r["N"] for r in rows]
        for col, style in (("incoherence_truth_raw", ":"), ("incoherence_truth_normalized", "--")):
            ys = [r[col] for r in rows]
            if not all(math.isnan(y) for y in ys):
                ax.plot(Ns, ys, style, label=f"{name} {col.split('_')[-1]} reference")
    ax.set_xlabel("N")
    ax.set_ylabel("incoherence sup-norm")
    ax.autoscale_view()
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _figure3(series, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, rows in series.items():
        if rows:
            ax.plot([r["N"] for r in rows], [r["recovery_prob"] for r in rows], "o-", label=name)
    ax.set_xlabel("N")
    ax.set_ylabel("recovery probability")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_plot_data(aggregates: dict, out_dir) -> list[Path]:
    """Write ``figure{1,2,3}.csv`` and, unless every table is empty, matching SVGs.

    ``aggregates`` maps a series name to its aggregate rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, cols, draw in (("figure1", FIG1_COLUMNS, _figure1), ("figure2", FIG2_COLUMNS, _figure2),
                             ("figure3", FIG3_COLUMNS, _figure3)):
        csv_path = out / f"{stem}.csv"
        n = _write(csv_path, cols, aggregates)
        written.append(csv_path)
        svg_path = out / f"{stem}.svg"
        if n:
            draw(aggregates, svg_path)
            written.append(svg_path)
        elif svg_path.exists():
            svg_path.unlink()
    return written
