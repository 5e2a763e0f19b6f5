"""Figure rendering for CLI reports.  Figures are written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "savefig.dpi": 150,
    # fixed metadata keeps re-runs byte-identical
    "svg.hashsalt": "cobundle",
}


def _figure(width=4.5, height=2.8):
    return plt.subplots(figsize=(width, height), constrained_layout=True)


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def co_histogram_figure(histogram: dict[int, tuple[int, float]], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        cos = sorted(histogram)
        ax.bar(cos, [histogram[c][1] for c in cos], width=0.8, color="0.35")
        ax.set_xlabel("co-observation value")
        ax.set_ylabel("points (%)")
        return _save(fig, path)


def cost_trace_figure(costs: list[float], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ax.semilogy(range(len(costs)), [max(c, 1e-300) for c in costs], marker="o", ms=3, lw=1, color="k")
        ax.set_xlabel("accepted step")
        ax.set_ylabel("squared reprojection error")
        return _save(fig, path)


def comparison_figure(rows: list[dict], path: Path) -> Path:
    datasets = list(dict.fromkeys(r["dataset"] for r in rows))
    configs = list(dict.fromkeys(r["config"] for r in rows))
    lookup = {(r["dataset"], r["config"]): r["overlapped_ms"] for r in rows}
    width = 0.8 / max(len(configs), 1)
    with plt.rc_context(STYLE):
        fig, ax = _figure(5.5, 3.0)
        for n, cfg in enumerate(configs):
            xs = [d + n * width for d in range(len(datasets))]
            ax.bar(xs, [lookup[(ds, cfg)] for ds in datasets], width=width, label=cfg)
        ax.set_xticks([d + 0.4 - width / 2 for d in range(len(datasets))], datasets)
        ax.set_ylabel("predicted time (ms)")
        ax.legend()
        return _save(fig, path)
