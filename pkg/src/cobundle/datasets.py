"""Reference statistics for the five BAL problems used in the evaluation."""

from __future__ import annotations

import os
from pathlib import Path

# (images, points, observations)
TABLE_SIZES = {
    1: (16, 22106, 83718),
    2: (21, 11315, 36455),
    3: (39, 18060, 63551),
    4: (49, 7776, 31843),
    5: (50, 20431, 73967),
}

BAL_FILES = {
    1: "problem-16-22106-pre.txt",
    2: "problem-21-11315-pre.txt",
    3: "problem-39-18060-pre.txt",
    4: "problem-49-7776-pre.txt",
    5: "problem-50-20431-pre.txt",
}

# percent of points per CO value; the last column aggregates CO in 21..29
_CO_COLUMNS = list(range(2, 21)) + ["21-29"]
_CO_ROWS = {
    1: [38.89, 20.41, 12.96, 9.12, 6.39, 4.32, 2.92, 2.04, 1.38, 0.94,
        0.44, 0.17, 0.03, 0, 0, 0, 0, 0, 0, 0],
    2: [51.78, 19.60, 10.97, 6.57, 4.05, 2.85, 1.74, 1.09, 0.65, 0.27,
        0.18, 0.15, 0.07, 0.04, 0, 0, 0, 0, 0, 0],
    3: [51.86, 17.19, 10.03, 5.69, 4.06, 3.04, 2.31, 1.81, 1.21, 0.96,
        0.64, 0.35, 0.42, 0.22, 0.13, 0.06, 0.01, 0.01, 0.01, 0],
    4: [44.35, 17.84, 10.60, 6.73, 5.00, 3.33, 2.73, 2.13, 1.62, 1.53,
        1.02, 0.64, 0.51, 0.35, 0.40, 0.35, 0.17, 0.21, 0.12, 0.39],
    5: [52.14, 17.08, 9.30, 5.51, 3.93, 2.69, 2.40, 1.75, 1.48, 1.02,
        0.65, 0.57, 0.48, 0.35, 0.29, 0.12, 0.09, 0.09, 0.02, 0.02],
}
AGGREGATE_CO = 25  # representative CO for the 21..29 column


def co_percentages(dataset: int) -> dict[int, float]:
    """Published CO distribution of a dataset, with the 21..29 bucket placed at CO=25."""
    out: dict[int, float] = {}
    for col, pct in zip(_CO_COLUMNS, _CO_ROWS[dataset]):
        if pct:
            out[AGGREGATE_CO if col == "21-29" else col] = pct
    return out


def co_counts(dataset: int) -> dict[int, int]:
    """Integer point counts per CO value, scaled to the dataset's point total.

    Largest-remainder rounding keeps the total equal to the published count.
    """
    pct = co_percentages(dataset)
    total_pts = TABLE_SIZES[dataset][1]
    s = sum(pct.values())
    exact = {c: total_pts * v / s for c, v in pct.items()}
    counts = {c: int(x) for c, x in exact.items()}
    short = total_pts - sum(counts.values())
    for c in sorted(exact, key=lambda c: exact[c] - counts[c], reverse=True)[:short]:
        counts[c] += 1
    return counts


def data_dir() -> Path | None:
    env = os.environ.get("COBUNDLE_BAL_DIR")
    return Path(env) if env else None


def find_dataset(dataset: int) -> Path | None:
    """Locate a downloaded BAL file (plain, .gz or .bz2) under $COBUNDLE_BAL_DIR."""
    root = data_dir()
    if root is None:
        return None
    for suffix in ("", ".gz", ".bz2"):
        path = root / (BAL_FILES[dataset] + suffix)
        if path.exists():
            return path
    return None
