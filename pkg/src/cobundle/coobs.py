"""Co-observation index: the point-major block layout used by Schur elimination.

Observations are re-sorted by (point, camera).  For fixed block sizes the BCSR
``block-starts`` array is redundant, and the column-index array becomes the
per-point sorted camera set.  ``offsets[i]:offsets[i+1]`` addresses point i's
blocks, and ``co[i]`` is the number of cameras observing it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bal_io import BalProblem
from .camera import residual_blocks


@dataclass(frozen=True)
class CoObservationIndex:
    num_points: int
    num_cameras: int
    order: np.ndarray     # (o,) original observation index at each point-major slot
    cameras: np.ndarray   # (o,) camera index per slot; strictly increasing within a point
    points: np.ndarray    # (o,) point index per slot; non-decreasing
    offsets: np.ndarray   # (a+1,) first slot of each point

    @property
    def co(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def num_observations(self) -> int:
        return len(self.order)

    def cameras_of(self, i: int) -> np.ndarray:
        return self.cameras[self.offsets[i]:self.offsets[i + 1]]

    def sigma(self, i: int, j: int) -> int:
        return int(self.slot(i, j) is not None)

    def slot(self, i: int, j: int) -> int | None:
        """Point-major slot of observation (point i, camera j), by binary search."""
        lo, hi = self.offsets[i], self.offsets[i + 1]
        k = lo + int(np.searchsorted(self.cameras[lo:hi], j))
        if k < hi and self.cameras[k] == j:
            return k
        return None

    def visibility(self) -> np.ndarray:
        """Dense (a, b) 0/1 matrix; for tests and small problems."""
        vis = np.zeros((self.num_points, self.num_cameras), dtype=np.int8)
        vis[self.points, self.cameras] = 1
        return vis


@dataclass
class BlockJacobian:
    """Residual blocks in point-major order (aligned with a CoObservationIndex)."""
    residuals: np.ndarray   # (o, 2)
    jc: np.ndarray          # (o, 2, 6)
    jp: np.ndarray          # (o, 2, 3)
    degenerate: np.ndarray  # (o,) bool

    @property
    def dtype(self):
        return self.jc.dtype

    def __len__(self) -> int:
        return self.residuals.shape[0]


def build_index(problem: BalProblem) -> CoObservationIndex:
    a, b = problem.num_points, problem.num_cameras
    order = np.lexsort((problem.camera_index, problem.point_index))
    points = problem.point_index[order]
    cameras = problem.camera_index[order]
    offsets = np.zeros(a + 1, dtype=np.int64)
    np.cumsum(np.bincount(points, minlength=a), out=offsets[1:])
    return CoObservationIndex(a, b, order, cameras, points, offsets)


def co_histogram(index: CoObservationIndex) -> dict[int, tuple[int, float]]:
    """CO value -> (point count, percent of observed points).

    Points nobody observes (CO = 0) are left out, as are CO values with no points.
    """
    co = index.co[index.co > 0]
    if co.size == 0:
        return {}
    values, counts = np.unique(co, return_counts=True)
    total = counts.sum()
    return {int(v): (int(n), float(100.0 * n / total)) for v, n in zip(values, counts)}


def build_jacobian(problem: BalProblem, index: CoObservationIndex,
                   cameras: np.ndarray | None = None,
                   points: np.ndarray | None = None) -> BlockJacobian:
    """Evaluate residual blocks at the given parameters (defaults: the problem's own)."""
    cameras = problem.cameras if cameras is None else cameras
    points = problem.points if points is None else points
    r, jc, jp, bad = residual_blocks(cameras[index.cameras], points[index.points],
                                     problem.observations[index.order])
    return BlockJacobian(r, jc, jp, bad)


def dense_jacobian(blocks: BlockJacobian, index: CoObservationIndex):
    """Stack blocks into the dense (2o, 3a + 6b) Jacobian and residual vector."""
    a, b, o = index.num_points, index.num_cameras, index.num_observations
    J = np.zeros((2 * o, 3 * a + 6 * b), dtype=blocks.jc.dtype)
    for k in range(o):
        i, j = index.points[k], index.cameras[k]
        J[2 * k:2 * k + 2, 3 * i:3 * i + 3] = blocks.jp[k]
        J[2 * k:2 * k + 2, 3 * a + 6 * j:3 * a + 6 * j + 6] = blocks.jc[k]
    return J, blocks.residuals.reshape(-1)
