"""Synthetic BAL problems with known ground truth."""

from __future__ import annotations

import numpy as np

from .bal_io import BalProblem
from .camera import project_many


def make_problem(num_cameras: int, num_points: int, seed: int = 0, *,
                 visibility: float = 1.0, min_co: int = 1,
                 focal: float = 500.0, distortion: bool = True,
                 noise: float = 0.0) -> BalProblem:
    """Cameras on a ring looking at a unit cloud; observations are exact projections plus ``noise``.

    Each point is seen by every camera with probability ``visibility`` but by at
    least ``min(min_co, num_cameras)`` cameras.
    """
    rng = np.random.default_rng(seed)
    b, a = num_cameras, num_points
    cams = np.zeros((b, 9))
    cams[:, 0:3] = rng.normal(scale=0.1, size=(b, 3))
    cams[:, 3:5] = rng.normal(scale=0.5, size=(b, 2))
    cams[:, 5] = -rng.uniform(6.0, 9.0, size=b)
    cams[:, 6] = focal * rng.uniform(0.9, 1.1, size=b)
    if distortion:
        cams[:, 7] = rng.normal(scale=1e-2, size=b)
        cams[:, 8] = rng.normal(scale=1e-3, size=b)
    pts = rng.uniform(-1.0, 1.0, size=(a, 3))

    vis = rng.random((a, b)) < visibility
    need = min(min_co, b)
    for i in np.flatnonzero(vis.sum(axis=1) < need):
        vis[i, rng.choice(b, size=need, replace=False)] = True
    pt_idx, cam_idx = np.nonzero(vis)
    uv, _ = project_many(cams[cam_idx], pts[pt_idx])
    if noise:
        uv = uv + rng.normal(scale=noise, size=uv.shape)
    perm = rng.permutation(len(pt_idx))
    return BalProblem(cams, pts, cam_idx[perm], pt_idx[perm], uv[perm])


def perturb(problem: BalProblem, scale: float, seed: int = 0) -> BalProblem:
    """Add Gaussian noise of std ``scale`` to every extrinsic and point coordinate."""
    rng = np.random.default_rng(seed)
    out = problem.copy()
    out.cameras[:, 0:6] += rng.normal(scale=scale, size=(problem.num_cameras, 6))
    out.points += rng.normal(scale=scale, size=out.points.shape)
    return out


def subsample(problem: BalProblem, max_points: int, max_cameras: int, seed: int = 0) -> BalProblem:
    """Keep at most ``max_cameras`` cameras and ``max_points`` points still observed by them."""
    rng = np.random.default_rng(seed)
    b = problem.num_cameras
    keep_c = np.sort(rng.choice(b, size=min(b, max_cameras), replace=False))
    cam_map = -np.ones(b, dtype=np.int64)
    cam_map[keep_c] = np.arange(len(keep_c))
    mask = cam_map[problem.camera_index] >= 0
    seen = np.unique(problem.point_index[mask])
    keep_p = np.sort(rng.choice(seen, size=min(len(seen), max_points), replace=False)) if len(seen) else seen
    pt_map = -np.ones(problem.num_points, dtype=np.int64)
    pt_map[keep_p] = np.arange(len(keep_p))
    mask &= pt_map[problem.point_index] >= 0
    return BalProblem(problem.cameras[keep_c], problem.points[keep_p],
                      cam_map[problem.camera_index[mask]], pt_map[problem.point_index[mask]],
                      problem.observations[mask])
