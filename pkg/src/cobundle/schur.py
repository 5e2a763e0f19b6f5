"""Schur elimination of point blocks, driven by the co-observation index.

The damped normal matrix is partitioned as ``[[U, W^T], [W, V]]`` with U the
block-diagonal point part (3x3 blocks) and V the camera part (6x6 blocks).
Eliminating the points gives the reduced camera system

    S = V - W U^{-1} W^T,     r = J_c^T e - W U^{-1} J_p^T e

which is accumulated point by point: only the camera pairs inside each
point's co-observation set receive a contribution, so the pair loop costs
``sum_i CO_i^2`` block products rather than ``a * b^2``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import MutableMapping

import numpy as np

from .coobs import BlockJacobian, CoObservationIndex, dense_jacobian
from .linalg import det_threshold, inv3x3_batch

PAIR_CHUNK = 1 << 15


class SingularPointBlock(ArithmeticError):
    def __init__(self, point: int, det: float):
        self.point = point
        self.det = det
        super().__init__(f"U block of point {point} is singular (det={det:.3g}); increase damping")


def upper_slot(j1, j2, b: int):
    """Packed row-major position of block (j1, j2), j1 < j2, in the strict upper triangle."""
    return j1 * b - (j1 * (j1 + 1)) // 2 + (j2 - j1 - 1)


@dataclass
class SchurSystem:
    diag: np.ndarray    # (b, 6, 6) full diagonal blocks
    upper: np.ndarray   # (b(b-1)/2, 6, 6) blocks j1 < j2, row-major packed
    r: np.ndarray       # (6b,)

    @property
    def num_cameras(self) -> int:
        return self.diag.shape[0]

    def block(self, j1: int, j2: int) -> np.ndarray:
        if j1 == j2:
            return self.diag[j1]
        if j1 < j2:
            return self.upper[upper_slot(j1, j2, self.num_cameras)]
        return self.upper[upper_slot(j2, j1, self.num_cameras)].T

    def dense(self) -> np.ndarray:
        """Reassemble the symmetric 6b x 6b matrix (float64)."""
        b = self.num_cameras
        S = np.zeros((6 * b, 6 * b))
        for j in range(b):
            S[6 * j:6 * j + 6, 6 * j:6 * j + 6] = self.diag[j]
        j1, j2 = np.triu_indices(b, 1)
        for s, (p, q) in enumerate(zip(j1, j2)):
            blk = self.upper[s]
            S[6 * p:6 * p + 6, 6 * q:6 * q + 6] = blk
            S[6 * q:6 * q + 6, 6 * p:6 * p + 6] = blk.T
        return S

    def frobenius_norm(self) -> float:
        # off-diagonal blocks appear twice in the full matrix
        d = np.sum(self.diag.astype(np.float64) ** 2)
        u = np.sum(self.upper.astype(np.float64) ** 2)
        return float(np.sqrt(d + 2.0 * u))


@dataclass
class PointAux:
    U: np.ndarray        # (a, 3, 3) damped point blocks
    inv: np.ndarray      # (a, 3, 3) their inverses (zero for unobserved points)
    gp: np.ndarray       # (a, 3) J_p^T e per point
    W: np.ndarray        # (o, 6, 3) J_c^T J_p per observation, point-major


def diag_scaling(blocks: BlockJacobian, index: CoObservationIndex) -> np.ndarray:
    """D with D^T D = diag(J^T J), ordered [points (3a); cameras (6b)]."""
    a, b = index.num_points, index.num_cameras
    dp = np.zeros((a, 3))
    dc = np.zeros((b, 6))
    np.add.at(dp, index.points, np.sum(blocks.jp.astype(np.float64) ** 2, axis=1))
    np.add.at(dc, index.cameras, np.sum(blocks.jc.astype(np.float64) ** 2, axis=1))
    return np.sqrt(np.concatenate([dp.ravel(), dc.ravel()]))


def convert_precision(blocks: BlockJacobian, mode="binary64") -> BlockJacobian:
    """Round every stored value to IEEE binary32 or binary64."""
    dtype = {"binary32": np.float32, "32": np.float32, 32: np.float32,
             "binary64": np.float64, "64": np.float64, 64: np.float64}[mode]
    return BlockJacobian(blocks.residuals.astype(dtype), blocks.jc.astype(dtype),
                         blocks.jp.astype(dtype), blocks.degenerate)


def _pair_slots(index: CoObservationIndex):
    """All slot pairs (k1, k2), k1 <= k2, inside each point's co-observation set, in point order."""
    co = index.co
    starts = index.offsets[:-1]
    k1s, k2s = [], []
    for c in np.unique(co):
        if c == 0:
            continue
        base = starts[co == c]
        t1, t2 = np.triu_indices(c)
        k1s.append((base[:, None] + t1).ravel())
        k2s.append((base[:, None] + t2).ravel())
    if not k1s:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    k1 = np.concatenate(k1s)
    k2 = np.concatenate(k2s)
    order = np.lexsort((k2, k1))
    return k1[order], k2[order]


def _accumulate_pairs(buf, Y, W, bucket, k1, k2):
    for s in range(0, len(k1), PAIR_CHUNK):
        a, b_ = k1[s:s + PAIR_CHUNK], k2[s:s + PAIR_CHUNK]
        np.add.at(buf, bucket[s:s + PAIR_CHUNK], -np.einsum("nij,nkj->nik", Y[a], W[b_]))


def schur_eliminate(blocks: BlockJacobian, index: CoObservationIndex, mu: float, D,
                    threads: int = 1,
                    counter: MutableMapping[str, int] | None = None):
    """Build the packed reduced camera system and the per-point auxiliaries.

    Arithmetic runs in the dtype of ``blocks`` (see ``convert_precision``).
    With ``threads > 1`` the pair loop is split into contiguous ranges whose
    partial sums are merged in range order; ``threads == 1`` is bitwise
    reproducible.
    """
    if mu < 0:
        raise ValueError("damping must be non-negative")
    dt = blocks.jc.dtype
    a, b, o = index.num_points, index.num_cameras, index.num_observations
    mu = dt.type(mu)
    D = np.asarray(D, dtype=dt)
    Dp2 = (D[:3 * a] ** 2).reshape(a, 3)
    Dc2 = (D[3 * a:] ** 2).reshape(b, 6)
    jc, jp, e = blocks.jc, blocks.jp, blocks.residuals
    pts, cams = index.points, index.cameras

    # lines 1-2: S_jj = mu D_j^T D_j ; r_j = 0
    nblk = b + b * (b - 1) // 2
    buf = np.zeros((nblk, 6, 6), dtype=dt)
    idx6 = np.arange(6)
    buf[np.arange(b)[:, None], idx6, idx6] = mu * Dc2
    r = np.zeros((b, 6), dtype=dt)

    # lines 4-11
    U = np.zeros((a, 3, 3), dtype=dt)
    idx3 = np.arange(3)
    U[np.arange(a)[:, None], idx3, idx3] = mu * Dp2
    np.add.at(U, pts, np.einsum("nki,nkj->nij", jp, jp))
    gp = np.zeros((a, 3), dtype=dt)
    np.add.at(gp, pts, np.einsum("nki,nk->ni", jp, e))
    W = np.einsum("nki,nkj->nij", jc, jp)
    np.add.at(buf, cams, np.einsum("nki,nkj->nij", jc, jc))
    np.add.at(r, cams, np.einsum("nki,nk->ni", jc, e))

    # line 12
    inv, det = inv3x3_batch(U)
    observed = index.co > 0
    bad = observed & ~(np.abs(det) >= det_threshold(dt))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise SingularPointBlock(i, float(det[i]))
    inv[~observed] = 0

    # lines 13-16, restricted to j1 <= j2
    Y = W @ inv[pts]
    np.add.at(r, cams, -np.einsum("nij,nj->ni", Y, gp[pts]))
    k1, k2 = _pair_slots(index)
    c1, c2 = cams[k1], cams[k2]
    bucket = np.where(c1 == c2, c1, b + upper_slot(c1, c2, b))

    if threads <= 1 or len(k1) < 2 * PAIR_CHUNK:
        _accumulate_pairs(buf, Y, W, bucket, k1, k2)
    else:
        bounds = np.linspace(0, len(k1), threads + 1).astype(int)
        parts = [np.zeros_like(buf) for _ in range(threads)]

        def work(t):
            sl = slice(bounds[t], bounds[t + 1])
            _accumulate_pairs(parts[t], Y, W, bucket[sl], k1[sl], k2[sl])

        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, range(threads)))
        for part in parts:
            buf += part

    if counter is not None:
        counter["observation_updates"] = counter.get("observation_updates", 0) + o
        counter["pair_updates"] = counter.get("pair_updates", 0) + len(k1)
        counter["full_pair_iterations"] = counter.get("full_pair_iterations", 0) + int(np.sum(index.co.astype(np.int64) ** 2))

    diag = buf[:b]
    # mirror so the stored diagonal blocks are exactly symmetric
    diag = dt.type(0.5) * (diag + diag.transpose(0, 2, 1))
    system = SchurSystem(diag, buf[b:], r.reshape(-1))
    return system, PointAux(U, inv, gp, W)


def back_substitute(aux: PointAux, delta_c, index: CoObservationIndex) -> np.ndarray:
    """Point updates: dp_i = inv_i (g_i - sum_j W_ij^T dc_j), flattened to (3a,)."""
    dc = np.asarray(delta_c, dtype=np.float64).reshape(-1, 6)
    t = aux.gp.astype(np.float64).copy()
    W = aux.W.astype(np.float64)
    np.add.at(t, index.points, -np.einsum("nki,nk->ni", W, dc[index.cameras]))
    return np.einsum("aij,aj->ai", aux.inv.astype(np.float64), t).reshape(-1)


def dense_normal_equation(blocks: BlockJacobian, index: CoObservationIndex, mu: float, D):
    """Dense (J^T J + mu D^T D, J^T e); test-scale only."""
    J, e = dense_jacobian(blocks, index)
    J = J.astype(np.float64)
    D = np.asarray(D, dtype=np.float64)
    return J.T @ J + mu * np.diag(D * D), J.T @ e.astype(np.float64)


def dense_oracle(blocks: BlockJacobian, index: CoObservationIndex, mu: float, D):
    """Reduced camera system by explicit dense assembly and a dense inverse of U."""
    m = 3 * index.num_points
    A, g = dense_normal_equation(blocks, index, mu, D)
    U, Wt, V = A[:m, :m], A[:m, m:], A[m:, m:]
    W = Wt.T
    if m:
        Uinv = np.linalg.inv(U)
        S = V - W @ Uinv @ W.T
        r = g[m:] - W @ Uinv @ g[:m]
    else:
        S, r = V, g[m:]
    return S, r
