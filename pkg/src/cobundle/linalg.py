"""Small dense kernels: 3x3 adjugate inversion and an unpivoted Cholesky solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_RTOL = 1e-14


class Singular(ArithmeticError):
    pass


class NotPositiveDefinite(ArithmeticError):
    def __init__(self, message: str, column: int = -1):
        self.column = column
        super().__init__(message)


def det_threshold(dtype) -> float:
    return 1e-30 if np.dtype(dtype) == np.float32 else 1e-300


def adjugate3(M: np.ndarray) -> np.ndarray:
    """Adjugate of (..., 3, 3) matrices (transpose of the cofactor matrix)."""
    a, b, c = M[..., 0, 0], M[..., 0, 1], M[..., 0, 2]
    d, e, f = M[..., 1, 0], M[..., 1, 1], M[..., 1, 2]
    g, h, i = M[..., 2, 0], M[..., 2, 1], M[..., 2, 2]
    adj = np.empty_like(M)
    adj[..., 0, 0] = e * i - f * h
    adj[..., 0, 1] = c * h - b * i
    adj[..., 0, 2] = b * f - c * e
    adj[..., 1, 0] = f * g - d * i
    adj[..., 1, 1] = a * i - c * g
    adj[..., 1, 2] = c * d - a * f
    adj[..., 2, 0] = d * h - e * g
    adj[..., 2, 1] = b * g - a * h
    adj[..., 2, 2] = a * e - b * d
    return adj


def inv3x3_batch(M: np.ndarray):
    """Invert a stack of 3x3 matrices via adj/det.  Returns ``(inverse, det)``.

    No singularity check is made; callers compare ``det`` with their threshold.
    """
    adj = adjugate3(M)
    det = M[..., 0, 0] * adj[..., 0, 0] + M[..., 0, 1] * adj[..., 1, 0] + M[..., 0, 2] * adj[..., 2, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = adj / det[..., None, None]
    return inv, det


def inv3x3_adjugate(M, threshold: float | None = None) -> np.ndarray:
    M = np.asarray(M)
    if M.dtype.kind != "f":
        M = M.astype(np.float64)
    if threshold is None:
        threshold = det_threshold(M.dtype)
    inv, det = inv3x3_batch(M)
    if not abs(det) >= threshold:
        raise Singular(f"|det| = {abs(det):.3g} below {threshold:g}")
    return inv


@dataclass
class SymmetricFactor:
    """Lower Cholesky factor, stored as the row-major packed lower triangle."""
    packed: np.ndarray
    n: int

    def lower(self) -> np.ndarray:
        L = np.zeros((self.n, self.n), dtype=self.packed.dtype)
        L[np.tril_indices(self.n)] = self.packed
        return L

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        L = self.lower()
        y = np.array(rhs, dtype=L.dtype)
        n = self.n
        for k in range(n):
            y[k] = (y[k] - L[k, :k] @ y[:k]) / L[k, k]
        for k in range(n - 1, -1, -1):
            y[k] = (y[k] - L[k + 1:, k] @ y[k + 1:]) / L[k, k]
        return y


def cholesky_factor(A: np.ndarray) -> SymmetricFactor:
    """Plain Cholesky-Banachiewicz, no pivoting.  Only the lower triangle of A is read."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    L = np.zeros_like(A)
    tol = PIVOT_RTOL * (np.max(np.diag(A)) if n else 0.0)
    for j in range(n):
        s = A[j, j] - L[j, :j] @ L[j, :j]
        if not s > tol:
            raise NotPositiveDefinite(f"pivot {s:.3g} at column {j} is not positive", j)
        L[j, j] = np.sqrt(s)
        L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return SymmetricFactor(L[np.tril_indices(n)], n)


def cholesky_solve(S, r) -> np.ndarray:
    """Solve S x = r; ``S`` is a SchurSystem (reassembled) or a dense array."""
    dense = S.dense() if hasattr(S, "dense") else np.asarray(S, dtype=np.float64)
    return cholesky_factor(dense).solve(np.asarray(r, dtype=np.float64))
