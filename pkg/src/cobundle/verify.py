"""Self-checks on a (subsampled) problem: Schur vs dense assembly, back substitution, Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bal_io import BalProblem
from .camera import project_many
from .coobs import BlockJacobian, build_index, build_jacobian
from .linalg import cholesky_solve
from .schur import back_substitute, dense_normal_equation, dense_oracle, diag_scaling, schur_eliminate
from .synthetic import subsample

SCHUR_RTOL = 1e-10
NORMAL_EQ_RTOL = 1e-8
JACOBIAN_RTOL = 1e-5
FD_STEP = 1e-6


@dataclass
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "passed": self.passed}


@dataclass
class VerifyReport:
    num_points: int
    num_cameras: int
    num_observations: int
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def rel_frobenius(x, ref) -> float:
    ref_norm = np.linalg.norm(ref)
    diff = np.linalg.norm(np.asarray(x) - np.asarray(ref))
    return float(diff / ref_norm) if ref_norm > 0 else float(diff)


def numeric_jacobian(camera: np.ndarray, X: np.ndarray, observation: np.ndarray, h: float = FD_STEP):
    """Central differences of the residual w.r.t. the 6 extrinsics and the 3 point coordinates."""
    def residual(cam, pt):
        uv, _ = project_many(cam[None], pt[None])
        return observation - uv[0]

    Jc = np.empty((2, 6))
    for k in range(6):
        step = np.zeros(9)
        step[k] = h
        Jc[:, k] = (residual(camera + step, X) - residual(camera - step, X)) / (2 * h)
    Jp = np.empty((2, 3))
    for k in range(3):
        step = np.zeros(3)
        step[k] = h
        Jp[:, k] = (residual(camera, X + step) - residual(camera, X - step)) / (2 * h)
    return Jc, Jp


def jacobian_error(problem: BalProblem, index, blocks: BlockJacobian, slots) -> float:
    worst = 0.0
    for k in slots:
        obs = problem.observations[index.order[k]]
        Jc, Jp = numeric_jacobian(problem.cameras[index.cameras[k]], problem.points[index.points[k]], obs)
        worst = max(worst, rel_frobenius(blocks.jc[k], Jc), rel_frobenius(blocks.jp[k], Jp))
    return worst


def run_verification(problem: BalProblem, max_points: int = 200, max_cameras: int = 8,
                     seed: int = 0, mu: float = 1e-2, jacobian_samples: int = 100,
                     jacobian_hook: Callable[[BlockJacobian], BlockJacobian] | None = None) -> VerifyReport:
    """``jacobian_hook`` may rewrite the analytic blocks (fault injection in tests)."""
    sub = subsample(problem, max_points, max_cameras, seed)
    report = VerifyReport(sub.num_points, sub.num_cameras, sub.num_observations)
    if sub.num_observations == 0:
        return report
    index = build_index(sub)
    blocks = build_jacobian(sub, index)
    if jacobian_hook is not None:
        blocks = jacobian_hook(blocks)
    D = diag_scaling(blocks, index)

    system, aux = schur_eliminate(blocks, index, mu, D)
    S_ref, r_ref = dense_oracle(blocks, index, mu, D)
    report.checks.append(Check("schur_S", rel_frobenius(system.dense(), S_ref), SCHUR_RTOL))
    report.checks.append(Check("schur_r", rel_frobenius(system.r, r_ref), SCHUR_RTOL))

    observed_cams = np.zeros(sub.num_cameras, dtype=bool)
    observed_cams[index.cameras] = True
    if observed_cams.all():
        dc = cholesky_solve(system, system.r)
        dp = back_substitute(aux, dc, index)
        A, g = dense_normal_equation(blocks, index, mu, D)
        delta = np.concatenate([dp, dc])
        report.checks.append(Check("normal_equation", rel_frobenius(A @ delta, g), NORMAL_EQ_RTOL))

    rng = np.random.default_rng(seed)
    slots = rng.choice(sub.num_observations, size=min(jacobian_samples, sub.num_observations), replace=False)
    report.checks.append(Check("jacobian_fd", jacobian_error(sub, index, blocks, slots), JACOBIAN_RTOL))
    return report
