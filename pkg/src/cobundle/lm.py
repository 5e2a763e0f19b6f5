"""Levenberg-Marquardt driver with Schur-complement linear solves.

Parameters are stacked as ``[points (3a); extrinsics (6b)]``; intrinsics stay
fixed.  The gradient ``g`` follows the convention ``g = J_f^T e`` with ``J_f``
the Jacobian of the predicted measurements, so a step ``delta`` solving
``(A + mu D^T D) delta = g`` is added to the parameters.  Residual blocks hold
``d e / d p = -J_f``; the sign is absorbed when the step is formed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .bal_io import BalProblem
from .camera import canonicalize_rotation
from .coobs import BlockJacobian, build_index, build_jacobian
from .linalg import NotPositiveDefinite, cholesky_solve
from .schur import (SingularPointBlock, back_substitute, convert_precision,
                    dense_normal_equation, diag_scaling, schur_eliminate)

log = logging.getLogger(__name__)

MAX_FAILED_SOLVES = 32
PHASES = ("JU", "SE", "CFS", "GRE", "TRE")


class LmFailure(ArithmeticError):
    pass


@dataclass
class LmConfig:
    tau: float = 1e-3
    eps1: float = 1e-10
    eps2: float = 1e-10
    k_max: int = 50


@dataclass
class IterationTrace:
    iteration: int
    cost: float
    grad_inf: float
    mu: float
    rho: float
    accepted: bool
    timings: dict[str, float] = field(default_factory=dict)

    def as_dict(self, timings: bool = True) -> dict:
        d = {"iteration": self.iteration, "cost": self.cost, "grad_inf": self.grad_inf,
             "mu": self.mu, "rho": self.rho, "accepted": self.accepted}
        if timings:
            d["timings"] = dict(self.timings)
        return d


@dataclass
class LmTrace:
    initial_cost: float
    final_cost: float = float("nan")
    stop_reason: str = ""
    iterations: list[IterationTrace] = field(default_factory=list)

    def accepted_costs(self) -> list[float]:
        return [self.initial_cost] + [it.cost for it in self.iterations if it.accepted]


def pack(problem: BalProblem) -> np.ndarray:
    return np.concatenate([problem.points.ravel(), problem.cameras[:, :6].ravel()])


def unpack(problem: BalProblem, p: np.ndarray):
    a = problem.num_points
    pts = p[:3 * a].reshape(a, 3)
    cams = problem.cameras.copy()
    cams[:, :6] = p[3 * a:].reshape(-1, 6)
    return cams, pts


def gain_ratio(cost_old: float, cost_new: float, delta_p, mu: float, g, dtd=None) -> float:
    """Actual over predicted cost reduction.

    The predicted reduction is ``delta^T (mu * dtd * delta + g)``; ``dtd`` is
    the diagonal of D^T D and defaults to the identity.  A non-positive
    prediction is reported as -inf so the step is rejected.
    """
    delta_p = np.asarray(delta_p, dtype=np.float64)
    scale = 1.0 if dtd is None else np.asarray(dtd, dtype=np.float64)
    denom = float(delta_p @ (mu * scale * delta_p + np.asarray(g, dtype=np.float64)))
    if not denom > 0.0:
        return float("-inf")
    rho = (cost_old - cost_new) / denom
    return rho if np.isfinite(rho) else float("-inf")


def update_mu(mu: float, nu: float, rho: float) -> tuple[float, float]:
    if rho > 0:
        return mu * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3), 2.0
    return mu * nu, 2.0 * nu


def gradient(blocks: BlockJacobian, index) -> np.ndarray:
    """``J_f^T e`` stacked as [points; cameras]."""
    a, b = index.num_points, index.num_cameras
    gp = np.zeros((a, 3))
    gc = np.zeros((b, 6))
    np.add.at(gp, index.points, np.einsum("nki,nk->ni", blocks.jp, blocks.residuals))
    np.add.at(gc, index.cameras, np.einsum("nki,nk->ni", blocks.jc, blocks.residuals))
    return -np.concatenate([gp.ravel(), gc.ravel()])


def cost_at(problem, index, cams, pts) -> float:
    blocks = build_jacobian(problem, index, cams, pts)
    if blocks.degenerate.any():
        return float("inf")
    return float(np.sum(blocks.residuals ** 2))


def _step(blocks, index, mu, D, precision, threads, linear_solver):
    """Solve the damped system; returns (delta, phase timings)."""
    t0 = time.perf_counter()
    if linear_solver == "dense":
        A, rhs = dense_normal_equation(blocks, index, mu, D)
        step = np.linalg.solve(A, rhs)
        t1 = time.perf_counter()
        return -step, {"SE": 0.0, "CFS": t1 - t0}
    work = convert_precision(blocks, precision) if precision == 32 else blocks
    system, aux = schur_eliminate(work, index, mu, D, threads=threads)
    t1 = time.perf_counter()
    dc = cholesky_solve(system, system.r.astype(np.float64))
    dp = back_substitute(aux, dc, index)
    t2 = time.perf_counter()
    return -np.concatenate([dp, dc]), {"SE": t1 - t0, "CFS": t2 - t1}


def solve(problem: BalProblem, config: LmConfig | None = None, *,
          threads: int = 1, precision: int = 64, linear_solver: str = "schur"):
    """Run LM on ``problem``; returns ``(optimized_problem, LmTrace)``.

    ``linear_solver="dense"`` replaces Schur elimination with a dense solve of
    the full normal equation (small problems only; used to cross-check).
    """
    config = config or LmConfig()
    if problem.num_observations < 1:
        raise ValueError("problem has no observations")
    index = build_index(problem)

    p = pack(problem)
    cams, pts = unpack(problem, p)
    t0 = time.perf_counter()
    blocks = build_jacobian(problem, index, cams, pts)
    if blocks.degenerate.any():
        raise LmFailure("initial parameters place a point on a camera's principal plane")
    cost = float(np.sum(blocks.residuals ** 2))
    D = diag_scaling(blocks, index)
    g = gradient(blocks, index)
    ju_time = time.perf_counter() - t0

    trace = LmTrace(initial_cost=cost)
    k, nu = 0, 2.0
    mu = config.tau * float(np.max(D * D))
    stop = float(np.max(np.abs(g))) <= config.eps1
    if stop:
        trace.stop_reason = "gradient"
    failures = 0

    while not stop and k < config.k_max:
        k += 1
        timings = {"JU": ju_time}
        ju_time = 0.0
        try:
            delta, t = _step(blocks, index, mu, D, precision, threads, linear_solver)
            timings.update(t)
            failures = 0
        except (NotPositiveDefinite, SingularPointBlock, np.linalg.LinAlgError) as exc:
            failures += 1
            log.debug("iteration %d: linear solve failed (%s), inflating mu", k, exc)
            if failures > MAX_FAILED_SOLVES:
                raise LmFailure(f"linear solve failed {failures} times in a row; last error: {exc}") from exc
            t_ = time.perf_counter()
            mu, nu = update_mu(mu, nu, -1.0)
            timings["TRE"] = time.perf_counter() - t_
            trace.iterations.append(IterationTrace(k, cost, float(np.max(np.abs(g))), mu, float("nan"), False, timings))
            continue

        if np.linalg.norm(delta) <= config.eps2 * np.linalg.norm(p):
            trace.stop_reason = "small-step"
            break

        t_ = time.perf_counter()
        p_new = p + delta
        cams_new, pts_new = unpack(problem, p_new)
        cams_new[:, 0:3] = canonicalize_rotation(cams_new[:, 0:3])
        p_new = np.concatenate([pts_new.ravel(), cams_new[:, :6].ravel()])
        cost_new = cost_at(problem, index, cams_new, pts_new)
        rho = gain_ratio(cost, cost_new, delta, mu, g, dtd=D * D)
        timings["GRE"] = time.perf_counter() - t_
        mu_used = mu

        if rho > 0:
            t_ = time.perf_counter()
            p, cams, pts, cost = p_new, cams_new, pts_new, cost_new
            blocks = build_jacobian(problem, index, cams, pts)
            D = diag_scaling(blocks, index)
            g = gradient(blocks, index)
            timings["JU"] += time.perf_counter() - t_
            stop = float(np.max(np.abs(g))) <= config.eps1
            if stop:
                trace.stop_reason = "gradient"
        t_ = time.perf_counter()
        mu, nu = update_mu(mu, nu, rho)
        timings["TRE"] = time.perf_counter() - t_
        trace.iterations.append(IterationTrace(k, cost, float(np.max(np.abs(g))), mu_used,
                                               float(rho), bool(rho > 0), timings))
        log.debug("iteration %d: cost=%.6g rho=%.3g mu=%.3g", k, cost, rho, mu)

    if not trace.stop_reason:
        trace.stop_reason = "k_max"
    trace.final_cost = cost
    out = problem.copy()
    out.cameras, out.points = cams.copy(), pts.copy()
    return out, trace
