"""The implicit Runge-Kutta time step.

Stages solve the fixed-point equation

    W = (I - h a (x) A)^{-1} (1 u + h a B(W))

by plain iteration started from the B = 0 solution; the update is then
evaluated in resolvent form,

    u' = S(hA) u + h b^T (I - h a (x) A)^{-1} B(W),

which stays well defined for arbitrarily stiff spectral symbols.  The
iteration contracts when h times the local Lipschitz constant of B
(times the stage-matrix norm) is below one; the recorded contraction
estimate is the empirical face of that product and scales linearly
in h.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailureError, NumericalBlowupError
from .problems import ProblemSpec, evaluate_B_array, evaluate_B_tangent_array
from .spectral import (
    StageSet,
    State,
    apply_A,
    apply_S_hA,
    base_norm,
    step_matrices,
)
from .tableau import ButcherTableau


@dataclass(frozen=True)
class SolverConfig:
    """Step size and fixed-point iteration controls.

    ``fp_tol`` is an absolute tolerance on the base-norm stage update;
    order studies must keep it well below the local error they resolve.
    ``debug_checks`` additionally evaluates the direct update form each
    step and verifies it against the resolvent form.
    """

    h: float
    fp_tol: float = 1e-12
    fp_max_iters: int = 200
    contraction_warn: float = 0.9
    debug_checks: bool = False

    def __post_init__(self):
        if self.h < 0 or not math.isfinite(self.h):
            raise ValueError("step size must be finite and nonnegative")
        if self.fp_tol <= 0:
            raise ValueError("fixed-point tolerance must be positive")
        if self.fp_max_iters < 1:
            raise ValueError("iteration cap must be at least 1")


@dataclass(frozen=True)
class StepStats:
    iterations: int
    final_residual: float
    contraction_estimate: float


def _stage_residual(grid, delta):
    """Max base norm over stages of a stage-data difference."""
    return max(base_norm(State(grid, delta[j])) for j in range(delta.shape[0]))


def _a_weighted(a, stack):
    return np.einsum("ij,j...->i...", a, stack)


def fixed_point_stages(
    p: ProblemSpec, t: ButcherTableau, u: State, cfg: SolverConfig
) -> tuple[StageSet, StepStats]:
    """Solve the stage equations by fixed-point iteration.

    Starts from the linear-part solution (one resolvent solve, exact for
    B = 0) and iterates until the base-norm update falls below
    ``cfg.fp_tol``.  A step size of 0 is accepted here as a degenerate
    probe and returns the trivial stages after one iteration.
    """
    if u.grid != p.grid:
        raise ValueError("state lives on a different grid than the problem")
    h = cfg.h
    s, c, n = t.s, p.grid.components, p.grid.n
    stage_inv, _ = step_matrices(t, h, p.grid)
    broadcast_u = np.broadcast_to(u.coeffs, (s, c, n))

    w = _apply_stage_inv(stage_inv, broadcast_u)
    residuals = []
    for iteration in range(1, cfg.fp_max_iters + 1):
        rhs = broadcast_u + h * _a_weighted(t.a, evaluate_B_array(p, w))
        w_new = _apply_stage_inv(stage_inv, rhs)
        residual = _stage_residual(p.grid, w_new - w)
        if not math.isfinite(residual):
            raise NumericalBlowupError(
                f"non-finite stage residual at iteration {iteration} (h={h:g})"
            )
        residuals.append(residual)
        w = w_new
        if residual <= cfg.fp_tol:
            stats = StepStats(iteration, residual, _contraction(residuals))
            if stats.contraction_estimate > cfg.contraction_warn:
                warnings.warn(
                    f"fixed-point contraction {stats.contraction_estimate:.3f} near 1; "
                    f"step size {h:g} is close to the convergence limit",
                    stacklevel=2,
                )
            return StageSet(p.grid, w), stats
    stats = StepStats(cfg.fp_max_iters, residuals[-1], _contraction(residuals))
    raise ConvergenceFailureError(stats)


def _contraction(residuals):
    if len(residuals) < 2 or residuals[0] == 0.0:
        return 0.0
    return residuals[1] / residuals[0]


def _apply_stage_inv(stage_inv, data):
    s, c, n = data.shape
    vec = data.reshape(s * c, n).T
    out = np.einsum("kpq,kq->kp", stage_inv, vec)
    return np.ascontiguousarray(out.T.reshape(s, c, n))


def step(
    p: ProblemSpec, t: ButcherTableau, u: State, cfg: SolverConfig
) -> tuple[State, StepStats]:
    """Advance one step of size cfg.h."""
    if cfg.h == 0:
        raise ValueError("step requires a positive step size")
    stages, stats = fixed_point_stages(p, t, u, cfg)
    u_new = _update_from_stages(p, t, u, stages, cfg.h)
    if cfg.debug_checks:
        _check_direct_form(p, t, u, stages, u_new, cfg)
    return u_new, stats


def _update_from_stages(p, t, u, stages, h):
    stage_inv, _ = step_matrices(t, h, p.grid)
    bw = evaluate_B_array(p, stages.data)
    z = _apply_stage_inv(stage_inv, bw)
    correction = h * np.einsum("j,jcn->cn", t.b, z)
    return apply_S_hA(u, t, h) + State(p.grid, correction)


def _check_direct_form(p, t, u, stages, u_new, cfg):
    """Cross-evaluate u + h b^T (A W + B(W)) against the resolvent form."""
    aw = np.stack([apply_A(stages.stage(j)).coeffs for j in range(t.s)])
    bw = evaluate_B_array(p, stages.data)
    direct = u.coeffs + cfg.h * np.einsum("j,jcn->cn", t.b, aw + bw)
    gap = base_norm(State(p.grid, direct) - u_new)
    if gap > 10 * cfg.fp_tol:
        raise RuntimeError(
            f"update-form mismatch: resolvent vs direct evaluation differ by {gap:.3e}"
        )


def integrate(
    p: ProblemSpec,
    t: ButcherTableau,
    u0: State,
    cfg: SolverConfig,
    steps: int,
    observer=None,
) -> tuple[State, list[StepStats]]:
    """Apply the step map ``steps`` times, reporting per-step statistics.

    The observer, when given, is called after each step with
    (step_index, state, stats) and must treat the state as read-only.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    u = u0
    history = []
    for index in range(steps):
        u, stats = step(p, t, u, cfg)
        history.append(stats)
        if observer is not None:
            observer(index, u, stats)
    return u, history


def tangent_step(
    p: ProblemSpec, t: ButcherTableau, u: State, v: State, cfg: SolverConfig
) -> tuple[State, State, StepStats]:
    """One step of the extended (primal, tangent) system.

    The linear part acts blockwise, so the stage resolvent applies to
    the primal and tangent stage families separately; only the coupled
    nonlinearity (B(U), DB(U) V) ties them together in the iteration.
    """
    if cfg.h == 0:
        raise ValueError("step requires a positive step size")
    if v.grid != u.grid or u.grid != p.grid:
        raise ValueError("primal and tangent states must share the problem grid")
    h = cfg.h
    s, c, n = t.s, p.grid.components, p.grid.n
    stage_inv, _ = step_matrices(t, h, p.grid)
    bu = np.broadcast_to(u.coeffs, (s, c, n))
    bv = np.broadcast_to(v.coeffs, (s, c, n))

    wu = _apply_stage_inv(stage_inv, bu)
    wv = _apply_stage_inv(stage_inv, bv)
    residuals = []
    for iteration in range(1, cfg.fp_max_iters + 1):
        fu = evaluate_B_array(p, wu)
        fv = evaluate_B_tangent_array(p, wu, wv)
        wu_new = _apply_stage_inv(stage_inv, bu + h * _a_weighted(t.a, fu))
        wv_new = _apply_stage_inv(stage_inv, bv + h * _a_weighted(t.a, fv))
        residual = max(
            _stage_residual(p.grid, wu_new - wu), _stage_residual(p.grid, wv_new - wv)
        )
        if not math.isfinite(residual):
            raise NumericalBlowupError(
                f"non-finite tangent stage residual at iteration {iteration} (h={h:g})"
            )
        residuals.append(residual)
        wu, wv = wu_new, wv_new
        if residual <= cfg.fp_tol:
            break
    else:
        raise ConvergenceFailureError(
            StepStats(cfg.fp_max_iters, residuals[-1], _contraction(residuals))
        )

    stats = StepStats(len(residuals), residuals[-1], _contraction(residuals))
    fu = evaluate_B_array(p, wu)
    fv = evaluate_B_tangent_array(p, wu, wv)
    zu = _apply_stage_inv(stage_inv, fu)
    zv = _apply_stage_inv(stage_inv, fv)
    u_new = apply_S_hA(u, t, h) + State(p.grid, h * np.einsum("j,jcn->cn", t.b, zu))
    v_new = apply_S_hA(v, t, h) + State(p.grid, h * np.einsum("j,jcn->cn", t.b, zv))
    return u_new, v_new, stats
