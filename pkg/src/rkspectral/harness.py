"""Desk-scale experiments: reference solutions, convergence-order studies,
conservation tracking, linear stability growth, step-size smoothness
probes, and the Dirichlet boundary-compatibility comparison.

Error measurement convention: all study errors are final-time base-norm
(rung-0) distances against a self-validated fine reference computed
with a higher-order method of the same family.  The reference recipe is
two extra stages and a step 16 times below the finest study step; its
h -> h/2 self-consistency gap must stay three orders of magnitude below
the smallest error it is used to resolve, floored at the roundoff a
double-precision run of that length can accumulate (50x the stage
tolerance).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import UnreliableReferenceError
from .problems import ProblemSpec, get_problem
from .spectral import (
    SpectralGrid,
    State,
    base_norm,
    inverse_transform_array,
    step_matrices,
)
from .stepper import SolverConfig, integrate, step, tangent_step
from .tableau import ButcherTableau, gauss_legendre

# fp_tol floor accepted by studies: double-precision stage residuals on
# O(1) states cannot be driven meaningfully below this.
FP_TOL_FLOOR = 1e-13
_CONTAMINATION_FACTOR = 100.0
_REFERENCE_MARGIN = 1e-3
# Roundoff accumulated over the fine reference run bounds how small its
# self-consistency gap can get; the margin check is floored there.
_REFERENCE_FLOOR_FACTOR = 50.0
_MAX_STAGES = 8


@dataclass(frozen=True)
class ReferenceInfo:
    """Descriptor of a fine reference run and its self-consistency gap."""

    tableau: str
    h_ref: float
    discrepancy: float

    def as_dict(self) -> dict:
        return {
            "tableau": self.tableau,
            "h_ref": self.h_ref,
            "discrepancy": self.discrepancy,
        }


@dataclass
class ConvergenceReport:
    """Final-time errors of one order study and the fitted slope.

    ``flagged`` marks h levels whose error sits within a factor of 100
    of the solver tolerance; those are excluded from the least-squares
    fit as tolerance-contaminated.
    """

    problem: str
    tableau: str
    T: float
    h_list: list[float]
    errors: list[float]
    fitted_order: float
    stats: list[dict]
    reference: dict
    flagged: list[bool]
    fp_tol: float
    extras: dict = field(default_factory=dict)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["h", "steps", "error_Y0", "mean_iters", "max_residual", "contraction_est"]
            )
            for h, err, st in zip(self.h_list, self.errors, self.stats):
                writer.writerow(
                    [
                        repr(h),
                        st["steps"],
                        repr(err),
                        repr(st["mean_iterations"]),
                        repr(st["max_residual"]),
                        repr(st["mean_contraction"]),
                    ]
                )

    def summary_dict(self) -> dict:
        return {
            "problem": self.problem,
            "tableau": self.tableau,
            "T": self.T,
            "h_list": list(self.h_list),
            "errors": list(self.errors),
            "fitted_order": self.fitted_order,
            "flagged": list(self.flagged),
            "fp_tol": self.fp_tol,
            "reference": self.reference,
            **self.extras,
        }


def _steps_for(T, h):
    m = round(T / h)
    if m < 1 or abs(m * h - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T/h must be a positive integer; T={T}, h={h}")
    return m


def _summarize(stats) -> dict:
    return {
        "steps": len(stats),
        "mean_iterations": float(np.mean([s.iterations for s in stats])),
        "max_iterations": int(max(s.iterations for s in stats)),
        "max_residual": float(max(s.final_residual for s in stats)),
        "mean_contraction": float(np.mean([s.contraction_estimate for s in stats])),
    }


def reference_solution(
    p: ProblemSpec,
    u0: State,
    T: float,
    s_ref: int = 4,
    h_ref: float | None = None,
    fp_tol: float = FP_TOL_FLOOR,
    validate_tol: float | None = None,
) -> tuple[State, ReferenceInfo]:
    """Fine-step stand-in for the exact flow at time T.

    Integrates with the ``s_ref``-stage Gauss-Legendre method at step
    ``h_ref`` and again at ``h_ref / 2``; the base-norm gap between the
    two runs is recorded and, when ``validate_tol`` is given, enforced.
    Returns the finer of the two runs.
    """
    if T < 0:
        raise ValueError("final time must be nonnegative")
    if T == 0:
        return u0, ReferenceInfo(f"gl:{s_ref}", 0.0, 0.0)
    if h_ref is None:
        h_ref = T / 1024
    t_ref = gauss_legendre(s_ref)
    coarse, _ = integrate(p, t_ref, u0, SolverConfig(h=h_ref, fp_tol=fp_tol), _steps_for(T, h_ref))
    fine, _ = integrate(
        p, t_ref, u0, SolverConfig(h=h_ref / 2, fp_tol=fp_tol), _steps_for(T, h_ref / 2)
    )
    discrepancy = base_norm(fine - coarse)
    info = ReferenceInfo(f"gl:{s_ref}", h_ref, discrepancy)
    if validate_tol is not None and discrepancy > validate_tol:
        raise UnreliableReferenceError(discrepancy, validate_tol)
    return fine, info


def _check_fp_tol(fp_tol, h_min, p_order):
    bound = max(1e-2 * h_min ** (p_order + 1), FP_TOL_FLOOR)
    if fp_tol > bound:
        raise ValueError(
            f"fp_tol={fp_tol:g} too loose for an order-{p_order} study with "
            f"min step {h_min:g}; need <= {bound:g}"
        )


def _validate_reference(discrepancy, min_error, fp_tol):
    required = max(_REFERENCE_MARGIN * min_error, _REFERENCE_FLOOR_FACTOR * fp_tol)
    if discrepancy > required:
        raise UnreliableReferenceError(discrepancy, required)


def _fit_order(h_list, errors, flagged):
    pairs = [
        (math.log(h), math.log(e))
        for h, e, f in zip(h_list, errors, flagged)
        if not f and e > 0
    ]
    if len(pairs) < 2:
        raise ValueError("fewer than two usable points for the order fit")
    x = np.array([a for a, _ in pairs])
    y = np.array([b for _, b in pairs])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def convergence_study(
    p: ProblemSpec,
    t: ButcherTableau,
    u0: State,
    T: float,
    h_list,
    fp_tol: float = FP_TOL_FLOOR,
    s_ref: int | None = None,
    h_ref: float | None = None,
    workers: int = 1,
) -> ConvergenceReport:
    """Measure final-time errors against a fine reference and fit the order.

    The reference is validated after the fact: its self-consistency gap
    must be at most 1e-3 times the smallest measured error (floored at
    50x the stage tolerance, the double-precision accumulation scale).
    Levels whose error is within 100x the stage tolerance are flagged
    and excluded from the fit.
    """
    h_list = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly decreasing")
    for h in h_list:
        _steps_for(T, h)
    _check_fp_tol(fp_tol, min(h_list), t.p)

    if s_ref is None:
        s_ref = min(t.s + 2, _MAX_STAGES)
    if h_ref is None:
        h_ref = min(h_list) / 16
    ref_state, ref_info = reference_solution(
        p, u0, T, s_ref=s_ref, h_ref=h_ref, fp_tol=min(fp_tol, FP_TOL_FLOOR)
    )

    def run_level(h):
        final, stats = integrate(p, t, u0, SolverConfig(h=h, fp_tol=fp_tol), _steps_for(T, h))
        return base_norm(final - ref_state), _summarize(stats)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_level, h_list))
    else:
        results = [run_level(h) for h in h_list]
    errors = [r[0] for r in results]
    stats = [r[1] for r in results]

    _validate_reference(ref_info.discrepancy, min(errors), fp_tol)

    flagged = [e <= _CONTAMINATION_FACTOR * fp_tol for e in errors]
    fitted = _fit_order(h_list, errors, flagged)
    return ConvergenceReport(
        problem=p.name,
        tableau=t.label,
        T=T,
        h_list=h_list,
        errors=errors,
        fitted_order=fitted,
        stats=stats,
        reference=ref_info.as_dict(),
        flagged=flagged,
        fp_tol=fp_tol,
    )


# -- conserved quantities ------------------------------------------------------


def _physical_quadrature(grid: SpectralGrid, values: np.ndarray) -> float:
    """Integrate collocation values over the domain.

    Periodic: rectangle rule (exact for resolved trigonometric
    polynomials).  Dirichlet: trapezoid with implicit zero endpoints.
    Neumann: trapezoid with half-weighted endpoints.
    """
    vals = np.real(values)
    if grid.bc == "periodic":
        return float(vals.sum() * (2 * math.pi / grid.n))
    if grid.bc == "dirichlet":
        return float(vals.sum() * (math.pi / (grid.n + 1)))
    dx = math.pi / (grid.n - 1)
    return float((vals.sum() - 0.5 * vals[0] - 0.5 * vals[-1]) * dx)


def conserved_quantities(p: ProblemSpec, u: State, debug: bool = False) -> dict:
    """Mass and energy functionals of a state.

    ``debug`` recomputes the quadratic energy terms by physical-space
    quadrature and verifies agreement with the modal (Parseval) values.
    """
    grid = p.grid
    w = grid.weights
    k = grid.modes.astype(float)
    if p.kind == "nls":
        mass = float(np.sum(w * np.abs(u.coeffs[0]) ** 2))
        gradient_sq = float(np.sum(w * k**2 * np.abs(u.coeffs[0]) ** 2))
        phys = inverse_transform_array(grid, u.coeffs[0])
        potential = _physical_quadrature(grid, p.nonlinearity.potential(phys))
        energy = gradient_sq + potential
        if debug:
            density = np.abs(phys) ** 2
            mass_phys = _physical_quadrature(grid, density)
            _debug_compare("mass", mass, mass_phys)
        return {"mass": mass, "energy": energy}

    mass = float(np.sum(w * np.abs(u.coeffs[0]) ** 2))
    velocity_sq = float(np.sum(w * np.abs(u.coeffs[1]) ** 2))
    gradient_sq = float(np.sum(w * k**2 * np.abs(u.coeffs[0]) ** 2))
    phys_u = inverse_transform_array(grid, u.coeffs[0])
    potential = _physical_quadrature(grid, p.nonlinearity.antiderivative(np.real(phys_u)))
    energy = 0.5 * (velocity_sq + gradient_sq) + potential
    if debug:
        phys_v = inverse_transform_array(grid, u.coeffs[1])
        velocity_phys = _physical_quadrature(grid, np.abs(phys_v) ** 2)
        _debug_compare("velocity term", velocity_sq, velocity_phys)
        _debug_compare("gradient term", gradient_sq, _gradient_quadrature(grid, u))
    return {"mass": mass, "energy": energy}


def _debug_compare(label, spectral_value, physical_value):
    scale = max(1.0, abs(spectral_value))
    if abs(spectral_value - physical_value) > 1e-10 * scale:
        raise RuntimeError(
            f"{label}: spectral {spectral_value!r} vs quadrature {physical_value!r} disagree"
        )


def _gradient_quadrature(grid: SpectralGrid, u: State) -> float:
    """Physical-space quadrature of the squared spatial derivative.

    Debug-path cross-check of the modal value; the derivative is a trig
    polynomial, so the matching trapezoid/rectangle rule is exact.  A
    sine series differentiates into a cosine series, which does not
    vanish at the endpoints, so the Dirichlet case integrates over the
    endpoint-extended node set.
    """
    k = grid.modes.astype(float)
    c = u.coeffs[0]
    if grid.bc == "periodic":
        vals = inverse_transform_array(grid, 1j * k * c)
        return _physical_quadrature(grid, np.abs(vals) ** 2)
    if grid.bc == "dirichlet":
        x = np.concatenate([[0.0], grid.nodes, [math.pi]])
        vals = np.abs((k * c) @ np.cos(np.outer(k, x))) ** 2
        dx = math.pi / (grid.n + 1)
        return float((vals.sum() - 0.5 * vals[0] - 0.5 * vals[-1]) * dx)
    vals = np.abs(-(k * c) @ np.sin(np.outer(k, grid.nodes))) ** 2
    return _physical_quadrature(grid, vals)


# -- linear stability growth ---------------------------------------------------


def stability_growth(t: ButcherTableau, grid: SpectralGrid, h: float, n_steps: int) -> float:
    """Largest per-mode growth of n steps of the linear update map.

    For scalar symbols this is max_k |S(h lambda_k)|^n.  For 2x2 wave
    blocks the n-th matrix power is measured in the mode's base-norm
    weighting, which exposes the linear secular growth of the nilpotent
    k = 0 block that a spectral-radius reading would hide.
    """
    if n_steps < 0:
        raise ValueError("step count must be nonnegative")
    if n_steps == 0:
        return 1.0
    _, update = step_matrices(t, h, grid)
    if grid.components == 1:
        moduli = np.abs(update[:, 0, 0])
        return float(np.max(moduli**n_steps))
    k = grid.modes.astype(float)
    weights = np.sqrt(k**2 + 1.0)
    powers = np.linalg.matrix_power(update, n_steps)
    scale = np.zeros_like(powers)
    scale[:, 0, 0] = weights
    scale[:, 1, 1] = 1.0
    inv_scale = np.zeros_like(powers)
    inv_scale[:, 0, 0] = 1.0 / weights
    inv_scale[:, 1, 1] = 1.0
    weighted = scale @ powers @ inv_scale
    norms = np.linalg.norm(weighted, ord=2, axis=(1, 2))
    return float(np.max(norms))


# -- smoothness probe ----------------------------------------------------------


def smoothness_probe(
    p: ProblemSpec,
    t: ButcherTableau,
    u0: State,
    h: float,
    q: int,
    levels: int = 4,
    fp_tol: float = FP_TOL_FLOOR,
) -> list[tuple[float, float]]:
    """Central finite differences of the step map in its step size.

    For a ladder of shrinking base steps h, h/2, ..., evaluates the
    q-th central difference of ``h -> one step of size h`` with stencil
    spacing proportional to the base step, normalized by spacing^q.
    The interesting endpoint is h -> 0: for data regular enough
    (q operator powers applied to u0 stay in the base space) the
    values stay bounded, and for a method of order >= q they approach
    the norm of the q-th operator power of u0; rough data makes them
    grow as the ladder descends.
    """
    if not 0 <= q <= 4:
        raise ValueError("difference order must be in [0, 4]")
    if q == 0:
        out, _ = step(p, t, u0, SolverConfig(h=h, fp_tol=fp_tol))
        return [(h, base_norm(out))]
    coeffs = [(-1.0) ** i * math.comb(q, i) for i in range(q + 1)]
    results = []
    for level in range(levels):
        h_base = h / 2**level
        eps = h_base / (q + 1)  # keeps every stencil node strictly positive
        acc = None
        for i, coeff in enumerate(coeffs):
            h_i = h_base + (q / 2 - i) * eps
            out, _ = step(p, t, u0, SolverConfig(h=h_i, fp_tol=fp_tol))
            acc = coeff * out if acc is None else acc + coeff * out
        results.append((float(h_base), base_norm(acc) / eps**q))
    return results


# -- initial data builders -----------------------------------------------------


def nls_two_mode_state(grid: SpectralGrid, amplitudes=(0.9, 0.45), modes=(1, 2)) -> State:
    """Smooth two-mode Schrodinger data."""
    coeffs = np.zeros((1, grid.n), dtype=complex)
    for a, k in zip(amplitudes, modes):
        coeffs[0, np.where(grid.modes == k)[0][0]] = a
    return State(grid, coeffs)


def wave_band_state(grid: SpectralGrid, u_amps=(0.4, 0.2), v_amps=(0.2, -0.1)) -> State:
    """Smooth low-mode wave data (real field), matching the grid's basis."""
    coeffs = np.zeros((2, grid.n), dtype=complex)
    if grid.bc == "periodic":
        for comp, amps in enumerate((u_amps, v_amps)):
            for j, a in enumerate(amps, start=1):
                idx_pos = np.where(grid.modes == j)[0][0]
                idx_neg = np.where(grid.modes == -j)[0][0]
                coeffs[comp, idx_pos] = a / 2
                coeffs[comp, idx_neg] = a / 2  # Hermitian pair: real cosine modes
    else:
        for comp, amps in enumerate((u_amps, v_amps)):
            for j, a in enumerate(amps, start=1):
                coeffs[comp, np.where(grid.modes == j)[0][0]] = a
    return State(grid, coeffs)


def random_band_state(grid: SpectralGrid, rng, max_mode: int = 4, amplitude: float = 0.3) -> State:
    """Seeded random low-band data; real-field symmetric for wave grids."""
    coeffs = np.zeros((grid.components, grid.n), dtype=complex)
    for comp in range(grid.components):
        for j, k in enumerate(grid.modes):
            if 0 < abs(int(k)) <= max_mode:
                draw = amplitude * (rng.standard_normal() + 1j * rng.standard_normal())
                coeffs[comp, j] = draw / (1 + abs(int(k)))
    if grid.equation == "wave" and grid.bc == "periodic":
        flipped = np.conj(np.roll(coeffs[:, ::-1], 1, axis=-1))
        coeffs = 0.5 * (coeffs + flipped)
    elif grid.equation == "wave":
        coeffs = coeffs.real.astype(complex)
    return State(grid, coeffs)


def rough_decay_state(grid: SpectralGrid, exponent: float = 1.1) -> State:
    """Data with |c_k| ~ |k|^-exponent: barely in the base space."""
    coeffs = np.zeros((grid.components, grid.n), dtype=complex)
    k = np.abs(grid.modes.astype(float))
    nonzero = k > 0
    coeffs[0, nonzero] = k[nonzero] ** (-exponent)
    if grid.components == 2:
        coeffs[1, nonzero] = k[nonzero] ** (-exponent)
    return State(grid, coeffs)


# -- paired Dirichlet study ----------------------------------------------------


def dirichlet_compatibility_study(
    h_list,
    T: float = 0.4,
    n: int = 256,
    t: ButcherTableau | None = None,
    fp_tol: float = FP_TOL_FLOOR,
    s_ref: int | None = None,
    h_ref: float | None = None,
) -> tuple[ConvergenceReport, ConvergenceReport]:
    """Order study of the boundary-compatible vs incompatible cubic wave.

    Both runs share the tableau, step ladder, and smooth sine-band
    initial data; only the constant term of the nonlinearity differs.
    The incompatible constant leaks a slowly decaying sine tail into the
    velocity component, so its temporal order collapses once the step
    ladder leaves those mode frequencies unresolved; the defaults (many
    modes, a coarse ladder) put the study in that regime.
    """
    if t is None:
        t = gauss_legendre(1)
    compatible = get_problem("wave-dirichlet-compatible", n)
    incompatible = get_problem("wave-dirichlet-incompatible", n)
    u0 = wave_band_state(compatible.grid, u_amps=(0.4, 0.2, 0.1), v_amps=(0.2, -0.1, 0.05))
    report_c = convergence_study(
        compatible, t, u0, T, h_list, fp_tol=fp_tol, s_ref=s_ref, h_ref=h_ref
    )
    report_i = convergence_study(
        incompatible, t, State(incompatible.grid, u0.coeffs.copy()), T, h_list,
        fp_tol=fp_tol, s_ref=s_ref, h_ref=h_ref,
    )
    return report_c, report_i


# -- tangent study -------------------------------------------------------------


def _pair_distance(a, b):
    return math.sqrt(base_norm(a[0] - b[0]) ** 2 + base_norm(a[1] - b[1]) ** 2)


def _integrate_tangent(p, t, u0, v0, cfg, steps):
    u, v = u0, v0
    history = []
    for _ in range(steps):
        u, v, stats = tangent_step(p, t, u, v, cfg)
        history.append(stats)
    return (u, v), history


def tangent_convergence_study(
    p: ProblemSpec,
    t: ButcherTableau,
    u0: State,
    v0: State,
    T: float,
    h_list,
    fp_tol: float = FP_TOL_FLOOR,
) -> ConvergenceReport:
    """Order study of the extended (primal, tangent) system.

    Errors are joint base-norm distances of the pair at final time
    against a fine same-family tangent reference.
    """
    h_list = [float(h) for h in h_list]
    for h in h_list:
        _steps_for(T, h)
    _check_fp_tol(fp_tol, min(h_list), t.p)
    s_ref = min(t.s + 2, _MAX_STAGES)
    h_ref = min(h_list) / 16
    t_ref = gauss_legendre(s_ref)
    ref_coarse, _ = _integrate_tangent(
        p, t_ref, u0, v0, SolverConfig(h=h_ref, fp_tol=fp_tol), _steps_for(T, h_ref)
    )
    ref_fine, _ = _integrate_tangent(
        p, t_ref, u0, v0, SolverConfig(h=h_ref / 2, fp_tol=fp_tol), _steps_for(T, h_ref / 2)
    )
    discrepancy = _pair_distance(ref_fine, ref_coarse)

    errors, stats = [], []
    for h in h_list:
        pair, history = _integrate_tangent(
            p, t, u0, v0, SolverConfig(h=h, fp_tol=fp_tol), _steps_for(T, h)
        )
        errors.append(_pair_distance(pair, ref_fine))
        stats.append(_summarize(history))
    _validate_reference(discrepancy, min(errors), fp_tol)
    flagged = [e <= _CONTAMINATION_FACTOR * fp_tol for e in errors]
    fitted = _fit_order(h_list, errors, flagged)
    return ConvergenceReport(
        problem=f"{p.name}+tangent",
        tableau=t.label,
        T=T,
        h_list=h_list,
        errors=errors,
        fitted_order=fitted,
        stats=stats,
        reference=ReferenceInfo(f"gl:{s_ref}", h_ref, discrepancy).as_dict(),
        flagged=flagged,
        fp_tol=fp_tol,
    )


def dyadic_h_list(h_max: float, levels: int) -> list[float]:
    """h_max, h_max/2, ..., h_max/2^(levels-1)."""
    if levels < 1:
        raise ValueError("need at least one level")
    return [h_max / 2**j for j in range(levels)]


def write_summary_json(path, summary: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
