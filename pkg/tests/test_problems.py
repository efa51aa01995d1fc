import math

import numpy as np
import pytest

from rkspectral.errors import DomainEscapeError
from rkspectral.problems import (
    ProblemSpec,
    dealias_mask,
    dirichlet_boundary_defect,
    evaluate_B,
    evaluate_B_array,
    evaluate_B_tangent_array,
    get_problem,
    list_problems,
    make_nonlinearity,
    standard_problems,
)
from rkspectral.spectral import State, schrodinger_grid, wave_grid


def mode_state(grid, component, assignments):
    coeffs = np.zeros((grid.components, grid.n), dtype=complex)
    for mode, value in assignments.items():
        idx = int(np.where(grid.modes == mode)[0][0])
        coeffs[component, idx] = value
    return State(grid, coeffs)


class TestEvaluateB:
    def test_zero_nonlinearity_gives_zero_state(self):
        p = get_problem("wave-linear-periodic", 16)
        u = p.grid.transform(np.vstack([np.cos(p.grid.nodes), np.sin(p.grid.nodes)]))
        assert np.max(np.abs(evaluate_B(p, u).coeffs)) == 0.0

    def test_nls_constant_state(self):
        # V = |u|^4/2 makes the right-hand side -i |c|^2 c on the mean mode
        p = get_problem("nls-cubic-periodic", 16)
        c = 0.7 - 0.2j
        u = mode_state(p.grid, 0, {0: c})
        out = evaluate_B(p, u)
        idx = np.where(p.grid.modes == 0)[0][0]
        assert out.coeffs[0, idx] == pytest.approx(-1j * abs(c) ** 2 * c, abs=1e-15)
        others = np.delete(out.coeffs[0], idx)
        assert np.max(np.abs(others)) < 1e-15

    def test_wave_cubic_on_single_sine_mode(self):
        # sin^3 x = (3 sin x - sin 3x)/4, scaled by -a^3 into the velocity slot
        a = 0.37
        p = get_problem("wave-dirichlet-compatible", 32)
        u = mode_state(p.grid, 0, {1: a})
        out = evaluate_B(p, u)
        idx1 = np.where(p.grid.modes == 1)[0][0]
        idx3 = np.where(p.grid.modes == 3)[0][0]
        assert out.coeffs[1, idx1] == pytest.approx(-3 * a**3 / 4, abs=1e-12)
        assert out.coeffs[1, idx3] == pytest.approx(a**3 / 4, abs=1e-12)
        rest = np.delete(out.coeffs[1], [idx1, idx3])
        assert np.max(np.abs(rest)) < 1e-12
        assert np.max(np.abs(out.coeffs[0])) == 0.0

    def test_dealiasing_zeroes_top_third(self):
        p = get_problem("nls-cubic-periodic", 12)
        rng = np.random.default_rng(0)
        u = State(p.grid, rng.standard_normal((1, 12)) + 0j)
        out = evaluate_B(p, u)
        mask = dealias_mask(p.grid)
        assert np.max(np.abs(out.coeffs[0, ~mask])) == 0.0
        assert np.abs(p.grid.modes[~mask]).min() > p.grid.n // 3

    def test_domain_escape_guard(self):
        p = ProblemSpec(
            "nls", schrodinger_grid(16), make_nonlinearity("nls", "cubic"), scale_bound=0.5
        )
        u = mode_state(p.grid, 0, {0: 1.0})
        with pytest.raises(DomainEscapeError) as err:
            evaluate_B(p, u)
        assert err.value.max_abs == pytest.approx(1.0)

    def test_grid_mismatch_rejected(self):
        p = get_problem("nls-cubic-periodic", 16)
        u = mode_state(schrodinger_grid(32), 0, {0: 1.0})
        with pytest.raises(ValueError):
            evaluate_B(p, u)


class TestTangentLinearization:
    @pytest.mark.parametrize("name", ["nls-cubic-periodic", "wave-cubic-periodic"])
    def test_matches_central_differences(self, name):
        p = get_problem(name, 32)
        rng = np.random.default_rng(1)
        shape = (p.grid.components, p.grid.n)
        u = p.grid.transform(rng.standard_normal(shape) * 0.3)
        v = p.grid.transform(rng.standard_normal(shape) * 0.3)
        eps = 1e-6
        fd = (
            evaluate_B_array(p, u.coeffs + eps * v.coeffs)
            - evaluate_B_array(p, u.coeffs - eps * v.coeffs)
        ) / (2 * eps)
        tan = evaluate_B_tangent_array(p, u.coeffs, v.coeffs)
        assert np.max(np.abs(fd - tan)) < 1e-9

    def test_linear_in_direction(self):
        p = get_problem("nls-cubic-periodic", 16)
        rng = np.random.default_rng(2)
        u = rng.standard_normal((1, 16)) + 1j * rng.standard_normal((1, 16))
        v = rng.standard_normal((1, 16)) + 1j * rng.standard_normal((1, 16))
        scaled = evaluate_B_tangent_array(p, u, 3.5 * v)
        assert np.allclose(scaled, 3.5 * evaluate_B_tangent_array(p, u, v), atol=1e-13)


class TestCatalogue:
    def test_expected_entries_present(self):
        names = list_problems()
        for required in (
            "nls-cubic-periodic",
            "wave-cubic-periodic",
            "wave-dirichlet-compatible",
            "wave-dirichlet-incompatible",
            "wave-neumann",
        ):
            assert required in names

    def test_nls_cubic_periodic_shape(self):
        p = get_problem("nls-cubic-periodic")
        assert p.kind == "nls"
        assert p.grid.bc == "periodic"
        assert p.grid.components == 1

    def test_incompatible_case_has_nonzero_boundary_value(self):
        p = get_problem("wave-dirichlet-incompatible")
        assert p.nonlinearity.value(0.0) == pytest.approx(1.0)
        assert dirichlet_boundary_defect(p) == pytest.approx(1.0)
        assert dirichlet_boundary_defect(get_problem("wave-dirichlet-compatible")) == 0.0

    def test_unknown_name_lists_catalogue(self):
        with pytest.raises(KeyError, match="nls-cubic-periodic"):
            get_problem("foo")

    def test_standard_problems_builds_all(self):
        cat = standard_problems(32)
        assert set(cat) == set(list_problems())
        assert all(spec.grid.n == 32 for spec in cat.values())

    def test_kind_grid_consistency_enforced(self):
        with pytest.raises(ValueError):
            ProblemSpec("wave", schrodinger_grid(16), make_nonlinearity("wave", "cubic"))
        with pytest.raises(ValueError):
            ProblemSpec("nls", wave_grid(16), make_nonlinearity("nls", "cubic"))

    def test_nonlinearity_parsing(self):
        f = make_nonlinearity("wave", "cubic_plus_const:2.5")
        assert f.value(0.0) == pytest.approx(2.5)
        assert f.value(2.0) == pytest.approx(10.5)
        assert f.derivative(2.0) == pytest.approx(12.0)
        with pytest.raises(KeyError):
            make_nonlinearity("wave", "septic")


class TestBoundaryPreservation:
    def test_compatible_nonlinearity_keeps_sine_representation(self):
        # f(0) = 0 keeps the collocation values odd-extendable: the state
        # produced by evaluate_B reproduces its own physical values exactly
        p = get_problem("wave-dirichlet-compatible", 24)
        rng = np.random.default_rng(3)
        coeffs = np.zeros((2, 24), dtype=complex)
        coeffs[0, :5] = rng.standard_normal(5) * 0.4
        out = evaluate_B(p, State(p.grid, coeffs))
        phys = np.real(out.to_physical()[1])
        again = p.grid.transform(np.vstack([np.zeros(24), phys]))
        assert np.max(np.abs(again.coeffs[1] - out.coeffs[1])) < 1e-13


class TestSobolevAlgebra:
    def test_product_norm_bounded_by_calibrated_constant(self):
        # calibrate the algebra constant on 100 pairs, then check 1000 more
        grid = schrodinger_grid(64)
        rng = np.random.default_rng(4)
        max_mode = 8

        def random_unit_h1():
            coeffs = np.zeros(64, dtype=complex)
            for j, k in enumerate(grid.modes):
                if abs(int(k)) <= max_mode:
                    coeffs[j] = rng.standard_normal() + 1j * rng.standard_normal()
            norm = h1_norm(coeffs)
            return coeffs / norm

        def h1_norm(coeffs):
            k = grid.modes.astype(float)
            return math.sqrt(2 * math.pi * float(np.sum((1 + k**2) * np.abs(coeffs) ** 2)))

        def product_coeffs(a, b):
            fa = np.fft.ifft(a) * 64
            fb = np.fft.ifft(b) * 64
            return np.fft.fft(fa * fb) / 64

        def ratio():
            a, b = random_unit_h1(), random_unit_h1()
            return h1_norm(product_coeffs(a, b))

        calibration = max(ratio() for _ in range(100))
        c = 1.25 * calibration  # headroom for the larger sample's tail
        assert all(ratio() <= c for _ in range(1000))
