import json

import numpy as np
import pytest

from rkspectral.errors import SingularResolventError
from rkspectral.tableau import (
    ButcherTableau,
    check_a_stability,
    gauss_legendre,
    quadrature_order,
    resolve_tableau,
    stability_function,
)

SQRT3 = np.sqrt(3.0)


def explicit_euler():
    return ButcherTableau(s=1, a=np.array([[0.0]]), b=np.array([1.0]), c=np.array([0.0]), p=1)


def implicit_euler():
    return ButcherTableau(s=1, a=np.array([[1.0]]), b=np.array([1.0]), c=np.array([1.0]), p=1)


def quadrature_oracle_a(c, i, j, points=24):
    """a_ij = integral over [0, c_i] of the j-th Lagrange basis, by Gauss
    quadrature on the interval (independent of the generator's exact
    polynomial integration)."""
    nodes, weights = np.polynomial.legendre.leggauss(points)
    x = 0.5 * c[i] * (nodes + 1.0)
    w = 0.5 * c[i] * weights

    def lagrange(t):
        val = np.ones_like(t)
        for m in range(len(c)):
            if m != j:
                val = val * (t - c[m]) / (c[j] - c[m])
        return val

    return float(np.sum(w * lagrange(x)))


class TestGaussLegendre:
    def test_one_stage_is_the_midpoint_rule(self):
        t = gauss_legendre(1)
        assert np.array_equal(t.a, [[0.5]])
        assert np.array_equal(t.b, [1.0])
        assert np.array_equal(t.c, [0.5])
        assert t.p == 2

    def test_two_stage_closed_form(self):
        t = gauss_legendre(2)
        assert np.allclose(t.c, [0.5 - SQRT3 / 6, 0.5 + SQRT3 / 6], atol=1e-15, rtol=0)
        expected_a = [[0.25, 0.25 - SQRT3 / 6], [0.25 + SQRT3 / 6, 0.25]]
        assert np.allclose(t.a, expected_a, atol=1e-15, rtol=0)
        assert np.allclose(t.b, [0.5, 0.5], atol=1e-15, rtol=0)
        assert t.p == 4

    @pytest.mark.parametrize("s", [2, 3, 4])
    def test_matrix_against_quadrature_oracle(self, s):
        t = gauss_legendre(s)
        for i in range(s):
            for j in range(s):
                assert t.a[i, j] == pytest.approx(quadrature_oracle_a(t.c, i, j), abs=1e-13)

    @pytest.mark.parametrize("s", range(1, 6))
    def test_weights_integrate_monomials_exactly(self, s):
        t = gauss_legendre(s)
        for k in range(1, 2 * s + 1):
            assert t.b @ t.c ** (k - 1) == pytest.approx(1.0 / k, abs=1e-12)

    @pytest.mark.parametrize("s", range(1, 9))
    def test_row_sum_and_weight_invariants(self, s):
        t = gauss_legendre(s)
        assert np.max(np.abs(t.a.sum(axis=1) - t.c)) < 1e-12
        assert abs(t.b.sum() - 1.0) < 1e-12
        assert t.p == 2 * s

    @pytest.mark.parametrize("s", [0, 9, -3])
    def test_stage_count_range(self, s):
        with pytest.raises(ValueError):
            gauss_legendre(s)


class TestStabilityFunction:
    def test_midpoint_at_one(self):
        assert stability_function(gauss_legendre(1), 1.0) == pytest.approx(3.0, abs=1e-14)

    @pytest.mark.parametrize("s", [1, 2, 3, 5])
    def test_value_at_zero_is_one(self, s):
        assert stability_function(gauss_legendre(s), 0.0) == pytest.approx(1.0, abs=0)

    def test_two_stage_unimodular_at_i(self):
        assert abs(stability_function(gauss_legendre(2), 1j)) == pytest.approx(1.0, abs=1e-13)

    def test_matches_midpoint_rational_form(self):
        t = gauss_legendre(1)
        rng = np.random.default_rng(7)
        for _ in range(100):
            z = -rng.uniform(0, 5) + 1j * rng.uniform(-5, 5)
            expected = (1 + z / 2) / (1 - z / 2)
            assert stability_function(t, z) == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize("s", [1, 2, 3])
    def test_conjugate_symmetry(self, s):
        t = gauss_legendre(s)
        rng = np.random.default_rng(11)
        for _ in range(50):
            z = rng.normal() + 1j * rng.normal()
            assert stability_function(t, np.conj(z)) == pytest.approx(
                np.conj(stability_function(t, z)), abs=1e-13
            )

    @pytest.mark.parametrize("s", [1, 2, 3])
    def test_unimodular_on_imaginary_axis(self, s):
        t = gauss_legendre(s)
        for y in np.logspace(-3, 6, 200):
            for z in (1j * y, -1j * y):
                assert abs(stability_function(t, z)) == pytest.approx(1.0, abs=1e-12)

    def test_singular_point_raises(self):
        with pytest.raises(SingularResolventError):
            stability_function(gauss_legendre(1), 2.0)


class TestAStabilityCheck:
    @pytest.mark.parametrize("s", range(1, 6))
    def test_gauss_legendre_passes(self, s):
        report = check_a_stability(gauss_legendre(s))
        assert report.rk1_ok and report.rk2_ok and report.a_invertible
        assert report.rk1_worst[1] <= 1.0 + 1e-12

    def test_explicit_euler_fails_rk1(self):
        report = check_a_stability(explicit_euler())
        assert not report.rk1_ok
        assert report.rk1_worst[1] > 1.0
        assert not report.a_invertible

    def test_midpoint_eigenvalues(self):
        report = check_a_stability(gauss_legendre(1))
        assert report.a_eigenvalues == pytest.approx([0.5])

    def test_sample_count_preconditions(self):
        with pytest.raises(ValueError):
            check_a_stability(gauss_legendre(1), boundary_samples=8)


class TestQuadratureOrder:
    def test_values(self):
        assert quadrature_order(gauss_legendre(1)) == 2
        assert quadrature_order(gauss_legendre(3)) == 6
        assert quadrature_order(implicit_euler()) == 1


class TestTableauValidation:
    def test_row_sum_violation_rejected(self):
        with pytest.raises(ValueError, match="collocation"):
            ButcherTableau(
                s=1, a=np.array([[0.4]]), b=np.array([1.0]), c=np.array([0.5]), p=2
            )

    def test_weight_sum_violation_rejected(self):
        with pytest.raises(ValueError, match="sum to 1"):
            ButcherTableau(
                s=1, a=np.array([[0.5]]), b=np.array([0.9]), c=np.array([0.5]), p=2
            )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ButcherTableau(
                s=2, a=np.array([[0.5]]), b=np.array([1.0]), c=np.array([0.5]), p=2
            )


class TestJsonInterface:
    def test_roundtrip(self):
        t = gauss_legendre(3)
        again = ButcherTableau.from_json(t.to_json())
        assert np.array_equal(again.a, t.a)
        assert np.array_equal(again.b, t.b)
        assert np.array_equal(again.c, t.c)
        assert again.p == t.p

    def test_missing_keys_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            ButcherTableau.from_json(json.dumps({"s": 1, "a": [[0.5]]}))

    def test_resolve_gl_spec(self):
        t = resolve_tableau("gl:2")
        assert t.s == 2 and t.p == 4

    def test_resolve_path(self, tmp_path):
        path = tmp_path / "tableau.json"
        path.write_text(gauss_legendre(2).to_json(), encoding="utf-8")
        t = resolve_tableau(str(path))
        assert t.s == 2
        assert np.allclose(t.a, gauss_legendre(2).a, atol=0)
