"""Butcher tableaus: Gauss-Legendre construction and A-stability checks.

A tableau ``(a, b, c)`` defines an s-stage implicit Runge-Kutta method.
The stability function

    S(z) = 1 + z * b^T (I - z a)^{-1} 1

encodes the method's action on the scalar test equation; A-stability
demands |S(z)| <= 1 on the closed left half-plane together with
invertibility of (I - z a) there, which holds exactly when ``a`` has no
eigenvalue in the closed left half-plane other than 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularResolventError

_ROW_SUM_TOL = 1e-12
_WEIGHT_SUM_TOL = 1e-12
_EIG_BOUNDARY_TOL = 1e-10
_RK1_TOL = 1e-12


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients of an s-stage Runge-Kutta method.

    Attributes
    ----------
    s : int
        Stage count.
    a : ndarray, shape (s, s)
        Stage coefficient matrix.
    b : ndarray, shape (s,)
        Quadrature weights.
    c : ndarray, shape (s,)
        Collocation nodes in [0, 1].
    p : int
        Classical order (metadata; 2s for Gauss-Legendre, user-supplied
        for custom tableaus and cross-checked empirically by the study
        harness rather than proved from order conditions).
    label : str
        Short descriptor used in reports.
    """

    s: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    p: int
    label: str = "custom"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if self.s < 1:
            raise ValueError("stage count must be positive")
        if a.shape != (self.s, self.s) or b.shape != (self.s,) or c.shape != (self.s,):
            raise ValueError("inconsistent tableau shapes")
        if self.p < 1:
            raise ValueError("classical order must be positive")
        row_defect = np.max(np.abs(a.sum(axis=1) - c))
        if row_defect > _ROW_SUM_TOL:
            raise ValueError(
                f"rows of a must sum to c (collocation consistency); defect {row_defect:.3e}"
            )
        weight_defect = abs(b.sum() - 1.0)
        if weight_defect > _WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1; defect {weight_defect:.3e}")
        a.setflags(write=False)
        b.setflags(write=False)
        c.setflags(write=False)

    def fingerprint(self) -> bytes:
        """Byte string identifying the coefficients, used as a cache key."""
        return b"|".join(
            [str(self.s).encode(), self.a.tobytes(), self.b.tobytes(), self.c.tobytes()]
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "s": self.s,
                "a": self.a.tolist(),
                "b": self.b.tolist(),
                "c": self.c.tolist(),
                "p": self.p,
            }
        )

    @staticmethod
    def from_json(text: str, label: str = "custom") -> "ButcherTableau":
        """Parse a tableau from a JSON document with keys s, a, b, c, p."""
        doc = json.loads(text)
        missing = [k for k in ("s", "a", "b", "c", "p") if k not in doc]
        if missing:
            raise ValueError(f"tableau JSON missing keys: {missing}")
        return ButcherTableau(
            s=int(doc["s"]),
            a=np.asarray(doc["a"], dtype=float),
            b=np.asarray(doc["b"], dtype=float),
            c=np.asarray(doc["c"], dtype=float),
            p=int(doc["p"]),
            label=label,
        )


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of the sampled A-stability check.

    ``rk1_ok`` reports |S(z)| <= 1 on all sampled points of the closed
    left half-plane.  Sampling cannot certify boundedness on the whole
    half-plane; by the maximum principle for the rational S, the
    imaginary-axis sweep carries the weight and the interior grid is a
    safety net.  ``rk2_ok`` is the exact eigenvalue criterion: no
    eigenvalue of ``a`` may lie in the closed left half-plane except 0.
    """

    rk1_ok: bool
    rk1_worst: tuple[complex, float]
    rk2_ok: bool
    a_eigenvalues: list = field(default_factory=list)
    a_invertible: bool = True

    @property
    def a_stable(self) -> bool:
        return self.rk1_ok and self.rk2_ok


def _legendre_value_and_derivative(x, s):
    """Evaluate the degree-s Legendre polynomial and its derivative at x."""
    p_prev = np.ones_like(x)
    p = x.copy()
    if s == 0:
        return p_prev, np.zeros_like(x)
    for m in range(2, s + 1):
        p_prev, p = p, ((2 * m - 1) * x * p - (m - 1) * p_prev) / m
    dp = s * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def _legendre_roots(s, tol=1e-14, max_iter=100):
    """Roots of the degree-s Legendre polynomial on (-1, 1).

    Newton iteration from Chebyshev initial guesses; converges in a
    handful of iterations for s <= 8.
    """
    i = np.arange(1, s + 1)
    x = np.cos(np.pi * (4 * i - 1) / (4 * s + 2))
    for _ in range(max_iter):
        p, dp = _legendre_value_and_derivative(x, s)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    else:
        raise RuntimeError(f"Legendre root Newton iteration stalled for s={s}")
    return np.sort(x)


def gauss_legendre(s: int) -> ButcherTableau:
    """Construct the s-stage Gauss-Legendre collocation tableau.

    The nodes are the roots of the shifted Legendre polynomial of degree
    s on [0, 1]; the coefficients are the exact integrals of the
    Lagrange basis at these nodes,

        a_ij = int_0^{c_i} l_j,   b_j = int_0^1 l_j,

    giving classical order p = 2s.

    Parameters
    ----------
    s : int
        Stage count, 1 <= s <= 8.
    """
    if not 1 <= s <= 8:
        raise ValueError(f"stage count must be in [1, 8], got {s}")
    c = 0.5 * (_legendre_roots(s) + 1.0)
    a = np.empty((s, s))
    b = np.empty(s)
    for j in range(s):
        others = np.delete(c, j)
        if others.size:
            basis = np.polynomial.Polynomial.fromroots(others) / np.prod(c[j] - others)
        else:
            basis = np.polynomial.Polynomial([1.0])
        primitive = basis.integ()
        b[j] = primitive(1.0) - primitive(0.0)
        a[:, j] = primitive(c) - primitive(0.0)
    return ButcherTableau(s=s, a=a, b=b, c=c, p=2 * s, label=f"gl:{s}")


def stability_function(t: ButcherTableau, z: complex) -> complex:
    """Evaluate S(z) = 1 + z b^T (I - z a)^{-1} 1 by one s x s solve."""
    z = complex(z)
    m = np.eye(t.s, dtype=complex) - z * t.a
    try:
        x = np.linalg.solve(m, np.ones(t.s, dtype=complex))
    except np.linalg.LinAlgError:
        raise SingularResolventError(z) from None
    return 1.0 + z * (t.b @ x)


def _stability_function_many(t, z):
    """Vectorized S(z) for an array of complex points; inf where singular."""
    z = np.asarray(z, dtype=complex)
    m = np.eye(t.s, dtype=complex) - z[..., None, None] * t.a
    det = np.linalg.det(m)
    singular = det == 0
    m[singular] = np.eye(t.s)
    rhs = np.broadcast_to(np.ones(t.s, dtype=complex)[:, None], m.shape[:-2] + (t.s, 1))
    x = np.linalg.solve(m, np.ascontiguousarray(rhs))[..., 0]
    out = 1.0 + z * (x @ t.b)
    out[singular] = np.inf
    return out


def quadrature_order(t: ButcherTableau) -> int:
    """Largest k such that sum_i b_i c_i^{j-1} = 1/j for all j <= k.

    This is the simplifying condition B(k); Gauss-Legendre tableaus
    achieve the maximal B(2s).
    """
    order = 0
    for j in range(1, 4 * t.s + 4):
        if abs(t.b @ t.c ** (j - 1) - 1.0 / j) <= 1e-10:
            order = j
        else:
            break
    return order


def check_a_stability(
    t: ButcherTableau, boundary_samples: int = 200, interior_samples: int = 64
) -> StabilityReport:
    """Sampled A-stability check of a tableau.

    Evaluates |S(z)| on a log-spaced sweep of the imaginary axis with
    |y| in [1e-3, 1e6] and on a coarse log grid in the open left
    half-plane, and tests that the eigenvalues of ``a`` avoid the closed
    left half-plane except for an exact zero (tolerance band 1e-10).
    Failures are reported, never raised.
    """
    if boundary_samples < 16 or interior_samples < 16:
        raise ValueError("sample counts must be >= 16")

    y = np.logspace(-3, 6, boundary_samples)
    boundary = np.concatenate([1j * y, -1j * y])

    m = max(4, int(np.sqrt(interior_samples)))
    re = -np.logspace(-3, 6, m)
    im_half = np.logspace(-3, 6, max(2, m // 2))
    im = np.concatenate([-im_half, [0.0], im_half])
    interior = (re[:, None] + 1j * im[None, :]).ravel()

    samples = np.concatenate([boundary, interior])
    values = np.abs(_stability_function_many(t, samples))
    worst = int(np.argmax(values))
    rk1_ok = bool(values[worst] <= 1.0 + _RK1_TOL)

    eigs = np.linalg.eigvals(t.a)
    bad = (eigs.real <= _EIG_BOUNDARY_TOL) & (np.abs(eigs) > _EIG_BOUNDARY_TOL)
    rk2_ok = not bool(bad.any())
    a_invertible = bool(np.min(np.abs(eigs)) > _EIG_BOUNDARY_TOL)

    return StabilityReport(
        rk1_ok=rk1_ok,
        rk1_worst=(complex(samples[worst]), float(values[worst])),
        rk2_ok=rk2_ok,
        a_eigenvalues=[complex(e) for e in eigs],
        a_invertible=a_invertible,
    )


def resolve_tableau(spec: str) -> ButcherTableau:
    """Resolve a tableau descriptor: 'gl:s' or a path to a JSON file."""
    if spec.startswith("gl:"):
        return gauss_legendre(int(spec.split(":", 1)[1]))
    with open(spec, encoding="utf-8") as fh:
        return ButcherTableau.from_json(fh.read(), label=spec)
