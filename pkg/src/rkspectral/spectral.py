"""Spectral grids, modal states, and exact per-mode realizations of the
linear part of the evolution.

The linear operator acts diagonally (Schrodinger, scalar symbol
``-i k^2`` per mode) or block-diagonally (wave as a first-order system,
2x2 block ``[[0, 1], [-k^2, 0]]`` per mode).  This makes the semigroup,
the stage resolvent ``(I - h a (x) A)^{-1}`` and the update map
``S(hA)`` exact small-matrix computations, so convergence studies see
time-discretization error only.

Mode index sets: periodic k in {-n/2+1, ..., n/2}; Dirichlet (sine)
k in {1, ..., n}; Neumann (cosine) k in {0, ..., n-1}.  For the periodic
wave system the k = 0 block is nilpotent and generates the familiar
secular (linear-in-time) drift; the exact formulas below cover it.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, dst

from .errors import SingularResolventError
from .tableau import ButcherTableau

DEFAULT_SCALE_CAP = 8


@dataclass(frozen=True)
class SpectralGrid:
    """A one-dimensional spectral grid with a per-mode linear symbol.

    Attributes
    ----------
    equation : str
        "schrodinger" (one complex component) or "wave" (two components).
    bc : str
        "periodic", "dirichlet", or "neumann".
    n : int
        Number of retained modes (= number of collocation points).
    """

    equation: str
    bc: str
    n: int

    def __post_init__(self):
        if self.equation not in ("schrodinger", "wave"):
            raise ValueError(f"unknown equation kind {self.equation!r}")
        if self.bc not in ("periodic", "dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.bc == "periodic":
            if self.n < 4 or self.n % 2:
                raise ValueError("periodic grids require even n >= 4")
        elif self.n < 2:
            raise ValueError("need at least two modes")

    @property
    def components(self) -> int:
        return 2 if self.equation == "wave" else 1

    @property
    def length(self) -> float:
        return 2 * math.pi if self.bc == "periodic" else math.pi

    @property
    def modes(self) -> np.ndarray:
        """Integer mode numbers, in transform storage order."""
        if self.bc == "periodic":
            k = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
            k[self.n // 2] = self.n // 2  # label Nyquist +n/2; symbols are even in k
            return k
        if self.bc == "dirichlet":
            return np.arange(1, self.n + 1, dtype=np.int64)
        return np.arange(self.n, dtype=np.int64)

    @property
    def nodes(self) -> np.ndarray:
        """Collocation points matching the transform convention."""
        if self.bc == "periodic":
            return 2 * math.pi * np.arange(self.n) / self.n
        if self.bc == "dirichlet":
            return math.pi * np.arange(1, self.n + 1) / (self.n + 1)
        return math.pi * np.arange(self.n) / (self.n - 1)

    @property
    def weights(self) -> np.ndarray:
        """Per-mode Parseval weights of the continuum L2 norm."""
        if self.bc == "periodic":
            return np.full(self.n, 2 * math.pi)
        w = np.full(self.n, math.pi / 2)
        if self.bc == "neumann":
            w[0] = math.pi
        return w

    def fingerprint(self) -> bytes:
        return f"{self.equation}|{self.bc}|{self.n}".encode()

    def symbol_blocks(self) -> np.ndarray:
        """Per-mode symbol of the linear operator: (n, c, c) complex."""
        k = self.modes.astype(float)
        if self.equation == "schrodinger":
            return (-1j * k**2).reshape(self.n, 1, 1)
        blocks = np.zeros((self.n, 2, 2), dtype=complex)
        blocks[:, 0, 1] = 1.0
        blocks[:, 1, 0] = -(k**2)
        return blocks

    # -- transforms -------------------------------------------------------

    def transform(self, values) -> "State":
        """Map physical collocation values to a modal State.

        ``values`` has shape (n,) for one component or (components, n).
        """
        vals = np.asarray(values)
        if vals.ndim == 1:
            vals = vals[None, :]
        if vals.shape != (self.components, self.n):
            raise ValueError(
                f"expected values of shape ({self.components}, {self.n}), got {vals.shape}"
            )
        return State(self, self.transform_array(vals))

    def transform_array(self, values: np.ndarray) -> np.ndarray:
        """Forward transform of raw physical values (..., n), batched."""
        vals = np.asarray(values, dtype=complex)
        if vals.shape[-1] != self.n:
            raise ValueError(f"last axis must have length {self.n}")
        if self.bc == "periodic":
            return np.fft.fft(vals, axis=-1) / self.n
        if self.bc == "dirichlet":
            return _complex_dst1(vals) / (self.n + 1)
        coeffs = _complex_dct1(vals) / (self.n - 1)
        coeffs[..., 0] /= 2
        coeffs[..., -1] /= 2
        return coeffs

    def zero_state(self) -> "State":
        return State(self, np.zeros((self.components, self.n), dtype=complex))


def _complex_dst1(vals):
    return dst(vals.real, type=1, axis=-1) + 1j * dst(vals.imag, type=1, axis=-1)


def _complex_dct1(vals):
    return dct(vals.real, type=1, axis=-1) + 1j * dct(vals.imag, type=1, axis=-1)


def schrodinger_grid(n: int, bc: str = "periodic") -> SpectralGrid:
    return SpectralGrid("schrodinger", bc, n)


def wave_grid(n: int, bc: str = "periodic") -> SpectralGrid:
    return SpectralGrid("wave", bc, n)


@dataclass(frozen=True)
class State:
    """Modal coefficients of one solution snapshot on a grid.

    ``coeffs`` has shape (components, n) and is treated as immutable;
    all operations return fresh states.
    """

    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.components, self.grid.n):
            raise ValueError(
                f"coefficients must have shape ({self.grid.components}, {self.grid.n})"
            )
        object.__setattr__(self, "coeffs", c)

    def copy(self) -> "State":
        return State(self.grid, self.coeffs.copy())

    def __add__(self, other: "State") -> "State":
        _check_same_grid(self, other)
        return State(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "State") -> "State":
        _check_same_grid(self, other)
        return State(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "State":
        return State(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def to_physical(self) -> np.ndarray:
        """Collocation values; shape (n,) for one component, else (2, n)."""
        vals = inverse_transform_array(self.grid, self.coeffs)
        return vals[0] if self.grid.components == 1 else vals

    def to_csv(self, path):
        """Dump coefficients as rows mode, re, im per component."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["mode"]
            for comp in range(self.grid.components):
                header += [f"re{comp}", f"im{comp}"]
            writer.writerow(header)
            for i, k in enumerate(self.grid.modes):
                row = [int(k)]
                for comp in range(self.grid.components):
                    row += [
                        repr(float(self.coeffs[comp, i].real)),
                        repr(float(self.coeffs[comp, i].imag)),
                    ]
                writer.writerow(row)

    @staticmethod
    def from_csv(grid: SpectralGrid, path) -> "State":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
        if len(rows) != grid.n:
            raise ValueError(f"expected {grid.n} coefficient rows, got {len(rows)}")
        coeffs = np.zeros((grid.components, grid.n), dtype=complex)
        for i, row in enumerate(rows):
            if int(row[0]) != int(grid.modes[i]):
                raise ValueError(f"mode mismatch at row {i}: {row[0]} vs {grid.modes[i]}")
            for comp in range(grid.components):
                coeffs[comp, i] = float(row[1 + 2 * comp]) + 1j * float(row[2 + 2 * comp])
        return State(grid, coeffs)


def _check_same_grid(u, v):
    if u.grid != v.grid:
        raise ValueError("states live on different grids")


def inverse_transform_array(grid: SpectralGrid, coeffs: np.ndarray) -> np.ndarray:
    """Modal coefficients (components, n) to physical values (components, n)."""
    if grid.bc == "periodic":
        return np.fft.ifft(coeffs, axis=-1) * grid.n
    if grid.bc == "dirichlet":
        return _complex_dst1(coeffs) / 2
    half = coeffs.copy()
    half[..., 1:-1] /= 2
    return _complex_dct1(half)


def inverse_transform(u: State) -> np.ndarray:
    return u.to_physical()


def transform(grid: SpectralGrid, values) -> State:
    return grid.transform(values)


@dataclass(frozen=True)
class StageSet:
    """The s stage vectors of one implicit step, on a common grid.

    ``data`` has shape (s, components, n).
    """

    grid: SpectralGrid
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.ndim != 3 or d.shape[1:] != (self.grid.components, self.grid.n):
            raise ValueError("stage data must have shape (s, components, n)")
        object.__setattr__(self, "data", d)

    @property
    def s(self) -> int:
        return self.data.shape[0]

    def stage(self, j: int) -> State:
        return State(self.grid, self.data[j])

    @staticmethod
    def broadcast(u: State, s: int) -> "StageSet":
        return StageSet(u.grid, np.broadcast_to(u.coeffs, (s,) + u.coeffs.shape).copy())


# -- linear operator actions ------------------------------------------------


def apply_A(u: State) -> State:
    """Apply the linear symbol mode by mode."""
    k = u.grid.modes.astype(float)
    if u.grid.components == 1:
        return State(u.grid, (-1j * k**2) * u.coeffs)
    out = np.empty_like(u.coeffs)
    out[0] = u.coeffs[1]
    out[1] = -(k**2) * u.coeffs[0]
    return State(u.grid, out)


def apply_exp_tA(u: State, t: float) -> State:
    """Apply the exact propagator of the linear part for time t."""
    if not np.isfinite(t):
        raise ValueError("propagation time must be finite")
    k = u.grid.modes.astype(float)
    if u.grid.components == 1:
        return State(u.grid, np.exp(-1j * k**2 * t) * u.coeffs)
    zero = k == 0
    safe_k = np.where(zero, 1.0, k)
    cos_kt = np.cos(k * t)
    sin_over_k = np.where(zero, t, np.sin(safe_k * t) / safe_k)
    k_sin = np.where(zero, 0.0, safe_k * np.sin(safe_k * t))
    out = np.empty_like(u.coeffs)
    out[0] = cos_kt * u.coeffs[0] + sin_over_k * u.coeffs[1]
    out[1] = -k_sin * u.coeffs[0] + cos_kt * u.coeffs[1]
    return State(u.grid, out)


# -- norms -------------------------------------------------------------------


def base_norm_sq(u: State) -> float:
    """Squared base-space norm: discrete L2, or H1 x L2 for the wave system."""
    w = u.grid.weights
    if u.grid.components == 1:
        return float(np.sum(w * np.abs(u.coeffs[0]) ** 2))
    k2 = u.grid.modes.astype(float) ** 2
    return float(
        np.sum(w * ((k2 + 1.0) * np.abs(u.coeffs[0]) ** 2 + np.abs(u.coeffs[1]) ** 2))
    )


def base_norm(u: State) -> float:
    return math.sqrt(base_norm_sq(u))


def sobolev_norm(u: State, k: int, k_max: int = DEFAULT_SCALE_CAP) -> float:
    """Scale norm of rung k: the graph norm of the k-th operator power.

    Uses the binomial closed form of the recursion
    ``|u|_{k}^2 = |Au|_{k-1}^2 + |u|_{k-1}^2``, i.e.
    ``sum_j C(k, j) |A^j u|_0^2``.
    """
    if not 0 <= k <= k_max:
        raise ValueError(f"scale index must satisfy 0 <= k <= {k_max}, got {k}")
    total = 0.0
    v = u
    for j in range(k + 1):
        total += math.comb(k, j) * base_norm_sq(v)
        if j < k:
            v = apply_A(v)
    return math.sqrt(total)


def hermitian_symmetry_defect(u: State) -> float:
    """Max deviation from conj-symmetry of coefficients (periodic grids).

    Real-valued physical fields have coefficients with c[-k] = conj(c[k]).
    """
    if u.grid.bc != "periodic":
        raise ValueError("Hermitian symmetry is a periodic-grid notion")
    c = u.coeffs
    flipped = np.conj(np.roll(c[:, ::-1], 1, axis=-1))  # index of -k mod n
    return float(np.max(np.abs(c - flipped)))


# -- stage resolvent and update map -------------------------------------------

_MATRIX_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def clear_matrix_cache():
    with _CACHE_LOCK:
        _MATRIX_CACHE.clear()


def _build_step_matrices(t: ButcherTableau, h: float, grid: SpectralGrid):
    """Per-mode inverse stage blocks and update matrices.

    Returns (stage_inv, update) with shapes (n, s*c, s*c) and (n, c, c):
    stage_inv realizes ``(I - h a (x) A_k)^{-1}`` and update realizes
    ``S(h A_k) = I + h sum_j b_j A_k (stage_inv 1)_j``.
    """
    blocks = grid.symbol_blocks()
    n, c = grid.n, grid.components
    s = t.s
    kron = np.einsum("ij,kpq->kipjq", t.a, blocks).reshape(n, s * c, s * c)
    m = np.eye(s * c, dtype=complex)[None, :, :] - h * kron
    try:
        stage_inv = np.linalg.inv(m)
    except np.linalg.LinAlgError:
        dets = np.abs(np.linalg.det(m))
        mode = int(grid.modes[int(np.argmin(dets))])
        raise SingularResolventError(mode) from None

    ones_block = np.tile(np.eye(c, dtype=complex), (s, 1))  # 1 (x) I_c
    e = stage_inv @ ones_block  # (n, s*c, c)
    bsum = np.einsum("j,kjpq->kpq", t.b, e.reshape(n, s, c, c))
    update = np.eye(c, dtype=complex)[None, :, :] + h * (blocks @ bsum)
    return stage_inv, update


def step_matrices(t: ButcherTableau, h: float, grid: SpectralGrid, use_cache: bool = True):
    """Cached access to the per-mode step matrices.

    The cache key is (tableau coefficients, exact h bits, grid identity);
    cached and uncached paths run identical operations, so their results
    agree bit for bit.
    """
    if not use_cache:
        return _build_step_matrices(t, h, grid)
    key = (t.fingerprint(), np.float64(h).tobytes(), grid.fingerprint())
    hit = _MATRIX_CACHE.get(key)
    if hit is None:
        hit = _build_step_matrices(t, h, grid)
        with _CACHE_LOCK:
            _MATRIX_CACHE.setdefault(key, hit)
        hit = _MATRIX_CACHE[key]
    return hit


def solve_stage_resolvent(
    rhs: StageSet, t: ButcherTableau, h: float, use_cache: bool = True
) -> StageSet:
    """Solve ``(I - h a (x) A) W = rhs`` mode by mode."""
    if h < 0:
        raise ValueError("step size must be nonnegative")
    stage_inv, _ = step_matrices(t, h, rhs.grid, use_cache)
    return StageSet(rhs.grid, _apply_stage_operator(stage_inv, rhs.data))


def _apply_stage_operator(op, data):
    """Apply a per-mode (s*c, s*c) operator to stage data (s, c, n)."""
    s, c, n = data.shape
    vec = data.reshape(s * c, n).T  # (n, s*c)
    out = np.einsum("kpq,kq->kp", op, vec)
    return np.ascontiguousarray(out.T.reshape(s, c, n))


def apply_S_hA(u: State, t: ButcherTableau, h: float, use_cache: bool = True) -> State:
    """Apply the update map ``S(hA)`` of the method to a state."""
    if h < 0:
        raise ValueError("step size must be nonnegative")
    _, update = step_matrices(t, h, u.grid, use_cache)
    out = np.einsum("kpq,qk->pk", update, u.coeffs)
    return State(u.grid, np.ascontiguousarray(out))
