"""Qubit states, Pauli algebra, and the two measurement superoperators.

A qubit state is a 2x2 hermitian, positive semidefinite, trace-one complex
matrix rho, equivalently a point (x, y, z) of the closed unit (Bloch) ball
through rho = (I + x sigma_x + y sigma_y + z sigma_z) / 2.  The basis is
ordered (|e>, |g>) so that z = +1 is the excited state.

Two superoperators drive the monitored dynamics, for a channel operator L:

    deco(L, rho)  = L rho L+ - (L+ L rho + rho L+ L) / 2        (relaxation)
    noise(L, rho) = L rho + rho L+ - trace(L rho + rho L+) rho  (back-action)

Both outputs are hermitian and traceless, so they are tangent vectors of
the Bloch ball; ``pauli_coefficients`` converts such a tangent matrix to
expansion coefficients and the Bloch-coordinate velocity is exactly twice
that (d rho = (dv . sigma) / 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .config import DEFAULT, Tolerances

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |g><e|
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |e><g|
IDENTITY = np.eye(2, dtype=complex)

PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)


class StateValidationError(ValueError):
    """Raised when a matrix or Bloch vector violates a state invariant."""


def as_matrix2(m) -> np.ndarray:
    """Coerce to a finite 2x2 complex ndarray."""
    a = np.asarray(m, dtype=complex)
    if a.shape != (2, 2):
        raise StateValidationError(f"expected a 2x2 matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(float))):
        raise StateValidationError("matrix has non-finite entries")
    return a


def matrices_close(a, b, tol: float = DEFAULT.algebraic) -> bool:
    return bool(np.max(np.abs(np.asarray(a) - np.asarray(b))) <= tol)


def is_hermitian(m, tol: float = DEFAULT.algebraic) -> bool:
    a = as_matrix2(m)
    return matrices_close(a, a.conj().T, tol)


def dagger(m) -> np.ndarray:
    return np.asarray(m).conj().T


@dataclass(frozen=True)
class BlochVector:
    """Point of the closed unit ball representing a qubit state."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        arr = (self.x, self.y, self.z)
        if not all(np.isfinite(arr)):
            raise StateValidationError("Bloch components must be finite")
        if self.norm() > 1.0 + DEFAULT.algebraic:
            raise StateValidationError(
                f"Bloch vector norm {self.norm():.15g} exceeds 1"
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return float(np.sqrt(self.x * self.x + self.y * self.y + self.z * self.z))


@dataclass(frozen=True)
class DensityMatrix:
    """Validated qubit density operator."""

    matrix: np.ndarray
    tol: float = field(default=DEFAULT.algebraic, repr=False, compare=False)

    def __post_init__(self):
        m = as_matrix2(self.matrix)
        if not is_hermitian(m, self.tol):
            raise StateValidationError("density matrix must be hermitian")
        if abs(np.trace(m).real - 1.0) > self.tol or abs(np.trace(m).imag) > self.tol:
            raise StateValidationError("density matrix must have unit trace")
        # Positivity in dimension 2 is exactly the Bloch-ball condition.
        v = _bloch_array(m)
        if float(np.linalg.norm(v)) > 1.0 + 10 * self.tol:
            raise StateValidationError("density matrix is not positive semidefinite")
        object.__setattr__(self, "matrix", m)

    def bloch(self) -> BlochVector:
        return bloch_from_density(self)


@dataclass(frozen=True)
class LindbladChannel:
    """One decoherence/measurement channel: operator L and efficiency eta."""

    operator: np.ndarray
    efficiency: float

    def __post_init__(self):
        op = as_matrix2(self.operator)
        eta = float(self.efficiency)
        if not (0.0 <= eta <= 1.0):
            raise StateValidationError(f"efficiency {eta} outside [0, 1]")
        object.__setattr__(self, "operator", op)
        object.__setattr__(self, "efficiency", eta)


@dataclass(frozen=True)
class ModelSpec:
    """Hamiltonian plus an ordered list of Lindblad channels."""

    hamiltonian: np.ndarray
    channels: tuple[LindbladChannel, ...]

    def __post_init__(self):
        h = as_matrix2(self.hamiltonian)
        if not is_hermitian(h):
            raise StateValidationError("hamiltonian must be hermitian")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def n_channels(self) -> int:
        return len(self.channels)


def _bloch_array(m: np.ndarray) -> np.ndarray:
    """(trace(rho sigma_x), trace(rho sigma_y), trace(rho sigma_z)) as reals."""
    x = (m[0, 1] + m[1, 0]).real
    y = (1j * (m[0, 1] - m[1, 0])).real
    z = (m[0, 0] - m[1, 1]).real
    return np.array([x, y, z])


def bloch_from_density(rho: DensityMatrix | np.ndarray, tol: float = DEFAULT.algebraic) -> BlochVector:
    """Bloch coordinates x = tr(rho sigma_x), etc."""
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(rho, tol=tol)
    v = _bloch_array(rho.matrix)
    return BlochVector(float(v[0]), float(v[1]), float(v[2]))


def density_from_bloch(v: BlochVector | Iterable[float], tol: float = DEFAULT.algebraic) -> DensityMatrix:
    """Inverse of :func:`bloch_from_density`."""
    if not isinstance(v, BlochVector):
        arr = np.asarray(tuple(v), dtype=float)
        if arr.shape != (3,):
            raise StateValidationError("expected 3 Bloch components")
        v = BlochVector(*arr)
    m = 0.5 * (IDENTITY + v.x * SIGMA_X + v.y * SIGMA_Y + v.z * SIGMA_Z)
    return DensityMatrix(m, tol=tol)


def pauli_coefficients(m) -> np.ndarray:
    """Expansion coefficients (c_x, c_y, c_z) of the traceless hermitian part.

    For a tangent matrix Delta = c . sigma this returns c = trace(Delta sigma)/2.
    The Bloch-coordinate velocity associated with d rho = Delta dt is 2 c.
    """
    return 0.5 * _bloch_array(as_matrix2(m))


# -- superoperators ----------------------------------------------------------

def _f_map(L: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Relaxation map on an arbitrary 2x2 matrix (linear in m)."""
    LdL = dagger(L) @ L
    return L @ m @ dagger(L) - 0.5 * (LdL @ m + m @ LdL)


def _g_map(L: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Back-action map on an arbitrary 2x2 matrix (not linear in m)."""
    s = L @ m + m @ dagger(L)
    return s - np.trace(s) * m


def superop_F(L, rho: DensityMatrix | np.ndarray) -> np.ndarray:
    """Deterministic relaxation term L rho L+ - {L+ L, rho}/2."""
    L = as_matrix2(L)
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(rho)
    return _f_map(L, rho.matrix)


def superop_G(L, rho: DensityMatrix | np.ndarray) -> np.ndarray:
    """Measurement back-action term L rho + rho L+ - trace(L rho + rho L+) rho."""
    L = as_matrix2(L)
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(rho)
    return _g_map(L, rho.matrix)


# -- JSON encodings ----------------------------------------------------------

def matrix_to_json(m) -> list:
    a = as_matrix2(m)
    return [[[float(a[i, j].real), float(a[i, j].imag)] for j in range(2)] for i in range(2)]


def matrix_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape != (2, 2, 2):
        raise StateValidationError(f"matrix JSON must be 2x2x[re,im], got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def model_to_json(model: ModelSpec) -> dict:
    return {
        "hamiltonian": matrix_to_json(model.hamiltonian),
        "channels": [
            {"operator": matrix_to_json(ch.operator), "efficiency": ch.efficiency}
            for ch in model.channels
        ],
    }


def model_from_json(data: dict) -> ModelSpec:
    try:
        h = matrix_from_json(data["hamiltonian"])
        channels = tuple(
            LindbladChannel(matrix_from_json(ch["operator"]), float(ch["efficiency"]))
            for ch in data["channels"]
        )
    except (KeyError, TypeError) as exc:
        raise StateValidationError(f"malformed model JSON: {exc}") from exc
    return ModelSpec(h, channels)
