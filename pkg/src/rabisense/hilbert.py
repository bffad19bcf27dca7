"""
Operators and states on the truncated space spin (x) Fock(N).

Basis ordering is spin-major: index ``s * N + n`` with ``s = 0`` for
spin up, ``s = 1`` for spin down and ``n`` the phonon number. All arrays
handed out by this module are read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch, TruncationError, ValidationError

DEFAULT_FOCK_DIM = 40
TAIL_TOLERANCE = 1e-8

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _frozen(a) -> NDArray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HilbertSpec:
    fock_dim: int = DEFAULT_FOCK_DIM

    def __post_init__(self):
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 2:
            raise ValidationError(f"fock_dim must be an integer >= 2, got {self.fock_dim!r}")
        object.__setattr__(self, "fock_dim", int(self.fock_dim))

    @property
    def total_dim(self) -> int:
        return 2 * self.fock_dim


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense square operator with a Hermiticity flag."""

    entries: NDArray
    hermitian: bool = False

    def __post_init__(self):
        m = _frozen(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"operator must be square, got shape {m.shape}")
        if self.hermitian and m.size and np.abs(m - m.conj().T).max() > 1e-12:
            raise ValidationError("operator flagged hermitian but max|A - A^dag| > 1e-12")
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dag(self) -> OperatorMatrix:
        return OperatorMatrix(self.entries.conj().T, self.hermitian)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _check_dims(self.dim, other.dim)
            return OperatorMatrix(self.entries @ other.entries)
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, OperatorMatrix):
            _check_dims(self.dim, other.dim)
            return OperatorMatrix(self.entries + other.entries, self.hermitian and other.hermitian)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, OperatorMatrix):
            _check_dims(self.dim, other.dim)
            return OperatorMatrix(self.entries - other.entries, self.hermitian and other.hermitian)
        return NotImplemented

    def scale(self, factor: complex) -> OperatorMatrix:
        factor = complex(factor)
        return OperatorMatrix(self.entries * factor, self.hermitian and factor.imag == 0)

    def commutator(self, other: OperatorMatrix) -> OperatorMatrix:
        _check_dims(self.dim, other.dim)
        return OperatorMatrix(self.entries @ other.entries - other.entries @ self.entries)


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: NDArray

    def __post_init__(self):
        v = _frozen(self.amplitudes)
        if v.ndim != 1:
            raise DimensionMismatch(f"state vector must be 1-D, got shape {v.shape}")
        object.__setattr__(self, "amplitudes", v)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def to_density(self) -> DensityMatrix:
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: NDArray

    def __post_init__(self):
        m = _frozen(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"density matrix must be square, got shape {m.shape}")
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.entries + self.entries.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.entries - self.entries.conj().T).max())


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise DimensionMismatch(f"dimension mismatch: {a} vs {b}")


def fock_annihilation(fock_dim: int) -> NDArray:
    """Truncated annihilation operator on the Fock factor alone."""
    return np.diag(np.sqrt(np.arange(1, fock_dim, dtype=float)), 1).astype(complex)


def annihilation(spec: HilbertSpec) -> OperatorMatrix:
    return OperatorMatrix(np.kron(np.eye(2), fock_annihilation(spec.fock_dim)))


def creation(spec: HilbertSpec) -> OperatorMatrix:
    return annihilation(spec).dag()


def number(spec: HilbertSpec) -> OperatorMatrix:
    n = np.arange(spec.fock_dim, dtype=float)
    return OperatorMatrix(np.kron(np.eye(2), np.diag(n)), hermitian=True)


def quadrature(spec: HilbertSpec) -> OperatorMatrix:
    """Position quadrature a + a^dag."""
    a = annihilation(spec).entries
    return OperatorMatrix(a + a.conj().T, hermitian=True)


def pauli(axis: str, spec: HilbertSpec) -> OperatorMatrix:
    try:
        s = _PAULI[axis]
    except KeyError:
        raise ValidationError(f"unknown Pauli axis {axis!r}; expected one of x, y, z") from None
    return OperatorMatrix(np.kron(s, np.eye(spec.fock_dim)), hermitian=True)


def identity(spec: HilbertSpec) -> OperatorMatrix:
    return OperatorMatrix(np.eye(spec.total_dim), hermitian=True)


def parity(spec: HilbertSpec) -> OperatorMatrix:
    """Parity exp(i pi a^dag a) combined with the spin reflection sigma_x -> -sigma_x.

    The spin part is conjugation by sigma_y, which flips sigma_x and
    sigma_z and leaves sigma_y alone.
    """
    phase = np.diag((-1.0) ** np.arange(spec.fock_dim))
    return OperatorMatrix(np.kron(_PAULI["y"], phase), hermitian=True)


def coherent_state(alpha: complex, spec: HilbertSpec) -> StateVector:
    """Truncated, renormalized coherent state on the Fock factor (length N)."""
    alpha = complex(alpha)
    n = np.arange(spec.fock_dim)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    if alpha == 0:
        amps = np.zeros(spec.fock_dim, dtype=complex)
        amps[0] = 1.0
    else:
        mag = np.exp(-abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * log_fact)
        amps = mag * np.exp(1j * n * np.angle(alpha))
    total = float(np.sum(np.abs(amps) ** 2))
    # tail relative to the untruncated norm of 1
    tail = 1.0 - total + float(np.sum(np.abs(amps[-2:]) ** 2))
    if tail > TAIL_TOLERANCE:
        raise TruncationError(
            f"coherent state |alpha|={abs(alpha):.3g} leaves {tail:.2e} population in the top "
            f"two levels of a {spec.fock_dim}-level Fock space"
        )
    return StateVector(amps / math.sqrt(total))


def spin_state(label: str) -> NDArray:
    """Named single-spin states in the {up, down} basis: '+x', '-x', '+y', '-y', 'up', 'down'."""
    r = 1 / math.sqrt(2)
    table = {
        "up": [1, 0],
        "down": [0, 1],
        "+x": [r, r],
        "-x": [r, -r],
        "+y": [r, 1j * r],
        "-y": [r, -1j * r],
    }
    try:
        return np.array(table[label], dtype=complex)
    except KeyError:
        raise ValidationError(f"unknown spin state {label!r}") from None


def product_state(spin: NDArray, fock: StateVector | NDArray) -> StateVector:
    f = fock.amplitudes if isinstance(fock, StateVector) else np.asarray(fock, dtype=complex)
    return StateVector(np.kron(np.asarray(spin, dtype=complex), f))


def fock_state(n: int, spec: HilbertSpec) -> StateVector:
    v = np.zeros(spec.fock_dim, dtype=complex)
    v[n] = 1.0
    return StateVector(v)


State = Union[StateVector, DensityMatrix]


def expectation(state: State, op: OperatorMatrix):
    """<psi|A|psi> or Tr(rho A).

    Returns a float when ``op`` is flagged Hermitian (after checking the
    imaginary part is below 1e-8), otherwise the complex value.
    """
    _check_dims(state.dim, op.dim)
    if isinstance(state, StateVector):
        psi = state.amplitudes
        value = complex(np.vdot(psi, op.entries @ psi))
    else:
        value = complex(np.einsum("ij,ji->", state.entries, op.entries))
    if op.hermitian:
        if abs(value.imag) > 1e-8:
            raise ValidationError(f"Hermitian expectation has imaginary part {value.imag:.3e}")
        return value.real
    return value
