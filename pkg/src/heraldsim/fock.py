"""
Truncated Fock-space states and operators for one or two bosonic modes.

Two-mode objects use idler-major ordering: the joint index of |n_idler, n_signal>
is ``n_idler * dim + n_signal``, i.e. the idler index varies slowest. Every
module in the package relies on this convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gammaln

from .errors import InvalidDimensionError, InvalidStateError, TruncationOverflowError

IDLER = "idler"
SIGNAL = "signal"
MODES = (IDLER, SIGNAL)

DEFAULT_DIM = 10
TAIL_TOLERANCE = 1e-8
HERMITIAN_ATOL = 1e-10
PSD_ATOL = 1e-9
TRACE_ATOL = 1e-10


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.complex128, copy=True)
    out.setflags(write=False)
    return out


def _check_dim(dim: int) -> int:
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"truncation dimension must be an integer >= 2, got {dim!r}")
    return int(dim)


@dataclass(frozen=True, eq=False)
class FockVector:
    """Pure-state amplitudes over number states, one or two modes."""

    amplitudes: np.ndarray
    dim: int
    modes: int = 1

    def __post_init__(self):
        _check_dim(self.dim)
        if self.modes not in (1, 2):
            raise InvalidDimensionError(f"modes must be 1 or 2, got {self.modes}")
        amps = _frozen(self.amplitudes).reshape(-1)
        if amps.size != self.dim**self.modes:
            raise InvalidDimensionError(
                f"expected {self.dim ** self.modes} amplitudes, got {amps.size}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def number(cls, n: int, dim: int = DEFAULT_DIM) -> "FockVector":
        """The number state |n>."""
        dim = _check_dim(dim)
        if not 0 <= n < dim:
            raise InvalidDimensionError(f"|{n}> is outside the truncation dim={dim}")
        amps = np.zeros(dim, dtype=complex)
        amps[n] = 1.0
        return cls(amps, dim)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "FockVector":
        norm = self.norm
        if norm == 0.0:
            raise InvalidStateError("cannot normalize the zero vector")
        return FockVector(self.amplitudes / norm, self.dim, self.modes)

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.dim, self.modes)

    def __getitem__(self, index):
        if self.modes == 2 and isinstance(index, tuple):
            i, s = index
            return self.amplitudes[i * self.dim + s]
        return self.amplitudes[index]


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density matrix over a truncated Fock basis.

    Heralded matrices before normalization are allowed (their trace is the
    heralding probability); use :meth:`validate` to assert the physical
    invariants where they are expected to hold.
    """

    data: np.ndarray
    dim: int
    modes: int = 1

    def __post_init__(self):
        _check_dim(self.dim)
        if self.modes not in (1, 2):
            raise InvalidDimensionError(f"modes must be 1 or 2, got {self.modes}")
        data = _frozen(self.data)
        size = self.dim**self.modes
        if data.shape != (size, size):
            raise InvalidDimensionError(f"expected a {size}x{size} matrix, got {data.shape}")
        object.__setattr__(self, "data", data)

    @classmethod
    def number(cls, n: int, dim: int = DEFAULT_DIM) -> "DensityMatrix":
        return FockVector.number(n, dim).to_density()

    @classmethod
    def from_diagonal(cls, populations, dim: int = DEFAULT_DIM) -> "DensityMatrix":
        diag = np.zeros(dim, dtype=complex)
        populations = np.asarray(populations, dtype=float)
        diag[: populations.size] = populations
        return cls(np.diag(diag), dim)

    def __getitem__(self, index):
        return self.data[index]

    @property
    def trace(self) -> float:
        return float(np.trace(self.data).real)

    @property
    def populations(self) -> np.ndarray:
        return self.data.diagonal().real.copy()

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T))

    def is_hermitian(self, atol: float = HERMITIAN_ATOL) -> bool:
        return bool(np.allclose(self.data, self.data.conj().T, rtol=0.0, atol=atol))

    def is_normalized(self, atol: float = TRACE_ATOL) -> bool:
        return abs(np.trace(self.data) - 1.0) <= atol

    def validate(self, normalized: bool = True) -> "DensityMatrix":
        """Check Hermiticity, positivity and (optionally) unit trace; return self."""
        if not self.is_hermitian():
            raise InvalidStateError("matrix is not Hermitian")
        lowest = self.eigenvalues().min()
        if lowest < -PSD_ATOL:
            raise InvalidStateError(f"matrix has a negative eigenvalue {lowest:.3e}")
        if normalized and not self.is_normalized():
            raise InvalidStateError(f"trace is {self.trace!r}, expected 1")
        return self

    def normalize(self) -> "DensityMatrix":
        tr = np.trace(self.data).real
        if tr <= 0.0:
            raise InvalidStateError("cannot normalize a matrix with non-positive trace")
        return DensityMatrix(self.data / tr, self.dim, self.modes)

    def expect(self, operator) -> complex:
        op = operator.elements if isinstance(operator, ModeOperator) else np.asarray(operator)
        return complex(np.trace(self.data @ op))

    def mean_photon_number(self) -> float:
        if self.modes != 1:
            raise InvalidDimensionError("mean_photon_number is defined for one mode")
        return float(np.dot(np.arange(self.dim), self.populations))

    def embed(self, dim: int) -> "DensityMatrix":
        """Zero-pad (or truncate) a one-mode matrix to another dimension."""
        if self.modes != 1:
            raise InvalidDimensionError("embed is defined for one mode")
        dim = _check_dim(dim)
        out = np.zeros((dim, dim), dtype=complex)
        k = min(dim, self.dim)
        out[:k, :k] = self.data[:k, :k]
        return DensityMatrix(out, dim)


@dataclass(frozen=True, eq=False)
class ModeOperator:
    dim: int
    elements: np.ndarray

    def __post_init__(self):
        _check_dim(self.dim)
        elements = _frozen(self.elements)
        if elements.shape != (self.dim, self.dim):
            raise InvalidDimensionError(f"expected a {self.dim}x{self.dim} operator")
        object.__setattr__(self, "elements", elements)

    def adjoint(self) -> "ModeOperator":
        return ModeOperator(self.dim, self.elements.conj().T)

    def __matmul__(self, other):
        if isinstance(other, ModeOperator):
            return ModeOperator(self.dim, self.elements @ other.elements)
        if isinstance(other, FockVector):
            if other.modes != 1 or other.dim != self.dim:
                raise InvalidDimensionError("operator and state dimensions differ")
            return FockVector(self.elements @ other.amplitudes, self.dim)
        return self.elements @ np.asarray(other)


def annihilation(dim: int) -> ModeOperator:
    """Truncated lowering operator with ``a[n-1, n] = sqrt(n)``."""
    dim = _check_dim(dim)
    return ModeOperator(dim, np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1))


def number_operator(dim: int) -> ModeOperator:
    dim = _check_dim(dim)
    return ModeOperator(dim, np.diag(np.arange(dim, dtype=float)))


def coherent_amplitudes(alpha: complex, n_max: int) -> np.ndarray:
    """Untruncated-normalization amplitudes exp(-|a|^2/2) a^n / sqrt(n!) for n < n_max."""
    n = np.arange(n_max)
    alpha = complex(alpha)
    if alpha == 0:
        out = np.zeros(n_max, dtype=complex)
        out[0] = 1.0
        return out
    log_mag = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * np.angle(alpha) * n)


def coherent_state(alpha: complex, dim: int = DEFAULT_DIM) -> FockVector:
    """Coherent state |alpha>, renormalized on the truncated space.

    Raises TruncationOverflowError if the discarded tail carries more than 1e-8
    of the probability.
    """
    dim = _check_dim(dim)
    amps = coherent_amplitudes(alpha, dim)
    tail = max(0.0, 1.0 - float(np.sum(np.abs(amps) ** 2)))
    if tail > TAIL_TOLERANCE:
        raise TruncationOverflowError(
            f"coherent state alpha={alpha} loses {tail:.2e} of its weight at dim={dim}; "
            "increase dim"
        )
    return FockVector(amps, dim).normalize()


Operand = Union[FockVector, DensityMatrix]


def tensor(idler: Operand, signal: Operand) -> Operand:
    """Kronecker product, idler first (idler index varies slowest)."""
    if type(idler) is not type(signal):
        raise TypeError("tensor operands must both be FockVector or both DensityMatrix")
    if idler.dim != signal.dim:
        raise InvalidDimensionError(f"tensor operands differ in dim: {idler.dim} vs {signal.dim}")
    if idler.modes != 1 or signal.modes != 1:
        raise InvalidDimensionError("tensor operands must be single-mode")
    if isinstance(idler, FockVector):
        return FockVector(np.kron(idler.amplitudes, signal.amplitudes), idler.dim, modes=2)
    return DensityMatrix(np.kron(idler.data, signal.data), idler.dim, modes=2)


def partial_trace(rho: DensityMatrix, keep: str) -> DensityMatrix:
    """Reduce a two-mode matrix to the ``keep`` mode ("idler" or "signal")."""
    if keep not in MODES:
        raise ValueError(f"keep must be one of {MODES}, got {keep!r}")
    if rho.modes != 2:
        raise InvalidDimensionError("partial_trace needs a two-mode matrix")
    d = rho.dim
    blocks = rho.data.reshape(d, d, d, d)  # [i, s, i', s']
    if keep == SIGNAL:
        reduced = np.einsum("iajb,ij->ab", blocks, np.eye(d))
    else:
        reduced = np.einsum("iajb,ab->ij", blocks, np.eye(d))
    return DensityMatrix(reduced, d)


def _psd_sqrt(data: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (data + data.conj().T))
    # eigenvalue noise of rank-deficient matrices would otherwise leak in as sqrt(1e-17)
    w = np.where(w > 1e-14 * max(w.max(), 0.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity ||sqrt(rho) sqrt(sigma)||_1^2, clipped to [0, 1]."""
    if rho.dim != sigma.dim or rho.modes != sigma.modes:
        raise InvalidDimensionError("fidelity operands have different dimensions")
    singular = np.linalg.svd(_psd_sqrt(rho.data) @ _psd_sqrt(sigma.data), compute_uv=False)
    return min(1.0, max(0.0, float(np.sum(singular) ** 2)))


def random_density(dim: int, rank: int | None = None, rng=None, support: int | None = None) -> DensityMatrix:
    """Random density matrix (Ginibre ensemble), optionally confined to the lowest ``support`` levels."""
    rng = np.random.default_rng(rng)
    k = dim if support is None else support
    rank = k if rank is None else rank
    g = rng.normal(size=(k, rank)) + 1j * rng.normal(size=(k, rank))
    block = g @ g.conj().T
    out = np.zeros((dim, dim), dtype=complex)
    out[:k, :k] = block / np.trace(block).real
    return DensityMatrix(out, dim)
