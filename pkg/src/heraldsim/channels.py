"""Photon loss and the empirical qubit-coherence reduction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import InvalidDimensionError, ParameterError
from .fock import DensityMatrix


@dataclass(frozen=True)
class LossChannel:
    transmissivity: float

    def __post_init__(self):
        if not 0.0 < self.transmissivity <= 1.0:
            raise ParameterError(f"transmissivity must lie in (0, 1], got {self.transmissivity}")

    def kraus_operators(self, dim: int) -> np.ndarray:
        return loss_kraus_operators(self.transmissivity, dim)

    def __call__(self, rho: DensityMatrix) -> DensityMatrix:
        return apply_loss(rho, self.transmissivity)


def loss_kraus_operators(T: float, dim: int) -> np.ndarray:
    """Stack of A_k with <n-k|A_k|n> = sqrt(C(n,k) T^(n-k) (1-T)^k), k = 0..dim-1."""
    if not 0.0 < T <= 1.0:
        raise ParameterError(f"transmissivity must lie in (0, 1], got {T}")
    ops = np.zeros((dim, dim, dim))
    for k in range(dim):
        n = np.arange(k, dim)
        log_binom = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        if T == 1.0:
            weights = np.full(n.shape, 1.0 if k == 0 else 0.0)
        else:
            weights = np.exp(0.5 * (log_binom + (n - k) * np.log(T) + k * np.log1p(-T)))
        ops[k, n - k, n] = weights
    return ops


def apply_loss(rho: DensityMatrix, T: float) -> DensityMatrix:
    """Pure-loss (beamsplitter) channel with transmissivity T on a one-mode state."""
    if rho.modes != 1:
        raise InvalidDimensionError("apply_loss acts on one-mode states")
    kraus = loss_kraus_operators(T, rho.dim)
    out = np.einsum("kab,bc,kdc->ad", kraus, rho.data, kraus)
    return DensityMatrix(out, rho.dim)


def apply_coherence_factor(rho: DensityMatrix, c: float) -> DensityMatrix:
    """Scale rho_01 and rho_10 by c; every other element is left untouched."""
    if not 0.0 <= c <= 1.0:
        raise ParameterError(f"coherence factor must lie in [0, 1], got {c}")
    if rho.modes != 1:
        raise InvalidDimensionError("apply_coherence_factor acts on one-mode states")
    out = np.array(rho.data)
    out[0, 1] *= c
    out[1, 0] *= c
    return DensityMatrix(out, rho.dim)
