"""
Iterative maximum-likelihood (R rho R) reconstruction from homodyne records.

Every sample contributes its own projector |x_theta><x_theta| (no binning).
The update is rho <- N[R rho R] with R = (1/N_s) sum_j Pi_j / Tr(Pi_j rho);
an optional dilution eps replaces R by (I + eps R) / (1 + eps).
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AlgorithmContractError, InvalidDimensionError, ParameterError, RejectedInputError
from .fock import DensityMatrix
from .homodyne import QuadratureRecord, QuadratureSample, quadrature_vectors, validate_record

log = logging.getLogger(__name__)

MIN_SAMPLES = 1000
DEFAULT_MAX_ITER = 2000
DEFAULT_TOL = 1e-8
MONOTONE_SLACK = 1e-9


class ZeroProbabilityWarning(UserWarning):
    """A sample has zero probability under a rank-deficient state."""


@dataclass
class ReconstructionReport:
    rho: DensityMatrix
    loglik_trace: list = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False
    dim: int = 0
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "n_samples": self.n_samples,
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "rho": matrix_to_pairs(self.rho.data),
            "loglik_trace": [float(v) for v in self.loglik_trace],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReconstructionReport":
        matrix = pairs_to_matrix(data["rho"])
        return cls(
            rho=DensityMatrix(matrix, matrix.shape[0]),
            loglik_trace=list(data.get("loglik_trace", [])),
            iterations_run=int(data.get("iterations_run", 0)),
            converged=bool(data.get("converged", False)),
            dim=int(data.get("dim", matrix.shape[0])),
            n_samples=int(data.get("n_samples", 0)),
        )

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        return path

    @classmethod
    def read_json(cls, path) -> "ReconstructionReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def matrix_to_pairs(matrix: np.ndarray) -> list:
    """Complex matrix as nested [re, im] pairs, row-major."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix)]


def pairs_to_matrix(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def _as_record(samples) -> QuadratureRecord:
    if isinstance(samples, QuadratureRecord):
        return samples
    return QuadratureRecord.from_samples(samples)


def _probabilities(vectors: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("jm,mn,jn->j", vectors.conj(), rho, vectors, optimize=True).real


def loglikelihood(rho: DensityMatrix, samples: Sequence[QuadratureSample] | QuadratureRecord) -> float:
    """Sum of log p(x_j | theta_j); -inf (with a ZeroProbabilityWarning) if any sample is impossible."""
    record = _as_record(samples)
    if abs(np.trace(rho.data) - 1.0) > 1e-8:
        raise ParameterError("loglikelihood needs a normalized state")
    p = _probabilities(quadrature_vectors(record.theta, record.x, rho.dim), rho.data)
    if np.any(p <= 0.0):
        warnings.warn(f"{int(np.sum(p <= 0))} sample(s) have zero probability", ZeroProbabilityWarning, stacklevel=2)
        return float("-inf")
    return float(np.sum(np.log(p)))


def maxlik_reconstruct(
    samples: Sequence[QuadratureSample] | QuadratureRecord,
    dim: int = 6,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    dilution: float | None = None,
    initial: DensityMatrix | None = None,
) -> ReconstructionReport:
    """Reconstruct a density matrix from homodyne samples.

    Starts from the maximally mixed state (or ``initial``) and stops when the
    relative log-likelihood gain of an iteration drops below ``tol``. Raises
    AlgorithmContractError if the log-likelihood ever decreases by more than
    1e-9.
    """
    record = _as_record(samples)
    validate_record(record)
    if len(record) < MIN_SAMPLES:
        raise RejectedInputError(f"need at least {MIN_SAMPLES} samples, got {len(record)}")
    if dim < 2:
        raise InvalidDimensionError("dim must be >= 2")
    if dilution is not None and dilution <= 0:
        raise ParameterError("dilution must be positive")

    n_samples = len(record)
    vectors = quadrature_vectors(record.theta, record.x, dim)
    if initial is None:
        rho = np.eye(dim, dtype=complex) / dim
    else:
        if initial.dim != dim:
            raise InvalidDimensionError("initial state has the wrong dimension")
        rho = np.array(initial.data)

    p = _probabilities(vectors, rho)
    if np.any(p <= 0):
        raise RejectedInputError("initial state assigns zero probability to some samples")
    current = float(np.sum(np.log(p)))
    trace = [current]
    converged = False
    iterations = 0
    eye = np.eye(dim)

    for iterations in range(1, max_iter + 1):
        R = (vectors.T / p) @ vectors.conj() / n_samples
        if dilution is not None:
            R = (eye + dilution * R) / (1.0 + dilution)
        rho = R @ rho @ R
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.trace(rho).real
        p = _probabilities(vectors, rho)
        new = float(np.sum(np.log(p)))
        trace.append(new)
        gain = new - current
        if gain < -MONOTONE_SLACK:
            raise AlgorithmContractError(
                f"log-likelihood decreased by {-gain:.3e} at iteration {iterations}; "
                "retry with a dilution parameter"
            )
        current = new
        if gain < tol * abs(current):
            converged = True
            break

    log.debug("maxlik: %d iterations, converged=%s, loglik=%.6f", iterations, converged, current)
    return ReconstructionReport(
        rho=DensityMatrix(rho, dim),
        loglik_trace=trace,
        iterations_run=iterations,
        converged=converged,
        dim=dim,
        n_samples=n_samples,
    )
