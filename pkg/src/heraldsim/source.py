"""
Seeded two-mode squeezing and photon-detection heralding.

The idler mode starts in a weak coherent seed |alpha>, the signal mode in
vacuum, and both evolve under r (a_i a_s + a_i^dag a_s^dag) for unit time,
where r is the dimensionless interaction strength gamma t / hbar. A click of a
non-number-resolving idler detector projects the signal onto (approximately)
alpha|0> - i r|1>.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import InvalidDimensionError, InvalidStateError, NoHeraldError, ParameterError, TruncationOverflowError
from .fock import DEFAULT_DIM, DensityMatrix, FockVector, annihilation, coherent_state

log = logging.getLogger(__name__)

LEAKAGE_LIMIT = 1e-6
MIN_HERALD_PROBABILITY = 1e-15
R_MAX = 0.5

# Values fitted to the experiment.
FITTED_R = 0.22
FITTED_ETA_SIGNAL = 0.49
FITTED_ETA_IDLER = 0.10
FITTED_COHERENCE_FACTOR = 0.81
FITTED_BASE_RATE = 335e3  # counts / s at alpha = 0


@dataclass(frozen=True)
class ModelParams:
    r: float = FITTED_R
    alpha: complex = 0j
    eta_signal: float = FITTED_ETA_SIGNAL
    eta_idler: float = FITTED_ETA_IDLER
    coherence_factor: float = FITTED_COHERENCE_FACTOR
    base_count_rate: float = FITTED_BASE_RATE

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        for name in ("r", "eta_signal", "eta_idler", "coherence_factor", "base_count_rate"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0.0 <= self.r < R_MAX:
            raise ParameterError(f"r must lie in [0, {R_MAX}), got {self.r}")
        for name in ("eta_signal", "eta_idler"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ParameterError(f"{name} must lie in (0, 1], got {value}")
        if not 0.0 <= self.coherence_factor <= 1.0:
            raise ParameterError(f"coherence_factor must lie in [0, 1], got {self.coherence_factor}")
        if self.base_count_rate < 0.0:
            raise ParameterError("base_count_rate must be non-negative")
        if not np.isfinite(self.alpha):
            raise ParameterError("alpha must be finite")

    def with_alpha(self, alpha: complex) -> "ModelParams":
        return replace(self, alpha=alpha)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "alpha": [self.alpha.real, self.alpha.imag],
            "eta_signal": self.eta_signal,
            "eta_idler": self.eta_idler,
            "coherence_factor": self.coherence_factor,
            "base_count_rate": self.base_count_rate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        data = dict(data)
        alpha = data.pop("alpha", 0.0)
        if isinstance(alpha, (list, tuple)):
            alpha = complex(alpha[0], alpha[1])
        return cls(alpha=complex(alpha), **data)


@dataclass(frozen=True)
class HeraldOutcome:
    signal_state: DensityMatrix
    herald_probability: float


def first_order_qubit(params: ModelParams, dim: int = DEFAULT_DIM) -> FockVector:
    """Normalized alpha|0> - i r|1> in the signal mode."""
    if params.alpha == 0 and params.r == 0:
        raise InvalidStateError("alpha = 0 and r = 0: no click is possible, the heralded state is undefined")
    amps = np.zeros(dim, dtype=complex)
    amps[0] = params.alpha
    amps[1] = -1j * params.r
    return FockVector(amps, dim).normalize()


def first_order_pr_count(params: ModelParams) -> float:
    return abs(params.alpha) ** 2 + params.r**2


@lru_cache(maxsize=8)
def _generator_eigensystem(dim: int):
    a = annihilation(dim).elements
    eye = np.eye(dim)
    pair = np.kron(a, eye) @ np.kron(eye, a)  # a_i a_s in idler-major order
    generator = pair + pair.conj().T
    w, v = np.linalg.eigh(generator)
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def truncation_leakage(state: FockVector) -> float:
    """Probability in the top two Fock levels of either mode of a two-mode state."""
    d = state.dim
    probs = np.abs(state.amplitudes.reshape(d, d)) ** 2
    edge = np.zeros((d, d), dtype=bool)
    edge[d - 2 :, :] = True
    edge[:, d - 2 :] = True
    return float(probs[edge].sum())


def evolve_two_mode_state(params: ModelParams, dim: int = DEFAULT_DIM) -> FockVector:
    """exp(-i r (a_i a_s + h.c.)) |alpha>_i |0>_s as a two-mode vector."""
    if dim < 6:
        raise InvalidDimensionError(f"exact evolution needs dim >= 6, got {dim}")
    seed = coherent_state(params.alpha, dim).amplitudes
    initial = np.zeros(dim * dim, dtype=complex)
    initial[::dim] = seed  # |n>_i |0>_s sits at joint index n * dim
    w, v = _generator_eigensystem(dim)
    out = v @ (np.exp(-1j * params.r * w) * (v.conj().T @ initial))
    state = FockVector(out, dim, modes=2)
    leak = truncation_leakage(state)
    log.debug("two-mode evolution r=%g alpha=%s dim=%d leakage=%.3e", params.r, params.alpha, dim, leak)
    if leak >= LEAKAGE_LIMIT:
        raise TruncationOverflowError(
            f"{leak:.2e} of the probability reached the top two Fock levels at dim={dim}; use a larger dim"
        )
    return state


def evolve_two_mode(params: ModelParams, dim: int = DEFAULT_DIM) -> DensityMatrix:
    """Projector onto the evolved two-mode state (idler-major ordering)."""
    return evolve_two_mode_state(params, dim).to_density()


def click_weights(eta: float, dim: int) -> np.ndarray:
    """Diagonal of the on/off click POVM element: 1 - (1 - eta)^n."""
    if not 0.0 < eta <= 1.0:
        raise ParameterError(f"detector efficiency must lie in (0, 1], got {eta}")
    return 1.0 - (1.0 - eta) ** np.arange(dim)


def herald(rho: DensityMatrix, eta_idler: float) -> HeraldOutcome:
    """Condition the signal mode on a click of an inefficient on/off idler detector."""
    if rho.modes != 2:
        raise InvalidDimensionError("herald needs a two-mode state")
    d = rho.dim
    weights = click_weights(eta_idler, d)
    blocks = rho.data.reshape(d, d, d, d)
    conditional = np.einsum("i,iaib->ab", weights, blocks)
    probability = float(np.trace(conditional).real)
    if probability < MIN_HERALD_PROBABILITY:
        raise NoHeraldError(f"herald probability {probability:.3e} is effectively zero")
    signal = DensityMatrix(conditional / probability, d)
    return HeraldOutcome(signal, probability)


def exact_heralded_state(params: ModelParams, dim: int = DEFAULT_DIM) -> HeraldOutcome:
    return herald(evolve_two_mode(params, dim), params.eta_idler)


def seed_to_count_rate(params: ModelParams) -> float:
    """Added idler count rate (counts/s) due to the seed, to first order."""
    if params.r == 0:
        raise ZeroDivisionError("r = 0: the seed rate is not defined relative to the scattering rate")
    return params.base_count_rate * abs(params.alpha) ** 2 / params.r**2


def total_count_rate(params: ModelParams) -> float:
    return params.base_count_rate + seed_to_count_rate(params)


def alpha_from_added_rate(added_rate: float, params: ModelParams, phase: float = 0.0) -> complex:
    """Seed amplitude producing ``added_rate`` (counts/s); inverse of seed_to_count_rate."""
    if added_rate < 0:
        raise ParameterError(f"added count rate must be non-negative, got {added_rate}")
    if params.base_count_rate <= 0:
        raise ParameterError("base_count_rate must be positive to invert the rate relation")
    magnitude = params.r * np.sqrt(added_rate / params.base_count_rate)
    return complex(magnitude * np.exp(1j * phase))


def added_rate_for_seed_fraction(fraction: float, base_count_rate: float = FITTED_BASE_RATE) -> float:
    """Added rate at which a fraction of all clicks comes from the seed."""
    if not 0.0 <= fraction < 1.0:
        raise ParameterError(f"seed fraction must lie in [0, 1), got {fraction}")
    return base_count_rate * fraction / (1.0 - fraction)
