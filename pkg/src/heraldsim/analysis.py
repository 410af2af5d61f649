"""
Figures of merit and model curves: Wigner functions, generalized efficiency,
rho_11 / |rho_01| / efficiency against the added idler count rate, and
least-squares fitting of model parameters to such curves.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import eval_genlaguerre, gammaln

from .channels import apply_coherence_factor, apply_loss
from .errors import InvalidStateError, ParameterError
from .fock import DEFAULT_DIM, DensityMatrix
from .source import ModelParams, alpha_from_added_rate, exact_heralded_state, first_order_qubit

MODELS = ("first-order", "exact")
FIT_PARAMETERS = ("r", "eta_signal", "eta_idler", "coherence_factor", "base_count_rate")
WIGNER_BOUNDARY_LIMIT = 1e-4


# -- Wigner function -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WignerGrid:
    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray  # values[i, j] = W(x_axis[i], p_axis[j])
    boundary_warning: bool = False

    def integral(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.values, self.p_axis, axis=1), self.x_axis))

    def at(self, x: float, p: float) -> float:
        i = int(np.argmin(np.abs(self.x_axis - x)))
        j = int(np.argmin(np.abs(self.p_axis - p)))
        return float(self.values[i, j])

    def peak(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.x_axis[i]), float(self.p_axis[j])

    def write_csv(self, path) -> Path:
        path = Path(path)
        X, P = np.meshgrid(self.x_axis, self.p_axis, indexing="ij")
        with open(path, "w", newline="\n") as fh:
            fh.write("x,p,W\n")
            np.savetxt(fh, np.column_stack([X.ravel(), P.ravel(), self.values.ravel()]), fmt="%.17g", delimiter=",")
        return path

    def to_dict(self) -> dict:
        return {
            "x_axis": self.x_axis.tolist(),
            "p_axis": self.p_axis.tolist(),
            "values": self.values.tolist(),
            "boundary_warning": self.boundary_warning,
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()) + "\n")
        return path


def displaced_parity_elements(dim: int, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """<n| D(b) P D(b)^dag |m> for b = (x + i p)/sqrt(2); shape (dim, dim, *x.shape).

    Closed form for n >= m: (-1)^m sqrt(m!/n!) (2b)^(n-m) exp(-2|b|^2) L_m^(n-m)(4|b|^2);
    the n < m half follows from Hermiticity.
    """
    beta = (np.asarray(x) + 1j * np.asarray(p)) / np.sqrt(2.0)
    s = 4.0 * np.abs(beta) ** 2
    gauss = np.exp(-0.5 * s)
    out = np.empty((dim, dim) + beta.shape, dtype=complex)
    for m in range(dim):
        for n in range(m, dim):
            k = n - m
            coef = (-1) ** m * np.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)))
            val = coef * (2.0 * beta) ** k * gauss * eval_genlaguerre(m, k, s)
            out[n, m] = val
            out[m, n] = np.conj(val)
    return out


def wigner(rho: DensityMatrix, x_axis: Sequence[float] | None = None, p_axis: Sequence[float] | None = None) -> WignerGrid:
    """W(x, p) = (1/pi) Tr[rho D P D^dag] on a grid; default 121 x 121 over [-4, 4]^2."""
    if abs(np.trace(rho.data) - 1.0) > 1e-8:
        raise InvalidStateError("wigner needs a normalized state")
    x_axis = np.linspace(-4.0, 4.0, 121) if x_axis is None else np.asarray(x_axis, dtype=float)
    p_axis = np.linspace(-4.0, 4.0, 121) if p_axis is None else np.asarray(p_axis, dtype=float)
    X, P = np.meshgrid(x_axis, p_axis, indexing="ij")
    A = displaced_parity_elements(rho.dim, X, P)
    values = np.einsum("mn,nm...->...", rho.data, A).real / np.pi
    edges = np.concatenate([values[0], values[-1], values[:, 0], values[:, -1]])
    flagged = bool(np.max(np.abs(edges)) > WIGNER_BOUNDARY_LIMIT)
    if flagged:
        warnings.warn("Wigner function is not negligible on the grid boundary; widen the grid", stacklevel=2)
    return WignerGrid(x_axis, p_axis, values, flagged)


def wigner_origin(rho: DensityMatrix) -> float:
    """W(0, 0) = (1/pi) sum_n (-1)^n rho_nn."""
    return float(np.dot((-1.0) ** np.arange(rho.dim), rho.populations) / np.pi)


# -- generalized efficiency -------------------------------------------------


def generalized_efficiency(rho) -> float:
    """rho_11 / (1 - |rho_01|^2 / rho_11), from the qubit block only.

    A state without single-photon weight has efficiency 0.
    """
    data = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    rho11 = float(data[1, 1].real)
    if rho11 <= 0.0:
        return 0.0
    denominator = 1.0 - abs(data[0, 1]) ** 2 / rho11
    if denominator <= 0.0:
        raise InvalidStateError("|rho_01|^2 >= rho_00 rho_11: not a physical qubit block")
    return float(rho11 / denominator)


# -- model curves -------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    added_rate: float  # kHz
    rho11: float
    rho01_mag: float
    efficiency: float


CURVE_HEADER = ("added_rate_khz", "rho11", "rho01_mag", "efficiency")


def model_signal_state(
    params: ModelParams,
    model: str = "exact",
    with_coherence_factor: bool = True,
    dim: int = DEFAULT_DIM,
) -> DensityMatrix:
    """Heralded signal state after signal loss and, optionally, the coherence factor."""
    if model == "first-order":
        state = first_order_qubit(params, dim).to_density()
    elif model == "exact":
        state = exact_heralded_state(params, dim).signal_state
    else:
        raise ParameterError(f"model must be one of {MODELS}, got {model!r}")
    state = apply_loss(state, params.eta_signal)
    if with_coherence_factor:
        state = apply_coherence_factor(state, params.coherence_factor)
    return state


def curve_point(rate_khz: float, state: DensityMatrix) -> CurvePoint:
    return CurvePoint(
        added_rate=float(rate_khz),
        rho11=float(state[1, 1].real),
        rho01_mag=float(abs(state[0, 1])),
        efficiency=generalized_efficiency(state),
    )


def theory_curves(
    params: ModelParams,
    rate_grid: Iterable[float],
    model: str = "exact",
    with_coherence_factor: bool = False,
    dim: int = DEFAULT_DIM,
    seed_phase: float = 0.0,
) -> list[CurvePoint]:
    """Model rho_11, |rho_01| and efficiency at each added idler rate (kHz)."""
    points = []
    for rate in rate_grid:
        alpha = alpha_from_added_rate(1e3 * float(rate), params, seed_phase)
        state = model_signal_state(params.with_alpha(alpha), model, with_coherence_factor, dim)
        points.append(curve_point(rate, state))
    return points


def write_curve_csv(path, points: Sequence[CurvePoint]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for pt in points:
            writer.writerow([repr(float(v)) for v in (pt.added_rate, pt.rho11, pt.rho01_mag, pt.efficiency)])
    return path


def read_curve_csv(path) -> list[CurvePoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        CurvePoint(float(r["added_rate_khz"]), float(r["rho11"]), float(r["rho01_mag"]), float(r["efficiency"]))
        for r in rows
    ]


# -- fitting ----------------------------------------------------------------


@dataclass
class FitResult:
    params: ModelParams
    residual: float
    iterations: int
    evaluations: int
    converged: bool
    objective_trace: list = field(default_factory=list)


_BOUNDS = {
    "r": (1e-6, 0.499),
    "eta_signal": (1e-6, 1.0),
    "eta_idler": (1e-6, 1.0),
    "coherence_factor": (0.0, 1.0),
    "base_count_rate": (1e-6, None),
}


def _objective(params: ModelParams, data: Sequence[CurvePoint], model: str, with_cf: bool, dim: int) -> float:
    model_points = theory_curves(params, [pt.added_rate for pt in data], model, with_cf, dim)
    total = 0.0
    for m, d in zip(model_points, data):
        total += (m.rho11 - d.rho11) ** 2 + (m.rho01_mag - d.rho01_mag) ** 2
    return total


def fit_model(
    data: Sequence[CurvePoint],
    free: Sequence[str],
    init: ModelParams,
    model: str = "exact",
    with_coherence_factor: bool = True,
    dim: int = DEFAULT_DIM,
    max_evals: int = 2000,
    xatol: float = 1e-10,
    fatol: float = 1e-16,
) -> FitResult:
    """Least-squares fit of the ``free`` parameters to (rho_11, |rho_01|) data.

    Bounded Nelder-Mead; on budget exhaustion the best point found is returned
    with ``converged=False``.
    """
    data = list(data)
    free = list(free)
    if len(data) < 4:
        raise ParameterError("fit_model needs at least 4 data points")
    if not free:
        raise ParameterError("at least one parameter must be free")
    unknown = set(free) - set(FIT_PARAMETERS)
    if unknown:
        raise ParameterError(f"cannot fit {sorted(unknown)}; choose from {FIT_PARAMETERS}")

    # base_count_rate is scaled to O(1) so the simplex steps are comparable.
    scale = np.array([init.base_count_rate if name == "base_count_rate" else 1.0 for name in free])
    scale[scale == 0] = 1.0
    bounds = []
    for name, s in zip(free, scale):
        lo, hi = _BOUNDS[name]
        bounds.append((lo / s, None if hi is None else hi / s))

    def unpack(z):
        values = {name: float(v * s) for name, v, s in zip(free, z, scale)}
        return replace(init, **values)

    best = {"f": np.inf, "z": None}

    def f(z):
        try:
            value = _objective(unpack(z), data, model, with_coherence_factor, dim)
        except (ParameterError, InvalidStateError):
            return 1e6
        if value < best["f"]:
            best["f"], best["z"] = value, np.array(z)
        return value

    trace = []

    def record(intermediate_result):
        trace.append(float(intermediate_result.fun))

    z0 = np.array([getattr(init, name) for name in free], dtype=float) / scale
    result = minimize(
        f,
        z0,
        method="Nelder-Mead",
        bounds=bounds,
        callback=record,
        options={"maxfev": max_evals, "xatol": xatol, "fatol": fatol, "adaptive": len(free) > 2},
    )
    z_best = best["z"] if best["z"] is not None else z0
    return FitResult(
        params=unpack(z_best),
        residual=float(best["f"]),
        iterations=int(result.nit),
        evaluations=int(result.nfev),
        converged=bool(result.success),
        objective_trace=trace,
    )
