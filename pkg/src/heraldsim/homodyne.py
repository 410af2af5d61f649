"""
Homodyne quadrature statistics and Monte Carlo synthesis of homodyne records.

Convention: x = (a + a^dag)/sqrt(2), so the vacuum has quadrature variance 1/2
and the phase-theta quadrature eigenstate is |x_theta> = sum_n e^{i n theta} psi_n(x) |n>
with psi_n the Hermite-Gauss functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import InvalidStateError, ParameterError, RejectedInputError
from .fock import DensityMatrix, annihilation

TWO_PI = 2.0 * np.pi
GRID_POINTS = 4096
GRID_WIDTH_SIGMAS = 6.0
NORMALIZATION_ATOL = 1e-8


class QuadratureSample(NamedTuple):
    theta: float
    x: float


@dataclass(frozen=True, eq=False)
class QuadratureRecord:
    """Column-oriented homodyne record; iterating yields QuadratureSample."""

    theta: np.ndarray
    x: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float).reshape(-1)
        if theta.shape != x.shape:
            raise ValueError("theta and x must have the same length")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "x", x)

    @classmethod
    def from_samples(cls, samples: Sequence[QuadratureSample]) -> "QuadratureRecord":
        if isinstance(samples, QuadratureRecord):
            return samples
        arr = np.asarray([(s[0], s[1]) for s in samples], dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    def __len__(self) -> int:
        return self.x.size

    def __iter__(self) -> Iterator[QuadratureSample]:
        for t, x in zip(self.theta.tolist(), self.x.tolist()):
            yield QuadratureSample(t, x)

    def __getitem__(self, index):
        if isinstance(index, (int, np.integer)):
            return QuadratureSample(float(self.theta[index]), float(self.x[index]))
        return QuadratureRecord(self.theta[index], self.x[index], dict(self.metadata))


@dataclass(frozen=True)
class PhaseSchedule:
    """Local-oscillator phases assigned to consecutive samples.

    ``uniform-scan`` sweeps [0, 2 pi) linearly ``sweeps`` times across the
    record; ``fixed-list`` cycles through ``values``.
    """

    kind: str = "uniform-scan"
    values: tuple = ()
    sweeps: int = 1

    def __post_init__(self):
        if self.kind not in ("uniform-scan", "fixed-list"):
            raise ParameterError(f"unknown phase schedule kind {self.kind!r}")
        if self.kind == "fixed-list" and len(self.values) == 0:
            raise ParameterError("a fixed-list schedule needs at least one phase")
        if self.kind == "uniform-scan" and self.sweeps < 1:
            raise ParameterError("sweeps must be >= 1")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def phases(self, n: int) -> np.ndarray:
        if self.kind == "uniform-scan":
            theta = np.mod(TWO_PI * self.sweeps * np.arange(n) / n, TWO_PI)
        else:
            values = np.mod(np.asarray(self.values), TWO_PI)
            theta = values[np.arange(n) % values.size]
        theta[theta >= TWO_PI] = 0.0
        return theta


def hermite_functions(x, dim: int) -> np.ndarray:
    """Number-state wavefunctions psi_n(x), n < dim; shape (dim, *x.shape).

    Uses the normalized three-term recurrence, which stays finite for large n
    where explicit Hermite polynomials overflow.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((dim,) + x.shape)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x * x)
    if dim > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, dim - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def quadrature_vectors(theta, x, dim: int) -> np.ndarray:
    """Rows <n|x_theta> = e^{i n theta} psi_n(x); shape (N, dim)."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    psi = hermite_functions(x, dim).T
    return psi * np.exp(1j * np.outer(theta, np.arange(dim)))


def _require_normalized(rho: DensityMatrix) -> None:
    if rho.modes != 1:
        raise InvalidStateError("homodyne statistics need a one-mode state")
    if abs(np.trace(rho.data) - 1.0) > NORMALIZATION_ATOL:
        raise InvalidStateError(f"state is not normalized (trace {rho.trace!r})")


def quadrature_pdf(rho: DensityMatrix, theta, x):
    """p(x | theta) = <x_theta| rho |x_theta>; broadcasts over theta and x."""
    _require_normalized(rho)
    theta_b, x_b = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(x, dtype=float))
    u = quadrature_vectors(theta_b, x_b, rho.dim)
    p = np.einsum("jm,mn,jn->j", u.conj(), rho.data, u).real
    p = p.reshape(x_b.shape)
    return float(p) if p.ndim == 0 else p


def quadrature_moments(rho: DensityMatrix, theta: float) -> tuple[float, float]:
    """Exact mean and variance of the phase-theta quadrature."""
    # one extra level so x^2 is exact on the top occupied level
    data = rho.embed(rho.dim + 1).data
    a = annihilation(rho.dim + 1).elements
    xq = (a * np.exp(-1j * theta) + a.conj().T * np.exp(1j * theta)) / np.sqrt(2.0)
    mean = float(np.trace(data @ xq).real)
    second = float(np.trace(data @ xq @ xq).real)
    return mean, second - mean**2


def sampling_grid(rho: DensityMatrix, points: int = GRID_POINTS) -> np.ndarray:
    """Grid over +-6 sigma_max, sigma_max = sqrt(n_top + 1/2) for the highest occupied level."""
    pops = rho.populations
    occupied = np.nonzero(pops > 1e-14)[0]
    n_top = int(occupied[-1]) if occupied.size else 0
    half_width = GRID_WIDTH_SIGMAS * np.sqrt(n_top + 0.5)
    return np.linspace(-half_width, half_width, points)


def _cdf_harmonics(rho: DensityMatrix, grid: np.ndarray) -> np.ndarray:
    """Real basis rows such that CDF(x | theta) = coeffs(theta) @ rows.

    pdf(x|theta) = h_0(x) + 2 sum_k [Re h_k cos k theta - Im h_k sin k theta],
    h_k = sum_{n-m=k} rho_mn psi_m psi_n.
    """
    d = rho.dim
    psi = hermite_functions(grid, d)
    dx = grid[1] - grid[0]
    rows = []
    for k in range(d):
        m = np.arange(d - k)
        h = np.einsum("m,mx,mx->x", rho.data[m, m + k], psi[m], psi[m + k])
        if k == 0:
            rows.append(h.real)
        else:
            rows.append(2.0 * h.real)
            rows.append(-2.0 * h.imag)
    rows = np.asarray(rows)
    cumulative = np.zeros_like(rows)
    cumulative[:, 1:] = np.cumsum(0.5 * (rows[:, 1:] + rows[:, :-1]), axis=1) * dx
    return cumulative


def _harmonic_coefficients(theta: np.ndarray, d: int) -> np.ndarray:
    cols = [np.ones_like(theta)]
    for k in range(1, d):
        cols.append(np.cos(k * theta))
        cols.append(np.sin(k * theta))
    return np.stack(cols, axis=1)


def inverse_cdf(rho: DensityMatrix, theta: np.ndarray, u: np.ndarray, grid: np.ndarray | None = None) -> np.ndarray:
    """Map uniforms ``u`` to quadratures at phases ``theta`` by grid inversion of the CDF.

    The CDF is piecewise linear between grid points. Each sample's bracketing
    grid cell is found by bisection, evaluating the CDF only at probe indices.
    """
    _require_normalized(rho)
    grid = sampling_grid(rho) if grid is None else grid
    basis = _cdf_harmonics(rho, grid)
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    coeffs = _harmonic_coefficients(theta, rho.dim)
    target = u * (coeffs @ basis[:, -1])
    lo = np.zeros(u.size, dtype=np.intp)
    hi = np.full(u.size, grid.size - 1, dtype=np.intp)
    while True:
        active = hi - lo > 1
        if not active.any():
            break
        mid = (lo + hi) // 2
        below = np.einsum("jk,kj->j", coeffs, basis[:, mid]) < target
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)
    c_lo = np.einsum("jk,kj->j", coeffs, basis[:, lo])
    c_hi = np.einsum("jk,kj->j", coeffs, basis[:, hi])
    span = c_hi - c_lo
    frac = np.divide(target - c_lo, span, out=np.full_like(span, 0.5), where=span > 0)
    return grid[lo] + np.clip(frac, 0.0, 1.0) * (grid[1] - grid[0])


def sample_quadratures(
    rho: DensityMatrix,
    schedule: PhaseSchedule | None = None,
    n: int = 100_000,
    seed: int | np.random.SeedSequence | None = 0,
) -> QuadratureRecord:
    """Draw ``n`` independent homodyne samples at the scheduled phases.

    Output is a deterministic function of (rho, schedule, n, seed).
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    _require_normalized(rho)
    schedule = schedule or PhaseSchedule()
    rng = np.random.default_rng(seed)
    theta = schedule.phases(n)
    u = rng.random(n)
    x = inverse_cdf(rho, theta, u)
    return QuadratureRecord(theta, x, {"n": int(n)})


def validate_record(record: QuadratureRecord) -> None:
    if not (np.all(np.isfinite(record.x)) and np.all(np.isfinite(record.theta))):
        raise RejectedInputError("quadrature record contains non-finite values")


def sidecar_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".meta.json")


def write_quadrature_csv(path, record: QuadratureRecord, metadata: dict | None = None) -> Path:
    """Write ``theta,x`` CSV (17 significant digits, exact float round trip) plus optional JSON sidecar."""
    path = Path(path)
    data = np.column_stack([record.theta, record.x])
    with open(path, "w", newline="\n") as fh:
        fh.write("theta,x\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    if metadata is not None:
        with open(sidecar_path(path), "w") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return path


def read_quadrature_csv(path) -> QuadratureRecord:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().replace(" ", "")
        if header != "theta,x":
            raise RejectedInputError(f"{path}: expected header 'theta,x', got {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = np.empty((0, 2))
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    return QuadratureRecord(data[:, 0], data[:, 1], meta)
