"""
Config-driven simulate -> sample -> reconstruct -> analyze runner.

Output layout under ``output_dir``::

    manifest.json
    curves/curve_first_order.csv    first-order model, signal loss only
    curves/curve_exact.csv          exact model, signal loss only
    curves/curve_exact_cf.csv       exact model with the coherence factor
    points.csv                      reconstructed curve points (if any)
    point_000/state.json            simulated signal state
    point_000/quadratures.csv       homodyne record (+ quadratures.meta.json)
    point_000/report.json           MaxLik reconstruction

Data files contain no timestamps, so a fixed config reproduces them byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .analysis import (
    curve_point,
    model_signal_state,
    theory_curves,
    write_curve_csv,
)
from .errors import ParameterError, PipelineDependencyError, StructuralDiffError
from .fock import DensityMatrix
from .homodyne import PhaseSchedule, read_quadrature_csv, sample_quadratures, write_quadrature_csv
from .source import ModelParams, alpha_from_added_rate, seed_to_count_rate
from .tomography import ReconstructionReport, matrix_to_pairs, maxlik_reconstruct, pairs_to_matrix

log = logging.getLogger(__name__)

STAGES = ("simulate", "sample", "reconstruct", "analyze")
QUANTITIES = ("rho11", "rho01_mag", "efficiency")

# Single-run standard deviations of reconstructed quantities at 1e5 samples,
# dim 6, from 10 seeds each at seed fractions 0, 0.24, 0.5 (max over states,
# rounded up). They scale as 1/sqrt(n_samples).
STAT_SIGMA_1E5 = {"rho11": 0.006, "rho01_mag": 0.004, "efficiency": 0.008}


@dataclass
class PipelineConfig:
    params: ModelParams = field(default_factory=ModelParams)
    seed_phase: float = 0.0
    model: str = "exact"
    with_coherence_factor: bool = True
    dim: int = 10
    n_samples: int = 100_000
    schedule: PhaseSchedule = field(default_factory=PhaseSchedule)
    recon_dim: int = 6
    max_iter: int = 2000
    tol: float = 1e-8
    dilution: float | None = None
    rate_grid: list | None = None  # kHz
    alpha_grid: list | None = None  # |alpha|
    curve_rate_grid: list = field(default_factory=lambda: [float(v) for v in np.linspace(0.0, 400.0, 41)])
    seed: int = 1
    output_dir: str = "run"
    stages: list = field(default_factory=lambda: list(STAGES))
    workers: int = 1

    def __post_init__(self):
        if self.rate_grid is None and self.alpha_grid is None:
            self.rate_grid = [0.0]
        if self.rate_grid is not None and self.alpha_grid is not None:
            raise ParameterError("give either rate_grid or alpha_grid, not both")
        grid = self.rate_grid if self.rate_grid is not None else self.alpha_grid
        if len(grid) == 0:
            raise ParameterError("the grid must not be empty")
        if not self.curve_rate_grid:
            raise ParameterError("curve_rate_grid must not be empty")
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise ParameterError(f"unknown stages {sorted(unknown)}")
        if "reconstruct" in self.stages and self.n_samples < 1000:
            raise ParameterError("n_samples must be >= 1000 when reconstructing")
        if self.model not in ("first-order", "exact"):
            raise ParameterError(f"unknown model {self.model!r}")

    # -- grid ---------------------------------------------------------------

    def grid_points(self) -> list[tuple[float, complex]]:
        """(added rate in kHz, seed amplitude) for every grid point."""
        points = []
        if self.rate_grid is not None:
            for rate in self.rate_grid:
                points.append((float(rate), alpha_from_added_rate(1e3 * float(rate), self.params, self.seed_phase)))
        else:
            for mag in self.alpha_grid:
                alpha = complex(float(mag) * np.exp(1j * self.seed_phase))
                rate = seed_to_count_rate(self.params.with_alpha(alpha)) / 1e3
                points.append((rate, alpha))
        return points

    # -- (de)serialization -------------------------------------------------

    def to_dict(self) -> dict:
        p = self.params
        return {
            "source": {
                "r": p.r,
                "eta_idler": p.eta_idler,
                "base_count_rate": p.base_count_rate,
                "seed_phase": self.seed_phase,
                "model": self.model,
                "dim": self.dim,
            },
            "channels": {
                "eta_signal": p.eta_signal,
                "coherence_factor": p.coherence_factor,
                "with_coherence_factor": self.with_coherence_factor,
            },
            "homodyne": {
                "n_samples": self.n_samples,
                "schedule": self.schedule.kind,
                "sweeps": self.schedule.sweeps,
                "phases": list(self.schedule.values),
            },
            "tomography": {
                "dim": self.recon_dim,
                "max_iter": self.max_iter,
                "tol": self.tol,
                "dilution": self.dilution,
            },
            "analysis": {
                "rate_grid": self.rate_grid,
                "alpha_grid": self.alpha_grid,
                "curve_rate_grid": list(self.curve_rate_grid),
            },
            "pipeline": {
                "seed": self.seed,
                "output_dir": self.output_dir,
                "stages": list(self.stages),
                "workers": self.workers,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict | None) -> "PipelineConfig":
        doc = doc or {}
        known = {"source", "channels", "homodyne", "tomography", "analysis", "pipeline"}
        unknown = set(doc) - known
        if unknown:
            raise ParameterError(f"unknown config sections {sorted(unknown)}")
        src = dict(doc.get("source") or {})
        ch = dict(doc.get("channels") or {})
        hd = dict(doc.get("homodyne") or {})
        tm = dict(doc.get("tomography") or {})
        an = dict(doc.get("analysis") or {})
        pl = dict(doc.get("pipeline") or {})
        base = ModelParams()
        params = ModelParams(
            r=src.pop("r", base.r),
            eta_idler=src.pop("eta_idler", base.eta_idler),
            base_count_rate=src.pop("base_count_rate", base.base_count_rate),
            eta_signal=ch.pop("eta_signal", base.eta_signal),
            coherence_factor=ch.pop("coherence_factor", base.coherence_factor),
        )
        schedule = PhaseSchedule(
            kind=hd.pop("schedule", "uniform-scan"),
            values=tuple(hd.pop("phases", None) or ()),
            sweeps=int(hd.pop("sweeps", 1)),
        )
        kwargs = dict(
            params=params,
            schedule=schedule,
            seed_phase=float(src.pop("seed_phase", 0.0)),
            model=src.pop("model", "exact"),
            dim=int(src.pop("dim", 10)),
            with_coherence_factor=bool(ch.pop("with_coherence_factor", True)),
            n_samples=int(hd.pop("n_samples", 100_000)),
            recon_dim=int(tm.pop("dim", 6)),
            max_iter=int(tm.pop("max_iter", 2000)),
            tol=float(tm.pop("tol", 1e-8)),
            dilution=tm.pop("dilution", None),
            rate_grid=an.pop("rate_grid", None),
            alpha_grid=an.pop("alpha_grid", None),
            seed=int(pl.pop("seed", 1)),
            output_dir=str(pl.pop("output_dir", "run")),
            stages=list(pl.pop("stages", STAGES)),
            workers=int(pl.pop("workers", 1)),
        )
        if "curve_rate_grid" in an:
            kwargs["curve_rate_grid"] = [float(v) for v in an.pop("curve_rate_grid")]
        leftovers = {**src, **ch, **hd, **tm, **an, **pl}
        if leftovers:
            raise ParameterError(f"unknown config keys {sorted(leftovers)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


# -- helpers ----------------------------------------------------------------


def point_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Per-grid-point seed, a stable function of (master seed, grid index)."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _summary(state: DensityMatrix, rate: float) -> dict:
    pt = curve_point(rate, state)
    return {"rho11": pt.rho11, "rho01_mag": pt.rho01_mag, "efficiency": pt.efficiency}


def _point_dir(out: Path, index: int) -> Path:
    return out / f"point_{index:03d}"


# -- stages -----------------------------------------------------------------


def _simulate(config: PipelineConfig, index: int, rate: float, alpha: complex, out: Path) -> None:
    params = config.params.with_alpha(alpha)
    state = model_signal_state(params, config.model, config.with_coherence_factor, config.dim)
    _write_json(
        _point_dir(out, index) / "state.json",
        {
            "added_rate_khz": rate,
            "alpha": [alpha.real, alpha.imag],
            "model": config.model,
            "with_coherence_factor": config.with_coherence_factor,
            "params": params.to_dict(),
            "rho": matrix_to_pairs(state.data),
        },
    )


def _load_state(point_dir: Path) -> DensityMatrix:
    path = point_dir / "state.json"
    if not path.exists():
        raise PipelineDependencyError(f"{path} is missing; run the simulate stage first")
    matrix = pairs_to_matrix(json.loads(path.read_text())["rho"])
    return DensityMatrix(matrix, matrix.shape[0])


def _sample(config: PipelineConfig, index: int, out: Path) -> None:
    point_dir = _point_dir(out, index)
    state = _load_state(point_dir)
    ss = point_seed(config.seed, index)
    record = sample_quadratures(state, config.schedule, config.n_samples, ss)
    write_quadrature_csv(
        point_dir / "quadratures.csv",
        record,
        {"seed": config.seed, "spawn_key": [index], "n": config.n_samples, "schedule": asdict(config.schedule)},
    )


def _reconstruct(config: PipelineConfig, index: int, out: Path) -> None:
    point_dir = _point_dir(out, index)
    csv_path = point_dir / "quadratures.csv"
    if not csv_path.exists():
        raise PipelineDependencyError(f"{csv_path} is missing; run the sample stage first")
    record = read_quadrature_csv(csv_path)
    report = maxlik_reconstruct(record, config.recon_dim, config.max_iter, config.tol, config.dilution)
    report.write_json(point_dir / "report.json")


def _run_point(args) -> None:
    config, index, rate, alpha, out = args
    _point_dir(out, index).mkdir(parents=True, exist_ok=True)
    if "simulate" in config.stages:
        _simulate(config, index, rate, alpha, out)
    if "sample" in config.stages:
        _sample(config, index, out)
    if "reconstruct" in config.stages:
        _reconstruct(config, index, out)


def _analyze(config: PipelineConfig, points: list, out: Path) -> None:
    curves = out / "curves"
    curves.mkdir(parents=True, exist_ok=True)
    grid = config.curve_rate_grid
    write_curve_csv(curves / "curve_first_order.csv", theory_curves(config.params, grid, "first-order", False, config.dim, config.seed_phase))
    write_curve_csv(curves / "curve_exact.csv", theory_curves(config.params, grid, "exact", False, config.dim, config.seed_phase))
    write_curve_csv(curves / "curve_exact_cf.csv", theory_curves(config.params, grid, "exact", True, config.dim, config.seed_phase))
    measured = []
    for index, (rate, _alpha) in enumerate(points):
        report_path = _point_dir(out, index) / "report.json"
        if report_path.exists():
            measured.append(curve_point(rate, ReconstructionReport.read_json(report_path).rho))
    if measured:
        write_curve_csv(out / "points.csv", measured)


# -- entry points -----------------------------------------------------------


def run_pipeline(config: PipelineConfig) -> dict:
    """Run the enabled stages and write ``manifest.json``; returns the manifest."""
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    points = config.grid_points()
    point_stages = [s for s in config.stages if s != "analyze"]
    if point_stages:
        jobs = [(config, i, rate, alpha, out) for i, (rate, alpha) in enumerate(points)]
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                list(pool.map(_run_point, jobs))
        else:
            for job in jobs:
                _run_point(job)
    if "analyze" in config.stages:
        _analyze(config, points, out)
    manifest = build_manifest(config, points, out)
    _write_json(out / "manifest.json", manifest)
    return manifest


def build_manifest(config: PipelineConfig, points: list, out: Path) -> dict:
    entries = []
    for index, (rate, alpha) in enumerate(points):
        point_dir = _point_dir(out, index)
        ss = point_seed(config.seed, index)
        entry = {
            "index": index,
            "added_rate_khz": rate,
            "alpha": [alpha.real, alpha.imag],
            "seed": {"entropy": config.seed, "spawn_key": [index], "derived": int(ss.generate_state(1)[0])},
            "files": {},
        }
        for name in ("state.json", "quadratures.csv", "quadratures.meta.json", "report.json"):
            path = point_dir / name
            if path.exists():
                entry["files"][str(path.relative_to(out))] = sha256(path)
        if (point_dir / "state.json").exists():
            entry["model"] = _summary(_load_state(point_dir), rate)
        if (point_dir / "report.json").exists():
            report = ReconstructionReport.read_json(point_dir / "report.json")
            entry["reconstructed"] = _summary(report.rho, rate)
            entry["reconstruction"] = {"iterations": report.iterations_run, "converged": report.converged}
        entries.append(entry)
    shared = {}
    for rel in ("curves/curve_first_order.csv", "curves/curve_exact.csv", "curves/curve_exact_cf.csv", "points.csv"):
        if (out / rel).exists():
            shared[rel] = sha256(out / rel)
    return {
        "config": config.to_dict(),
        "versions": {
            "heraldsim": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "stages_run": list(config.stages),
        "points": entries,
        "files": shared,
    }


def run_curves(config: PipelineConfig) -> dict:
    """Model curves only: the analyze stage with no sampling."""
    return run_pipeline(replace(config, stages=["analyze"]))


# -- comparison -------------------------------------------------------------


@dataclass
class ComparisonRow:
    index: int
    added_rate_khz: float
    source: str
    a: dict
    b: dict
    delta: dict
    band: dict
    within: bool
    rho01_ratio: float | None


@dataclass
class ComparisonReport:
    rows: list
    passed: bool
    stochastic: bool
    notes: list = field(default_factory=list)

    def format(self) -> str:
        lines = []
        header = f"{'idx':>3} {'rate_kHz':>9} {'src':>5} " + " ".join(f"{'d_' + q:>14}" for q in QUANTITIES)
        lines.append(header + f" {'|r01| b/a':>10} status")
        for row in self.rows:
            deltas = " ".join(f"{row.delta[q]:>14.3e}" for q in QUANTITIES)
            ratio = "n/a" if row.rho01_ratio is None else f"{row.rho01_ratio:.6f}"
            lines.append(
                f"{row.index:>3} {row.added_rate_khz:>9.3f} {row.source[:5]:>5} {deltas} {ratio:>10} "
                f"{'ok' if row.within else 'DIFF'}"
            )
        lines.extend(self.notes)
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def _same_except_seed(a: dict, b: dict) -> bool:
    ca = json.loads(json.dumps(a["config"]))
    cb = json.loads(json.dumps(b["config"]))
    for c in (ca, cb):
        c["pipeline"].pop("seed", None)
        c["pipeline"].pop("output_dir", None)
        c["pipeline"].pop("workers", None)
    return ca == cb


def compare_runs(manifest_a, manifest_b, tol: float | None = None, sigmas: float = 3.0) -> ComparisonReport:
    """Tabulate per-point differences of rho_11, |rho_01| and efficiency.

    With ``tol`` given, every |difference| must be <= tol. Otherwise runs whose
    configs differ only in the seed are compared against a ``sigmas``-sigma band
    for the difference of two independent reconstructions; all other pairs must
    agree to 1e-12.
    """
    a = json.loads(Path(manifest_a).read_text())
    b = json.loads(Path(manifest_b).read_text())
    pa, pb = a["points"], b["points"]
    rates_a = [p["added_rate_khz"] for p in pa]
    rates_b = [p["added_rate_khz"] for p in pb]
    if len(pa) != len(pb) or not np.allclose(rates_a, rates_b, rtol=0, atol=1e-9):
        raise StructuralDiffError(f"grids differ: {rates_a} vs {rates_b}")

    same_seed = a["config"]["pipeline"]["seed"] == b["config"]["pipeline"]["seed"]
    stochastic = tol is None and not same_seed and _same_except_seed(a, b)
    n = a["config"]["homodyne"]["n_samples"]
    notes = []
    rows = []
    for ea, eb in zip(pa, pb):
        source = "reconstructed" if "reconstructed" in ea and "reconstructed" in eb else "model"
        if source not in ea or source not in eb:
            raise StructuralDiffError(f"point {ea['index']} has no comparable values")
        va, vb = ea[source], eb[source]
        delta = {q: vb[q] - va[q] for q in QUANTITIES}
        if tol is not None:
            band = {q: tol for q in QUANTITIES}
        elif stochastic and source == "reconstructed":
            scale = np.sqrt(1e5 / n) * np.sqrt(2.0) * sigmas
            band = {q: STAT_SIGMA_1E5[q] * scale for q in QUANTITIES}
        else:
            band = {q: 1e-12 for q in QUANTITIES}
        within = all(abs(delta[q]) <= band[q] for q in QUANTITIES)
        ratio = vb["rho01_mag"] / va["rho01_mag"] if va["rho01_mag"] > 0 else None
        rows.append(ComparisonRow(ea["index"], ea["added_rate_khz"], source, va, vb, delta, band, within, ratio))
    if stochastic:
        notes.append(f"runs differ only in seed: stochastic deltas judged against a {sigmas:g}-sigma band")
    passed = all(r.within for r in rows)
    return ComparisonReport(rows, passed, stochastic, notes)
