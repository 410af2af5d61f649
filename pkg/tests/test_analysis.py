import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from heraldsim.analysis import (
    CurvePoint,
    fit_model,
    generalized_efficiency,
    model_signal_state,
    read_curve_csv,
    theory_curves,
    wigner,
    wigner_origin,
    write_curve_csv,
)
from heraldsim.channels import apply_loss
from heraldsim.errors import InvalidStateError, ParameterError
from heraldsim.fock import DensityMatrix, FockVector, random_density
from heraldsim.homodyne import quadrature_pdf
from heraldsim.source import ModelParams, added_rate_for_seed_fraction

from conftest import random_qubit_state

PARAMS = ModelParams()


def qubit(a, b, dim=6):
    amps = np.zeros(dim, dtype=complex)
    amps[:2] = a, b
    return FockVector(amps, dim).normalize().to_density()


def quadrature_marginal_oracle(rho, x):
    """Integral of W over p should equal the theta = 0 quadrature pdf."""
    p_axis = np.linspace(-9, 9, 1801)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # a single x row is all boundary
        grid = wigner(rho, np.array([x]), p_axis)
    return np.trapezoid(grid.values[0], p_axis)


class TestWigner:
    def test_vacuum_origin(self):
        assert wigner(DensityMatrix.number(0, 6)).at(0, 0) == pytest.approx(1 / np.pi, abs=1e-6)

    def test_single_photon_origin(self):
        assert wigner(DensityMatrix.number(1, 6)).at(0, 0) == pytest.approx(-1 / np.pi, abs=1e-6)

    def test_vacuum_is_gaussian(self):
        axis = np.linspace(-2, 2, 9)
        with pytest.warns(UserWarning):
            grid = wigner(DensityMatrix.number(0, 4), axis, axis)
        X, P = np.meshgrid(axis, axis, indexing="ij")
        np.testing.assert_allclose(grid.values, np.exp(-X**2 - P**2) / np.pi, atol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_normalized_on_default_grid(self, seed):
        rho = random_density(6, rng=seed, support=2)
        grid = wigner(rho)
        assert grid.integral() == pytest.approx(1.0, abs=1e-3)
        assert not grid.boundary_warning

    def test_origin_closed_form(self, rng):
        rho = random_density(6, rng=rng, support=3)
        assert wigner(rho).at(0, 0) == pytest.approx(wigner_origin(rho), abs=1e-12)

    @pytest.mark.parametrize("x", [-1.3, 0.0, 0.7])
    def test_marginal_matches_quadrature_pdf(self, rng, x):
        rho = random_density(5, rng=rng)
        assert quadrature_marginal_oracle(rho, x) == pytest.approx(quadrature_pdf(rho, 0.0, x), abs=1e-8)

    def test_coherent_qubit_peak_moves_along_plus_x(self):
        x_peak, p_peak = wigner(qubit(np.sqrt(0.7), np.sqrt(0.3))).peak()
        assert x_peak > 0.2
        assert abs(p_peak) < 1e-9

    def test_boundary_flag(self):
        with pytest.warns(UserWarning):
            grid = wigner(DensityMatrix.number(0, 4), np.linspace(-1, 1, 11), np.linspace(-1, 1, 11))
        assert grid.boundary_warning

    def test_rejects_unnormalized(self):
        with pytest.raises(InvalidStateError):
            wigner(DensityMatrix(np.diag([0.5, 0.1]), 2))

    def test_origin_sign_follows_rho11(self):
        state = model_signal_state(PARAMS, "exact", with_coherence_factor=False)
        rho11 = state[1, 1].real
        w0 = wigner_origin(state)
        assert (w0 < 0) == (rho11 > 0.5)
        assert w0 > 0 and rho11 == pytest.approx(0.49, abs=0.01)
        assert wigner_origin(apply_loss(DensityMatrix.number(1, 6), 0.47)) > 0
        assert wigner_origin(apply_loss(DensityMatrix.number(1, 6), 0.53)) < 0

    def test_csv_and_json(self, tmp_path):
        axis = np.linspace(-1, 1, 3)
        with pytest.warns(UserWarning):
            grid = wigner(DensityMatrix.number(0, 4), axis, axis)
        lines = grid.write_csv(tmp_path / "w.csv").read_text().splitlines()
        assert lines[0] == "x,p,W" and len(lines) == 10
        x, p, w = map(float, lines[3].split(","))
        assert (x, p) == (-1.0, 1.0) and w == pytest.approx(np.exp(-2) / np.pi)
        assert grid.write_json(tmp_path / "w.json").exists()


class TestEfficiency:
    def test_mixed_example(self):
        assert generalized_efficiency(DensityMatrix.from_diagonal([0.53, 0.47], 4)) == pytest.approx(0.47)

    @pytest.mark.parametrize("a,b", [(0.6, 0.8), (1, 1j), (0.1, 0.99)])
    def test_pure_qubit_is_one(self, a, b):
        assert generalized_efficiency(qubit(a, b)) == pytest.approx(1.0, abs=1e-12)

    def test_vacuum_is_zero(self):
        assert generalized_efficiency(DensityMatrix.number(0, 3)) == 0.0

    def test_unphysical_block(self):
        with pytest.raises(InvalidStateError):
            generalized_efficiency(np.array([[0.1, 0.6], [0.6, 0.3]]))

    def test_seeded_experimental_point(self):
        params = PARAMS
        rate = added_rate_for_seed_fraction(0.24, params.base_count_rate) / 1e3
        point = theory_curves(params, [rate], with_coherence_factor=True)[0]
        assert point.efficiency == pytest.approx(0.46, abs=0.05)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_bounded_by_one(self, seed):
        rho = random_density(5, rng=seed)
        assert generalized_efficiency(rho) <= 1.0 + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.0))
    def test_loss_covariance(self, seed, T):
        rho = random_qubit_state(np.random.default_rng(seed))
        assert generalized_efficiency(apply_loss(rho, T)) == pytest.approx(
            T * generalized_efficiency(rho), abs=1e-9
        )


class TestTheoryCurves:
    def test_exact_unseeded(self):
        point = theory_curves(PARAMS, [0.0], "exact")[0]
        assert point.rho11 == pytest.approx(0.47, abs=0.03)
        assert point.rho01_mag == 0.0

    def test_first_order_unseeded(self):
        assert theory_curves(PARAMS, [0.0], "first-order")[0].rho11 == pytest.approx(0.49, abs=1e-12)

    @pytest.mark.parametrize("model", ["exact", "first-order"])
    def test_coherence_factor_ratio(self, model):
        rates = [25.0, 100.0, 300.0]
        bare = theory_curves(PARAMS, rates, model, with_coherence_factor=False)
        damped = theory_curves(PARAMS, rates, model, with_coherence_factor=True)
        for b, d in zip(bare, damped):
            assert d.rho01_mag / b.rho01_mag == pytest.approx(0.81, abs=1e-12)
            assert d.rho11 == b.rho11

    def test_coherence_grows_with_seed(self):
        pts = theory_curves(PARAMS, np.linspace(0, 400, 9))
        rho11 = [p.rho11 for p in pts]
        assert all(np.diff(rho11) < 0)
        assert pts[0].rho01_mag == 0 and pts[4].rho01_mag > 0.2

    def test_points_in_unit_range(self):
        for p in theory_curves(PARAMS, np.linspace(0, 400, 9), with_coherence_factor=True):
            assert 0 <= p.rho11 <= 1 and 0 <= p.rho01_mag <= 1 and 0 <= p.efficiency <= 1

    def test_negative_rate(self):
        with pytest.raises(ParameterError):
            theory_curves(PARAMS, [-1.0])

    def test_unknown_model(self):
        with pytest.raises(ParameterError):
            theory_curves(PARAMS, [0.0], model="third-order")

    @staticmethod
    def _small_parameter_gap(s):
        gaps = []
        for eta in (0.1, 0.49, 1.0):
            params = ModelParams(r=s, eta_signal=eta)
            for a in np.linspace(0, s, 6):
                q = params.with_alpha(a)
                gaps.append(abs(model_signal_state(q, "exact", False)[1, 1] - model_signal_state(q, "first-order", False)[1, 1]))
        return max(gaps)

    @pytest.mark.xfail(strict=True, reason="the idler two-photon click makes the gap O(r^2 + |alpha|^2), not quartic")
    def test_exact_approaches_first_order_quartic(self):
        s = 0.05
        assert self._small_parameter_gap(s) < 10 * (2 * s * s) ** 2

    @pytest.mark.parametrize("s", [0.05, 0.02, 0.005])
    def test_exact_approaches_first_order(self, s):
        assert self._small_parameter_gap(s) <= 2 * s * s

    def test_csv_round_trip(self, tmp_path):
        pts = theory_curves(PARAMS, [0.0, 50.0, 123.4], with_coherence_factor=True)
        path = write_curve_csv(tmp_path / "c.csv", pts)
        assert path.read_text().splitlines()[0] == "added_rate_khz,rho11,rho01_mag,efficiency"
        assert read_curve_csv(path) == pts


@pytest.fixture(scope="module")
def synthetic_curve():
    return theory_curves(PARAMS, np.linspace(0, 400, 9), with_coherence_factor=True)


class TestFit:
    def test_recovers_r(self, synthetic_curve):
        result = fit_model(synthetic_curve, ["r"], ModelParams(r=1.3 * PARAMS.r))
        assert result.params.r == pytest.approx(PARAMS.r, rel=0.02)

    def test_recovers_coherence_factor(self, synthetic_curve):
        result = fit_model(synthetic_curve, ["coherence_factor"], ModelParams(coherence_factor=1.0))
        assert result.params.coherence_factor == pytest.approx(0.81, abs=0.02)

    def test_joint_fit(self, synthetic_curve):
        init = ModelParams(r=0.2, eta_signal=0.55, coherence_factor=0.9)
        result = fit_model(synthetic_curve, ["r", "eta_signal", "coherence_factor"], init, max_evals=600)
        assert result.params.eta_signal == pytest.approx(0.49, abs=0.02)
        assert result.params.coherence_factor == pytest.approx(0.81, abs=0.02)

    def test_zero_residual(self, synthetic_curve):
        result = fit_model(synthetic_curve, ["r"], PARAMS)
        assert result.residual < 1e-12

    def test_objective_monotone(self, synthetic_curve):
        trace = fit_model(synthetic_curve, ["r", "coherence_factor"], ModelParams(r=0.3, coherence_factor=0.6)).objective_trace
        assert len(trace) > 1
        assert all(np.diff(trace) <= 0)

    def test_budget_exhaustion_returns_best(self, synthetic_curve):
        result = fit_model(synthetic_curve, ["r"], ModelParams(r=0.3), max_evals=5)
        assert not result.converged
        assert result.residual <= fit_model(synthetic_curve, ["r"], ModelParams(r=0.3), max_evals=1).residual

    @pytest.mark.parametrize(
        "data_len,free", [(3, ["r"]), (9, []), (9, ["alpha"])]
    )
    def test_rejects_bad_requests(self, synthetic_curve, data_len, free):
        with pytest.raises(ParameterError):
            fit_model(synthetic_curve[:data_len], free, PARAMS)


def test_curve_point_fields():
    assert CurvePoint(1.0, 0.5, 0.1, 0.51).added_rate == 1.0
