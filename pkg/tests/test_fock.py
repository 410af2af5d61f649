import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heraldsim.errors import InvalidDimensionError, TruncationOverflowError
from heraldsim.fock import (
    DensityMatrix,
    FockVector,
    annihilation,
    coherent_state,
    fidelity,
    partial_trace,
    random_density,
    tensor,
)

from conftest import brute_partial_trace


class TestAnnihilation:
    def test_dim2(self):
        np.testing.assert_array_equal(annihilation(2).elements, [[0, 1], [0, 0]])

    def test_dim3_entry(self):
        a = annihilation(3).elements
        assert a[1, 2] == pytest.approx(1.41421356, abs=1e-8)
        assert np.count_nonzero(a) == 2

    def test_vacuum_is_annihilated(self):
        out = annihilation(5) @ FockVector.number(0, 5)
        assert np.all(out.amplitudes == 0)

    @pytest.mark.parametrize("dim", [1, 0, -3])
    def test_invalid_dim(self, dim):
        with pytest.raises(InvalidDimensionError):
            annihilation(dim)

    @pytest.mark.parametrize("dim", [4, 6, 10])
    def test_commutator_away_from_edge(self, dim):
        a = annihilation(dim)
        comm = (a @ a.adjoint()).elements - (a.adjoint() @ a).elements
        k = dim - 2
        np.testing.assert_allclose(comm[:k, :k], np.eye(k), atol=1e-12)

    def test_action_on_number_states(self):
        a = annihilation(6)
        for n in range(1, 6):
            out = a @ FockVector.number(n, 6)
            assert out[n - 1] == pytest.approx(np.sqrt(n), abs=1e-14)


class TestCoherentState:
    def test_zero_is_vacuum(self):
        np.testing.assert_array_equal(coherent_state(0, 5).amplitudes, [1, 0, 0, 0, 0])

    def test_ratio(self):
        c = coherent_state(0.1, 10).amplitudes
        assert (c[0] / c[1]).real == pytest.approx(10.0, rel=1e-12)

    def test_mean_photon_number_at_qubit_point(self):
        alpha = 0.56 * 0.22
        c = coherent_state(alpha, 10).amplitudes
        mean_n = float(np.sum(np.arange(10) * np.abs(c) ** 2))
        # (0.56 * 0.22)^2 = 0.01517824
        assert mean_n == pytest.approx(0.01517824, abs=1e-6)

    def test_unit_norm(self):
        assert coherent_state(0.3 + 0.4j, 10).norm == pytest.approx(1.0, abs=1e-12)

    def test_overflow(self):
        with pytest.raises(TruncationOverflowError):
            coherent_state(2.0, 5)


class TestTensorAndPartialTrace:
    def test_vacuum_pair(self):
        v = tensor(FockVector.number(0, 4), FockVector.number(0, 4))
        assert v[0, 0] == 1 and v.amplitudes[0] == 1

    def test_idler_major_ordering(self):
        v = tensor(FockVector.number(1, 4), FockVector.number(0, 4))
        assert v[1, 0] == 1
        assert v.amplitudes[1 * 4 + 0] == 1

    def test_mixed_kinds_rejected(self):
        with pytest.raises(TypeError):
            tensor(FockVector.number(0, 3), DensityMatrix.number(0, 3))

    def test_mismatched_dims_rejected(self):
        with pytest.raises(InvalidDimensionError):
            tensor(FockVector.number(0, 3), FockVector.number(0, 4))

    def test_vacuum_trace(self):
        rho = tensor(DensityMatrix.number(0, 3), DensityMatrix.number(0, 3))
        np.testing.assert_array_equal(partial_trace(rho, "signal").data, DensityMatrix.number(0, 3).data)

    def test_bell_like(self):
        d = 4
        amps = np.zeros(d * d)
        amps[0] = amps[1 * d + 1] = 1 / np.sqrt(2)
        rho = FockVector(amps, d, modes=2).to_density()
        expected = np.diag([0.5, 0.5, 0, 0])
        np.testing.assert_allclose(partial_trace(rho, "signal").data, expected, atol=1e-15)
        np.testing.assert_allclose(partial_trace(rho, "idler").data, expected, atol=1e-15)

    def test_bad_mode(self):
        rho = tensor(DensityMatrix.number(0, 3), DensityMatrix.number(0, 3))
        with pytest.raises(ValueError):
            partial_trace(rho, "pump")

    @pytest.mark.parametrize("keep", ["idler", "signal"])
    def test_matches_brute_force(self, rng, keep):
        d = 5
        g = rng.normal(size=(d * d, d * d)) + 1j * rng.normal(size=(d * d, d * d))
        data = g @ g.conj().T
        data /= np.trace(data)
        rho = DensityMatrix(data, d, modes=2)
        out = partial_trace(rho, keep)
        np.testing.assert_allclose(out.data, brute_partial_trace(data, d, keep), atol=1e-13)
        assert out.trace == pytest.approx(rho.trace, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(dim=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
    def test_product_round_trip(self, dim, seed):
        rng = np.random.default_rng(seed)
        a = random_density(dim, rng=rng)
        b = random_density(dim, rng=rng)
        joint = tensor(a, b)
        np.testing.assert_allclose(partial_trace(joint, "idler").data, a.data, atol=1e-12)
        np.testing.assert_allclose(partial_trace(joint, "signal").data, b.data, atol=1e-12)
        joint.validate()


class TestFidelity:
    def test_self(self, rng):
        rho = random_density(6, rng=rng)
        assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal(self):
        assert fidelity(DensityMatrix.number(0, 3), DensityMatrix.number(1, 3)) == pytest.approx(0.0, abs=1e-12)

    def test_pure_vs_diagonal(self):
        mixed = DensityMatrix.from_diagonal([0.5, 0.5], 3)
        assert fidelity(DensityMatrix.number(0, 3), mixed) == pytest.approx(0.5, abs=1e-12)

    def test_pure_sigma_reduces_to_overlap(self, rng):
        rho = random_density(5, rng=rng)
        psi = FockVector(rng.normal(size=5) + 1j * rng.normal(size=5), 5).normalize()
        expected = float(np.real(psi.amplitudes.conj() @ rho.data @ psi.amplitudes))
        assert fidelity(rho, psi.to_density()) == pytest.approx(expected, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            fidelity(DensityMatrix.number(0, 3), DensityMatrix.number(0, 4))


class TestDensityMatrix:
    def test_immutable(self):
        rho = DensityMatrix.number(1, 3)
        with pytest.raises(ValueError):
            rho.data[0, 0] = 1

    def test_validate_rejects_negative(self):
        with pytest.raises(Exception):
            DensityMatrix(np.diag([1.2, -0.2]), 2).validate()

    def test_random_states_are_valid(self, rng):
        for _ in range(20):
            random_density(8, rng=rng).validate()
