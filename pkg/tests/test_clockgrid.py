import numpy as np
import pytest

import clockhist as ch
from clockhist.clockgrid import apply_omega

from helpers import random_state


class TestMakeGrid:
    def test_unit_spacing(self):
        g = ch.make_grid(8, 0, 8)
        assert g.dt == 1.0
        assert np.array_equal(g.times, np.arange(8.0))

    def test_symmetric_window(self):
        g = ch.make_grid(8, -4, 4)
        assert g.times[0] == -4.0
        assert abs((g.omegas[1] - g.omegas[0]) - np.pi / 4) <= 1e-15
        assert g.omegas[0] == -4 * (np.pi / 4)

    @pytest.mark.parametrize("n", [7, 6, 4, 0, 12])
    def test_non_power_of_two_rejected(self, n):
        with pytest.raises(ValueError):
            ch.make_grid(n, 0, 1)

    def test_bad_window(self):
        with pytest.raises(ValueError):
            ch.make_grid(8, 1.0, 1.0)

    def test_nearest_index_snapping(self):
        g = ch.make_grid(8, 0, 8)
        assert g.nearest_index(3.2) == 3
        assert g.nearest_index(7.9) == 7
        with pytest.raises(ValueError):
            g.nearest_index(9.0)


class TestTimeOperator:
    def test_diagonal_values(self):
        t_op = ch.time_operator(ch.make_grid(8, 0, 8))
        assert np.array_equal(np.diag(t_op.matrix).real, np.arange(8.0))
        assert t_op.is_hermitian

    def test_basis_vectors_are_eigenvectors(self):
        g = ch.make_grid(8, -4, 4)
        t_op = ch.time_operator(g)
        for k in (0, 3, 7):
            e = np.zeros(8)
            e[k] = 1.0
            assert np.array_equal(t_op.matrix @ e, g.times[k] * e)

    def test_trace_closed_form(self):
        g = ch.make_grid(16, -3, 5)
        expected = g.n * (g.t_min + (g.n - 1) * g.dt / 2)
        assert abs(np.trace(ch.time_operator(g).matrix).real - expected) <= 1e-10


class TestOmegaOperator:
    def test_flat_vector_is_null_eigenvector(self):
        g = ch.make_grid(16, 0, 4)
        om = ch.omega_operator(g)
        flat = np.full(16, 1 / 4.0)
        assert np.max(np.abs(om.matrix @ flat)) <= 1e-12

    def test_dft_eigenrelation(self):
        g = ch.make_grid(8, -1, 3)
        om = ch.omega_operator(g)
        for j in range(-4, 4):
            col = ch.frequency_vector(g, j).amplitudes
            dev = np.max(np.abs(om.matrix @ col - g.omega_value(j) * col))
            assert dev <= 1e-10

    def test_eigenvalue_multiset_exact(self):
        g = ch.make_grid(8, 0, 8)
        evals = np.sort(np.linalg.eigvalsh(ch.omega_operator(g).matrix))
        assert np.max(np.abs(evals - np.sort(g.omegas))) <= 1e-10

    def test_hermitian(self):
        assert ch.omega_operator(ch.make_grid(32, -5, 5)).hermiticity_defect <= 1e-10

    def test_fft_application_matches_dense(self):
        rng = np.random.default_rng(2)
        g = ch.make_grid(32, -2, 6)
        v = random_state(rng, 32)
        dense = ch.omega_operator(g).matrix @ v
        fast = apply_omega(g, v)
        assert np.max(np.abs(dense - fast)) <= 1e-12


class TestGaussianEnvelope:
    def test_large_n_approaches_flat(self):
        g = ch.make_grid(64, -4, 4)
        with pytest.warns(ch.TruncationWarning):
            env = ch.gaussian_envelope(g, 1e6)
        mags = np.abs(env.weights)
        assert mags.min() / mags.max() > 1 - 1e-4

    def test_second_moment(self):
        g = ch.make_grid(256, -8, 8)
        env = ch.gaussian_envelope(g, 1.0)
        second = float(np.sum(np.abs(env.weights) ** 2 * g.times**2))
        assert abs(second - 0.25) <= 0.01 * 0.25

    def test_window_missing_origin_warns(self):
        g = ch.make_grid(16, 2, 6)
        with pytest.warns(ch.TruncationWarning):
            ch.gaussian_envelope(g, 1.0)

    def test_degenerate_envelope_raises(self):
        g = ch.make_grid(8, 1e6, 2e6)
        with pytest.warns(ch.TruncationWarning):
            with pytest.raises(ch.GuardError):
                ch.gaussian_envelope(g, 1.0)

    def test_normalized_after_construction(self):
        g = ch.make_grid(128, -8, 8)
        for env in (ch.flat_envelope(g), ch.gaussian_envelope(g, 2.0)):
            assert abs(np.linalg.norm(env.weights) - 1.0) <= 1e-12

    def test_bad_width(self):
        with pytest.raises(ValueError):
            ch.gaussian_envelope(ch.make_grid(8, -1, 1), -2.0)


class TestFrequencyVector:
    def test_zero_frequency_is_flat(self):
        v = ch.frequency_vector(ch.make_grid(16, 0, 2), 0)
        assert np.max(np.abs(v.amplitudes - 0.25)) <= 1e-15

    def test_orthonormal_columns(self):
        g = ch.make_grid(8, -3, 1)
        cols = np.column_stack(
            [ch.frequency_vector(g, j).amplitudes for j in range(-4, 4)]
        )
        assert np.max(np.abs(cols.conj().T @ cols - np.eye(8))) <= 1e-12

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            ch.frequency_vector(ch.make_grid(8, 0, 1), 4)

    def test_gaussian_overlap_matches_fourier_transform(self):
        # <omega_j|phi> should sample the continuum transform of the envelope:
        # phi ~ exp(-t^2/n)  ->  phi_hat(w) ~ exp(-w^2 n/4), with the lattice
        # measure sqrt(dt) on one side and normalization on both.
        g = ch.make_grid(256, -8, 8)
        n = 1.0
        env = ch.gaussian_envelope(g, n)
        overlaps = np.array(
            [
                np.vdot(ch.frequency_vector(g, j).amplitudes, env.weights)
                for j in range(-g.n // 2, g.n // 2)
            ]
        )
        target = np.exp(-g.omegas**2 * n / 4.0)
        target = target / np.linalg.norm(target)
        assert np.max(np.abs(np.abs(overlaps) - target)) <= 1e-3


class TestCommutator:
    def test_floor_small_at_reference_resolution(self):
        g = ch.make_grid(256, -16, 16)
        assert ch.commutator_floor(g, 0.2) <= 0.01

    def test_floor_halves_or_better_when_n_doubles(self):
        vals = [
            ch.commutator_floor(ch.make_grid(n, -16, 16), 0.2)
            for n in (128, 256, 512)
        ]
        assert vals[0] <= 0.1  # coarse but bounded
        assert vals[1] <= vals[0] / 2
        assert vals[2] <= vals[1] / 2


class TestEnvelopeType:
    def test_flat_detection(self):
        g = ch.make_grid(16, 0, 2)
        assert ch.flat_envelope(g).is_flat
        assert not ch.gaussian_envelope(ch.make_grid(16, -4, 4), 1.0).is_flat

    def test_norm_validation(self):
        g = ch.make_grid(8, 0, 1)
        with pytest.raises(ValueError, match="norm"):
            ch.Envelope(g, np.ones(8, dtype=complex))


class TestCommensurateGrid:
    def test_window_span(self):
        g = ch.commensurate_grid(64, np.pi / 2, periods=4)
        assert abs((g.t_max - g.t_min) - 4 * 2 * np.pi / (np.pi / 2)) <= 1e-12

    def test_energy_on_lattice(self):
        e = 0.77
        g = ch.commensurate_grid(128, e, periods=3)
        j = round(e * (g.n * g.dt) / (2 * np.pi))
        assert abs(g.omega_value(j) - e) <= 1e-12

    def test_bad_args(self):
        with pytest.raises(ValueError):
            ch.commensurate_grid(64, 0.0)
        with pytest.raises(ValueError):
            ch.commensurate_grid(64, 1.0, periods=0)
