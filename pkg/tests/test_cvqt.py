import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obpm_lab.cvqt import (
    bell_kernel,
    bell_projection,
    build_cvqt_initial,
    fidelity_sweep,
    gamma_of,
    outcome_density,
    phase_sensitivity,
    sample_fidelities,
    teleport,
    transfer_kernel,
    weighted_mean,
)
from obpm_lab.fock import PureState, coherent_state, displacement_op, fock_state


def random_input(rng, dim=6):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return PureState(v).normalized()


class TestInitialState:
    def test_members_are_three_mode(self):
        ens = build_cvqt_initial(fock_state(1, 3), 0.5, k=16)
        m = ens.member(2)
        assert m.n_modes == 3
        assert m.dims[0] == 4
        assert m.norm() == pytest.approx(1.0, abs=1e-10)

    def test_rejects_ideal_resource(self):
        with pytest.raises(ValueError, match="1 - eps"):
            build_cvqt_initial(fock_state(0, 1), 1.0)

    def test_rejects_multimode_input(self):
        with pytest.raises(ValueError):
            build_cvqt_initial(fock_state(0, 1).kron(fock_state(0, 1)), 0.5)


class TestBellKernel:
    @pytest.mark.parametrize("seed", range(4))
    def test_matches_contraction(self, seed):
        rng = np.random.default_rng(seed)
        eta = rng.uniform(0.1, 0.7)
        x1, x2 = rng.uniform(-2, 2, size=2)
        ini = build_cvqt_initial(random_input(rng), eta, k=16, tmsv_cutoff=20, tail_tol=None)
        a = bell_projection(ini, x1, x2)
        b = bell_projection(ini, x1, x2, method="beamsplitter")
        assert a.density == pytest.approx(b.density, rel=1e-10)
        for u, v in zip(a.states, b.states):
            assert np.allclose(u, v, rtol=1e-10, atol=1e-14)

    def test_unknown_method(self):
        ini = build_cvqt_initial(fock_state(0, 1), 0.3, k=16)
        with pytest.raises(ValueError):
            bell_projection(ini, 0.0, 0.0, method="nope")

    def test_displacement_link(self):
        eta, gamma, phi = 0.6, 0.8 - 1.1j, 0.9
        big = 100
        k = bell_kernel(gamma, eta, phi, 11, big + 1).matrix
        d = displacement_op(eta * gamma * np.exp(1j * phi), big).matrix[:11]
        t = transfer_kernel(gamma, eta, phi, 10).matrix
        assert np.allclose(d @ k, t, atol=1e-12)

    def test_transfer_kernel_is_upper_triangular(self):
        t = transfer_kernel(1.0 + 0.5j, 0.5, 0.3, 8).matrix
        assert np.allclose(np.tril(t, -1), 0.0)


class TestOutcomeDensity:
    def test_vacuum_is_gaussian(self):
        eta, x1, x2 = 0.5, 0.7, -1.2
        var = 1 / (1 - eta**2)
        ref = math.exp(-(x1**2 + x2**2) / (2 * var)) / (2 * math.pi * var)
        psi = fock_state(0, 3).amps
        assert outcome_density(psi, eta, x1, x2, k=16) == pytest.approx(ref, rel=1e-12)

    def test_normalized_for_coherent_input(self):
        psi = coherent_state(1.0, 0.4).amps
        eta = 0.5
        # Gauss-Hermite in each coordinate with the vacuum-width scaling
        nodes, weights = np.polynomial.hermite_e.hermegauss(60)
        scale = 2.0
        total = 0.0
        for a, wa in zip(nodes, weights):
            for b, wb in zip(nodes, weights):
                x1, x2 = scale * a, scale * b
                jac = wa * wb * scale**2 * math.exp(0.5 * (a * a + b * b))
                total += jac * outcome_density(psi, eta, x1, x2, k=16)
        assert total == pytest.approx(1.0, abs=1e-8)


class TestTeleport:
    @pytest.mark.parametrize("eta", [0.0, 0.4, 0.9])
    def test_coherent_shared_fidelity(self, eta):
        alpha = 1.3
        out = teleport(coherent_state(alpha, 0.2), eta, (0.4, -0.8), k=16)
        assert out.fidelity == pytest.approx(math.exp(-((1 - eta) * alpha) ** 2), rel=1e-10)

    def test_shared_output_is_scaled_coherent(self):
        eta = 0.7
        out = teleport(coherent_state(1.0, 0.0), eta, (1.0, 1.0), k=16)
        member = out.output.member(3)
        ref = coherent_state(eta, 0.0, member.dims[0] - 1, tail_tol=None)
        assert abs(member.inner(ref)) == pytest.approx(1.0, abs=1e-10)

    def test_unshared_ensemble_matches_fidelity(self):
        psi = coherent_state(1.0, 0.0)
        out = teleport(psi, 0.8, (0.5, 0.3), share_phase=False, k=16, k_b=16)
        fid = 0.0
        for i in range(len(out.output)):
            m = out.output.member(i)
            ref = psi.pad(m.dims)
            fid += out.output.weights[i] * abs(ref.inner(m)) ** 2
        assert fid == pytest.approx(out.fidelity, rel=1e-9)

    def test_vacuum_teleports_exactly(self):
        assert teleport(fock_state(0), 0.9, (0.0, 0.0), k=16).fidelity == pytest.approx(1.0, abs=1e-12)

    def test_single_photon_near_ideal_resource(self):
        arr = sample_fidelities(fock_state(1), [0.99], 40, seed=1, k=16, k_b=16)
        assert weighted_mean(arr[:, 0, 0], arr[:, 0, 1])[0] > 0.9

    def test_sharing_matters(self):
        psi = coherent_state(1.0, 0.0)
        shared = teleport(psi, 0.9, (0.5, 0.5), share_phase=True, k=16).fidelity
        unshared = teleport(psi, 0.9, (0.5, 0.5), share_phase=False, k=16, k_b=16).fidelity
        assert shared - unshared > 0.1

    def test_vacuum_is_phase_insensitive(self):
        assert phase_sensitivity(fock_state(0, 3), 0.7, 1 + 1j, 0.0, 1.0) == pytest.approx(0.0, abs=1e-14)

    def test_coherent_output_ignores_pump_phase(self):
        # matched correction turns |alpha> into |eta alpha> for every pump phase
        assert phase_sensitivity(coherent_state(1.0, 0.0), 0.7, 1 + 1j, 0.0, 1.0) < 1e-12

    def test_superposition_is_phase_sensitive(self):
        psi = PureState(np.array([1.0, 1.0])).normalized()
        assert phase_sensitivity(psi, 0.7, 1 + 1j, 0.0, 1.0) > 1e-3

    def test_gamma_convention(self):
        assert gamma_of(1.0, 2.0) == pytest.approx((1 + 2j) / math.sqrt(2))


class TestSweep:
    def test_eta_zero_matches_vacuum_overlap(self):
        psi = coherent_state(0.8, 0.0)
        arr = sample_fidelities(psi, [0.0], 8, seed=3, k=16, k_b=16)
        for col in (1, 2):
            mean, se = weighted_mean(arr[:, 0, 0], arr[:, 0, col])
            assert mean == pytest.approx(math.exp(-0.64), abs=2 * se + 1e-12)

    def test_workers_do_not_change_samples(self):
        psi = fock_state(1, 2)
        a = sample_fidelities(psi, [0.3, 0.6], 6, seed=11, k=16, k_b=16, workers=1)
        b = sample_fidelities(psi, [0.3, 0.6], 6, seed=11, k=16, k_b=16, workers=3)
        assert np.array_equal(a, b)

    def test_table_columns(self):
        tab = fidelity_sweep(fock_state(0, 1), [0.0, 0.5], samples=4, k=16, k_b=16)
        assert tab.columns == ["eta", "mean_fidelity", "std_err", "shared_flag", "samples", "seed"]
        assert np.allclose(tab["mean_fidelity"], 1.0)

    def test_empty_etas(self):
        with pytest.raises(ValueError):
            fidelity_sweep(fock_state(0, 1), [])


class TestProperties:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.0, 0.95), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 2 * np.pi))
    def test_transfer_times_kernel_identity(self, eta, x1, x2, phi):
        gamma = gamma_of(x1, x2)
        t = transfer_kernel(gamma, eta, phi, 6).matrix
        k = bell_kernel(gamma, eta, phi, 7, 141).matrix
        d = displacement_op(eta * gamma * np.exp(1j * phi), 140).matrix[:7]
        assert np.allclose(d @ k, t, atol=1e-11)
