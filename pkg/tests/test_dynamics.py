import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

import oracles
from cqed_transfer import dynamics, qstate
from cqed_transfer.dynamics import EffectiveGateParams, FullModelParams
from cqed_transfer.errors import StepSizeError, ValidationError
from cqed_transfer.qstate import DensityMatrix, StateVector, atom, cavity

SWAP = np.eye(4)[[0, 2, 1, 3]]


class TestEffectiveGate:
    def test_generator_matches_explicit_construction(self):
        np.testing.assert_allclose(dynamics.effective_hamiltonian_matrix(), oracles.dispersive_generator())

    @given(st.floats(-20, 20, allow_nan=False))
    @settings(max_examples=60, deadline=None)
    def test_unitary_matches_expm(self, theta):
        np.testing.assert_allclose(dynamics.effective_unitary(theta), oracles.gate(theta), atol=1e-12)

    def test_transfer_angle_is_phased_swap(self):
        np.testing.assert_allclose(dynamics.effective_unitary(math.pi / 2),
                                   SWAP @ np.diag([1, -1, -1, -1]), atol=1e-15)

    def test_transfer_maps_payload_onto_carrier(self):
        alpha, beta = 0.6, 0.8j
        inp = np.kron([alpha, beta], [0, 1])
        out = dynamics.effective_unitary(math.pi / 2) @ inp
        np.testing.assert_allclose(out, -np.kron([0, 1], [alpha, beta]), atol=1e-15)

    @given(st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=30, deadline=None)
    def test_composition(self, a, b):
        U = dynamics.effective_unitary
        np.testing.assert_allclose(U(a) @ U(b), U(a + b), atol=1e-12)

    def test_params_object(self):
        p = EffectiveGateParams.from_physical(g=2.0, delta=40.0, t=math.pi / 2 * 10)
        assert p.theta == pytest.approx(math.pi / 2)
        np.testing.assert_allclose(dynamics.effective_unitary(p), dynamics.effective_unitary(math.pi / 2))
        with pytest.raises(ValidationError):
            EffectiveGateParams(float("nan"))


class TestFullModelParams:
    def test_for_gate_sets_time(self):
        p = FullModelParams.for_gate(1.0, 20.0)
        assert p.t == pytest.approx(10 * math.pi)
        assert p.theta == pytest.approx(math.pi / 2)
        assert p.coupling == pytest.approx(0.05)

    @pytest.mark.parametrize("kw", [dict(g=0), dict(delta=0), dict(kappa=-1), dict(fock_cutoff=0),
                                    dict(fock_cutoff=2.5), dict(t=-1)])
    def test_rejects_bad_values(self, kw):
        base = dict(g=1.0, delta=20.0, t=1.0)
        with pytest.raises(ValidationError):
            FullModelParams(**{**base, **kw})

    def test_warns_outside_dispersive_regime(self, caplog):
        with caplog.at_level(logging.WARNING):
            p = FullModelParams.for_gate(1.0, 5.0)
        assert p.dispersive_warning
        assert "dispersive" in caplog.text

    def test_replace(self):
        p = FullModelParams.for_gate(1.0, 20.0)
        assert p.replace(kappa=0.1).kappa == 0.1
        assert p.replace(kappa=0.1).t == p.t


class TestTavisCummings:
    @pytest.fixture
    def p(self):
        return FullModelParams.for_gate(1.0, 20.0, fock_cutoff=4)

    def test_hermitian_and_dimension(self, p):
        H = dynamics.tavis_cummings_hamiltonian(p)
        assert H.shape == (20, 20)
        np.testing.assert_allclose(H, H.conj().T)

    def test_conserves_excitations(self, p):
        H = dynamics.tavis_cummings_hamiltonian(p)
        N = dynamics.excitation_operator(p.fock_cutoff)
        np.testing.assert_allclose(H @ N - N @ H, 0, atol=1e-12)

    def test_frames_differ_by_excitation_number(self, p):
        Hc = dynamics.tavis_cummings_hamiltonian(p, "cavity")
        Ha = dynamics.tavis_cummings_hamiltonian(p, "atom")
        np.testing.assert_allclose(Hc - Ha, p.delta * dynamics.excitation_operator(p.fock_cutoff), atol=1e-12)
        with pytest.raises(ValidationError):
            dynamics.tavis_cummings_hamiltonian(p, "lab")

    def test_explicit_matrix_elements(self, p):
        # |atom1 atom2 n>: coupling <0,1,1|H|1,1,0> = g, <0,0,2|H|0,1,1> = g*sqrt(2)
        H = dynamics.tavis_cummings_hamiltonian(p)
        nc = p.fock_cutoff + 1

        def idx(a, b, n):
            return (2 * a + b) * nc + n

        assert H[idx(0, 1, 1), idx(1, 1, 0)] == pytest.approx(p.g)
        assert H[idx(0, 0, 2), idx(0, 1, 1)] == pytest.approx(p.g * math.sqrt(2))
        assert H[idx(1, 1, 0), idx(1, 1, 0)] == pytest.approx(2 * p.delta)

    def test_dispersive_limit_approaches_gate(self):
        errs = []
        for ratio in (20, 80):
            p = FullModelParams.for_gate(1.0, float(ratio), fock_cutoff=3)
            U = dynamics.propagator(dynamics.tavis_cummings_hamiltonian(p, "atom"), p.t)
            block = U.reshape(4, 4, 4, 4)[:, 0, :, 0]  # vacuum in, vacuum out
            errs.append(np.max(np.abs(block - dynamics.effective_unitary(math.pi / 2))))
        assert errs[1] < errs[0] < 0.1


class TestExactEvolution:
    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_propagator_matches_expm(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        H = A + A.conj().T
        np.testing.assert_allclose(dynamics.propagator(H, 0.7), expm(-0.7j * H), atol=1e-11)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValidationError, match="Hermitian"):
            dynamics.propagator(np.array([[0, 1], [0, 0]]), 1.0)

    def test_evolve_exact(self):
        s = StateVector.basis([atom("a")], [0])
        H = np.array([[0, 1], [1, 0]], dtype=complex)
        out = dynamics.evolve_exact(H, math.pi / 2, s)
        np.testing.assert_allclose(out.amplitudes, [0, -1j], atol=1e-14)
        with pytest.raises(ValidationError):
            dynamics.evolve_exact(np.eye(4), 1.0, s)


class TestLindblad:
    @pytest.mark.parametrize("picture", ["interaction", "schrodinger"])
    @pytest.mark.parametrize("kappa", [0.3, 1.0])
    def test_photon_decays_exponentially(self, picture, kappa):
        N, t = 3, 2.0
        a = dynamics.annihilation(N)
        H = 1.3 * a.conj().T @ a
        rho = StateVector.basis([cavity("c", N)], [1]).to_density()
        out = dynamics.lindblad_evolve(H, [math.sqrt(kappa) * a], t, 400, rho, picture)
        n_mean = out.expectation(a.conj().T @ a).real
        assert n_mean == pytest.approx(math.exp(-kappa * t), abs=1e-9)
        assert out.matrix[0, 0].real == pytest.approx(1 - math.exp(-kappa * t), abs=1e-9)

    def test_coherence_decays_at_half_rate(self):
        # |0>+|1> photon superposition: off-diagonal decays as exp(-kappa t / 2) in the rotating frame
        kappa, t, w = 0.8, 1.5, 2.0
        a = dynamics.annihilation(1)
        H = w * a.conj().T @ a
        psi = StateVector([cavity("c", 1)], np.array([1, 1]) / math.sqrt(2))
        out = dynamics.lindblad_evolve(H, [math.sqrt(kappa) * a], t, 200, psi.to_density())
        expected = 0.5 * math.exp(-kappa * t / 2) * np.exp(1j * w * t)
        assert out.matrix[0, 1] == pytest.approx(expected, abs=1e-9)

    def test_zero_decay_equals_unitary(self):
        p = FullModelParams.for_gate(1.0, 20.0, fock_cutoff=3)
        H = dynamics.tavis_cummings_hamiltonian(p, "cavity")
        labels = [atom("1"), atom("2"), cavity("c", 3)]
        s = StateVector.basis(labels, [0, 1, 0])
        closed = dynamics.evolve_exact(H, p.t, s)
        out = dynamics.lindblad_evolve(H, [], p.t, 10, s.to_density())
        assert qstate.state_fidelity(out, closed) == pytest.approx(1.0, abs=1e-12)

    def test_pictures_agree(self):
        p = FullModelParams(g=1.0, delta=3.0, t=2.0, kappa=0.2, fock_cutoff=2)
        H = dynamics.tavis_cummings_hamiltonian(p, "atom")
        a = np.kron(np.eye(4), dynamics.annihilation(2))
        rho = StateVector.basis([atom("1"), atom("2"), cavity("c", 2)], [1, 0, 0]).to_density()
        r1 = dynamics.lindblad_evolve(H, [math.sqrt(p.kappa) * a], p.t, 2000, rho, "interaction")
        r2 = dynamics.lindblad_evolve(H, [math.sqrt(p.kappa) * a], p.t, 2000, rho, "schrodinger")
        np.testing.assert_allclose(r1.matrix, r2.matrix, atol=1e-8)

    def test_batched_propagation_matches_single(self):
        a = dynamics.annihilation(2)
        H = a.conj().T @ a + 0.3 * (a + a.conj().T)
        rng = np.random.default_rng(0)
        rhos = []
        for _ in range(3):
            v = oracles.random_state(3, rng)
            rhos.append(np.outer(v, v.conj()))
        batch = dynamics.lindblad_propagate(H, [0.5 * a], 1.0, 100, np.array(rhos))
        for r, out in zip(rhos, batch):
            single = dynamics.lindblad_propagate(H, [0.5 * a], 1.0, 100, r)
            np.testing.assert_allclose(out, single, atol=1e-14)

    def test_unstable_step_raises(self):
        H = np.diag([0.0, 400.0]).astype(complex)
        L = np.array([[0, 1], [0, 0]], dtype=complex)
        rho = DensityMatrix([atom("a")], np.full((2, 2), 0.5, dtype=complex))
        with pytest.raises(StepSizeError, match="increase the step count"):
            dynamics.lindblad_evolve(H, [L], 10.0, 2, rho, picture="schrodinger")

    def test_argument_validation(self):
        rho = StateVector.basis([atom("a")], [0]).to_density()
        with pytest.raises(ValidationError):
            dynamics.lindblad_evolve(np.eye(2), [], 1.0, 0, rho)
        with pytest.raises(ValidationError):
            dynamics.lindblad_evolve(np.eye(2), [np.eye(3)], 1.0, 10, rho)
        with pytest.raises(ValidationError):
            dynamics.lindblad_evolve(np.eye(2), [], 1.0, 10, rho, picture="heisenberg")
