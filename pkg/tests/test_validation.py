import csv
import io
import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

import oracles
from cqed_transfer import dynamics, validation
from cqed_transfer.dynamics import FullModelParams
from cqed_transfer.errors import CutoffError, ValidationError
from cqed_transfer.validation import SweepSpec


def reference_single_gate_infidelity(p, payloads):
    """Cavity-traced fidelity from scipy's expm of the atom-frame Hamiltonian."""
    nc = p.fock_cutoff + 1
    U = expm(-1j * p.t * dynamics.tavis_cummings_hamiltonian(p, "atom"))
    G = oracles.gate(math.pi / 2)
    out = []
    for pl in payloads:
        psi0 = np.kron(np.kron(pl.coefficients, [0, 1]), np.eye(nc)[0])
        psi = (U @ psi0).reshape(4, nc)
        rho = psi @ psi.conj().T
        target = G @ np.kron(pl.coefficients, [0, 1])
        out.append(1 - np.vdot(target, rho @ target).real)
    return float(np.mean(out))


@pytest.fixture(scope="module")
def payloads():
    return validation.payload_set(6, seed=1)


class TestClosed:
    @pytest.mark.parametrize("ratio", [10, 25])
    def test_matches_expm_reference(self, ratio, payloads):
        p = validation.default_params(ratio)
        got = validation.compare_closed(p, "single_gate", payloads).mean_infidelity
        assert got == pytest.approx(reference_single_gate_infidelity(p, payloads), abs=1e-12)

    def test_phase_error_shrinks(self, payloads):
        errs = [validation.compare_closed(validation.default_params(r), "single_gate", payloads).phase_error
                for r in (10, 40)]
        assert errs[1] < errs[0]

    def test_requires_transfer_angle(self, payloads):
        p = FullModelParams(g=1.0, delta=20.0, t=1.0)
        with pytest.raises(ValidationError, match="pi/2"):
            validation.compare_closed(p, "single_gate", payloads)

    def test_transfer_single_error_accumulates(self, payloads):
        p = validation.default_params(20)
        one = validation.compare_closed(p, "single_gate", payloads).mean_infidelity
        two = validation.compare_closed(p, "transfer_single", payloads).mean_infidelity
        assert one < two < 4 * one

    def test_cutoff_check(self, payloads):
        p = validation.default_params(20)
        assert validation.check_cutoff(p, "single_gate", payloads) < 1e-9
        with pytest.raises(CutoffError):
            validation.check_cutoff(p.replace(fock_cutoff=1), "single_gate", payloads)

    def test_gate_infidelity_helper(self):
        val = validation.gate_infidelity_full_vs_effective(validation.default_params(20))
        assert 0 < val < 1e-3


class TestOpen:
    def test_channel_is_trace_preserving_and_positive(self):
        p = validation.default_params(20, kappa=0.1)
        phi = validation.passage_channel(p, steps=1000)
        # trace preservation: sum_i phi[i, i, k, l] = delta_kl
        np.testing.assert_allclose(np.einsum("iikl->kl", phi), np.eye(4), atol=1e-10)
        choi = phi.transpose(0, 2, 1, 3).reshape(16, 16)
        assert np.linalg.eigvalsh(0.5 * (choi + choi.conj().T)).min() > -1e-10

    def test_zero_decay_matches_closed(self, payloads):
        p = validation.default_params(20)
        for proto in ("single_gate", "transfer_single"):
            closed = validation.compare_closed(p, proto, payloads)
            open_ = validation.compare_open(p, proto, payloads, steps=50)
            np.testing.assert_allclose(open_.infidelities, closed.infidelities, atol=1e-12)
            assert math.isnan(open_.phase_error)

    def test_decay_increases_infidelity(self, payloads):
        p = validation.default_params(20)
        lo = validation.compare_open(p.replace(kappa=0.02), "single_gate", payloads, steps=800).mean_infidelity
        hi = validation.compare_open(p.replace(kappa=0.08), "single_gate", payloads, steps=800).mean_infidelity
        assert validation.compare_closed(p, "single_gate", payloads).mean_infidelity < lo < hi

    def test_step_count_converged(self, payloads):
        p = validation.default_params(20, kappa=0.05)
        a = validation.compare_open(p, "single_gate", payloads, steps=1000).mean_infidelity
        b = validation.compare_open(p, "single_gate", payloads, steps=2000).mean_infidelity
        assert a == pytest.approx(b, abs=1e-9)


class TestSweeps:
    def test_spec_validation(self):
        with pytest.raises(ValidationError, match="ascending"):
            SweepSpec("detuning_ratio", (20, 10))
        with pytest.raises(ValidationError):
            SweepSpec("detuning_ratio", ())
        with pytest.raises(ValueError):
            SweepSpec("temperature", (1,))

    def test_typed_entry_points(self):
        spec = SweepSpec("fock_cutoff", (3, 5))
        with pytest.raises(ValidationError):
            validation.detuning_sweep(spec)
        with pytest.raises(ValidationError):
            validation.decay_sweep(spec)
        rows = validation.cutoff_sweep(spec, jobs=1)
        assert rows[0].mean_infidelity == pytest.approx(rows[1].mean_infidelity, abs=1e-12)

    def test_cutoff_values_must_be_integers(self):
        with pytest.raises(ValidationError):
            validation.cutoff_sweep(SweepSpec("fock_cutoff", (2.5,)), jobs=1)

    def test_parallel_preserves_order(self):
        spec = SweepSpec("detuning_ratio", (10, 15, 30), payloads=3)
        serial = validation.run_sweep(spec, jobs=1)
        parallel = validation.run_sweep(spec, jobs=2)
        assert [r.parameter_value for r in parallel] == [10, 15, 30]
        assert [r.mean_infidelity for r in parallel] == [r.mean_infidelity for r in serial]

    def test_csv_and_json(self):
        spec = SweepSpec("detuning_ratio", (10, 20), payloads=2)
        rows = validation.run_sweep(spec, jobs=1)
        text = validation.rows_to_csv(spec, rows)
        table = list(csv.reader(io.StringIO(text)))
        assert tuple(table[0]) == validation.CSV_HEADER
        assert len(table) == 3
        assert table[1][0] == "detuning_ratio" and table[1][1] == "10"
        assert float(table[1][2]) == pytest.approx(rows[0].mean_infidelity, rel=1e-11)
        doc = json.loads(validation.dumps_json(validation.rows_to_json(spec, rows)))
        assert doc["parameter"] == "detuning_ratio"
        assert [r["value"] for r in doc["rows"]] == [10, 20]

    def test_open_rows_write_null_phase(self):
        spec = SweepSpec("kappa_over_g", (0.05,), payloads=2, steps=500)
        rows = validation.run_sweep(spec, jobs=1)
        doc = validation.rows_to_json(spec, rows)
        assert doc["rows"][0]["phase_error"] is None
        assert "nan" in validation.rows_to_csv(spec, rows)
