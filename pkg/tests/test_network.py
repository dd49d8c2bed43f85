import json
import math

import numpy as np
import pytest

import oracles
from cqed_transfer import network, protocols
from cqed_transfer.errors import CapacityError, ScheduleError, ValidationError
from cqed_transfer.network import GateEvent, GateSchedule, RegisterEntry
from cqed_transfer.payload import Payload


def codes(schedule):
    return {d.code for d in network.validate_schedule(schedule)}


def rand_payload(n, seed=0):
    return Payload.random(n, np.random.default_rng(seed))


class TestBuildChain:
    def test_single_qubit_names(self):
        s = network.build_chain(1, 2)
        assert s.names == ("1", "2", "3")
        assert [e.cavity_id for e in s.events] == ["C1", "C2"]
        assert s.expected_destination == ("3",)
        assert [e.init for e in s.register] == [None, 1, 1]

    def test_multi_qubit_names(self):
        s = network.build_chain(2, 2)
        assert s.names == ("a1", "a2", "b1", "b2", "c1", "c2")
        assert [e.cavity_id for e in s.events] == ["C11", "C21", "C12", "C22"]
        assert s.n_slots == 2
        assert [len(sl) for sl in s.slots()] == [2, 2]

    def test_limits(self):
        with pytest.raises(CapacityError):
            network.build_chain(4, 3)
        with pytest.raises(ValidationError):
            network.build_chain(1, 0)
        assert network.build_chain(4, 3, max_atoms=16).n_slots == 3

    def test_builds_are_valid(self):
        for n, hops in [(1, 1), (1, 4), (2, 3), (3, 1)]:
            assert network.validate_schedule(network.build_chain(n, hops)) == []


class TestValidation:
    @pytest.fixture
    def chain(self):
        return network.build_chain(1, 2)

    def _with(self, chain, **kw):
        fields = dict(register=chain.register, payload_slot=chain.payload_slot,
                      events=chain.events, expected_destination=chain.expected_destination)
        fields.update(kw)
        return GateSchedule(**fields)

    def test_unknown_atom(self, chain):
        bad = self._with(chain, events=chain.events + (GateEvent("C3", ("3", "9"), math.pi / 2, 2),))
        assert "unknown-label" in codes(bad)

    def test_slot_conflict(self, chain):
        ev = (GateEvent("C1", ("1", "2")), GateEvent("C2", ("2", "3")))
        assert "slot-conflict" in codes(self._with(chain, events=ev))

    def test_slot_gap(self, chain):
        ev = (GateEvent("C1", ("1", "2"), time_slot=0), GateEvent("C2", ("2", "3"), time_slot=2))
        assert "slot-gap" in codes(self._with(chain, events=ev))

    def test_unreachable_destination(self, chain):
        ev = (GateEvent("C1", ("2", "3")), GateEvent("C2", ("1", "2"), time_slot=1))
        assert "unreachable" in codes(self._with(chain, events=ev))

    def test_register_problems(self, chain):
        reg = (RegisterEntry("1", 2, None), RegisterEntry("2", 3, 1), RegisterEntry("3", 2, 5))
        assert {"bad-dim", "bad-init"} <= codes(self._with(chain, register=reg))
        reg = (RegisterEntry("1", 2, 0),) + chain.register[1:]
        assert "payload-init" in codes(self._with(chain, register=reg))
        reg = chain.register + (RegisterEntry("2"),)
        assert "duplicate-label" in codes(self._with(chain, register=reg))

    def test_bad_pair_and_theta(self, chain):
        ev = (GateEvent("C1", ("1", "1")), GateEvent("C2", ("2", "3"), float("nan"), 1))
        assert {"bad-pair", "bad-theta"} <= codes(self._with(chain, events=ev))

    def test_destination_size(self, chain):
        assert "destination-size" in codes(self._with(chain, expected_destination=("2", "3")))

    def test_non_transfer_angle_is_warning(self, chain):
        ev = (GateEvent("C1", ("1", "2"), 1.0), chain.events[1])
        diags = network.validate_schedule(self._with(chain, events=ev))
        assert [d.level for d in diags] == ["warning"]
        res = network.execute(self._with(chain, events=ev), rand_payload(1))
        assert res.global_phase is None and res.payload_fidelity < 1

    def test_execute_refuses_invalid(self, chain):
        ev = (GateEvent("C1", ("1", "2")), GateEvent("C2", ("2", "3")))
        with pytest.raises(ScheduleError, match="slot"):
            network.execute(self._with(chain, events=ev), rand_payload(1))
        with pytest.raises(ValidationError):
            network.execute(chain, rand_payload(2))


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        s = network.build_chain(2, 2)
        path = tmp_path / "s.json"
        network.save_schedule(s, path)
        back = network.load_schedule(path)
        assert back == s

    def test_json_keys(self):
        doc = json.loads(network.build_chain(1, 1).to_json())
        assert set(doc) == {"register", "payload_slot", "events", "destination"}
        assert set(doc["events"][0]) == {"cavity", "atoms", "theta", "slot"}

    @pytest.mark.parametrize("text,msg", [
        ("{", "not valid JSON"),
        ('{"register": [], "payload_slot": [], "events": []}', "missing"),
        ('{"register": [], "payload_slot": [], "events": [], "destination": [], "x": 1}', "unknown"),
        ('{"register": [{}], "payload_slot": [], "events": [], "destination": []}', "malformed"),
    ])
    def test_rejects_bad_documents(self, text, msg):
        with pytest.raises(ScheduleError, match=msg):
            GateSchedule.from_json(text)


class TestExecution:
    def test_matches_brute_force(self):
        p = rand_payload(2, 7)
        res = network.execute(network.build_chain(2, 2), p)
        amps = np.kron(p.coefficients, oracles.ket("1111"))
        U = oracles.gate(math.pi / 2)
        for i, j in [(0, 2), (1, 3), (2, 4), (3, 5)]:
            amps = oracles.apply_two_site(amps, 6, i, j, U)
        np.testing.assert_allclose(res.final_state.amplitudes, amps, atol=1e-12)
        assert res.global_phase == pytest.approx(1.0)

    def test_history_per_slot(self):
        res = network.execute(network.build_chain(1, 3), rand_payload(1))
        assert len(res.history) == 3

    def test_ground_carriers_break_transfer(self):
        s = network.build_chain(1, 1)
        s = GateSchedule((s.register[0], RegisterEntry("2", 2, 0)), s.payload_slot, s.events,
                         s.expected_destination)
        res = network.execute(s, Payload.from_coefficients([0.6, 0.8]))
        assert res.payload_fidelity < 1 - 1e-3

    def test_hand_written_schedule_file(self, tmp_path):
        # two payload qubits relayed through one intermediate column, written by hand
        doc = {
            "register": [{"name": "x", "dim": 2, "init": None}, {"name": "y", "dim": 2, "init": 1},
                         {"name": "z", "dim": 2, "init": 1}],
            "payload_slot": ["x"],
            "events": [{"cavity": "A", "atoms": ["y", "x"], "theta": math.pi / 2, "slot": 0},
                       {"cavity": "B", "atoms": ["z", "y"], "theta": math.pi / 2, "slot": 1}],
            "destination": ["z"],
        }
        path = tmp_path / "hand.json"
        path.write_text(json.dumps(doc))
        res = network.execute(network.load_schedule(path), rand_payload(1, 3))
        assert res.payload_fidelity == pytest.approx(1.0, abs=1e-12)
        assert res.global_phase == pytest.approx(protocols.expected_phase(1, 2))
