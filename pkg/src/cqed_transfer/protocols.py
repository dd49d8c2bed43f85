"""Bell preparation, probabilistic teleportation, and deterministic transfer.

Atom names follow the figures they model: ``"1", "2", "3"`` for the
single-qubit schemes, ``a_i``/``b_i`` for multi-qubit payloads. Carrier
atoms start excited and every transfer gate runs at ``theta = pi/2``.
"""

from __future__ import annotations

import math

import numpy as np

from . import network, qstate
from .dynamics import BELL_THETA, TRANSFER_THETA, effective_unitary
from .errors import CapacityError, ValidationError
from .payload import Payload, ProtocolResult, TeleportResult
from .qstate import StateVector, atom

MAX_TRANSFER_QUBITS = 8
PHASE_FLIP = np.diag([1.0, -1.0]).astype(complex)


def _require(payload: Payload, n_qubits: int) -> None:
    if not isinstance(payload, Payload):
        raise ValidationError(f"expected a Payload, got {type(payload).__name__}")
    if payload.n_qubits != n_qubits:
        raise ValidationError(f"expected a {n_qubits}-qubit payload, got {payload.n_qubits} qubits")


def prepare_bell(theta: float = BELL_THETA) -> StateVector:
    """Entangle atoms 2 and 3 from ``|1>_2 |0>_3`` in one cavity passage.

    At ``theta = pi/4`` the result is ``exp(-i pi/4)/sqrt(2) (|10> - i|01>)``.
    """
    start = StateVector.basis([atom("2"), atom("3")], [1, 0])
    return qstate.apply_local_unitary(start, ["2", "3"], effective_unitary(theta))


# correction applied to atom 3 for each (atom1, atom2) outcome; None = failure
_TELEPORT_CORRECTIONS = {
    (0, 0): None,
    (0, 1): "phase_flip",
    (1, 0): "identity",
    (1, 1): None,
}


def ye_guo_teleport(payload: Payload) -> TeleportResult:
    """Teleportation baseline: two pi/4 passages plus a two-atom measurement.

    Cavity C1 entangles atoms 2 and 3, cavity C2 couples the payload atom 1
    to atom 2, then atoms 1 and 2 are measured. Outcome ``(1, 0)`` leaves the
    payload on atom 3; ``(0, 1)`` leaves it up to a ``diag(1, -1)`` phase
    flip; ``(0, 0)`` and ``(1, 1)`` fail.
    """
    _require(payload, 1)
    state = qstate.tensor(payload.as_state(["1"]), StateVector.basis([atom("2"), atom("3")], [1, 0]))
    state = qstate.apply_local_unitary(state, ["2", "3"], effective_unitary(BELL_THETA))
    state = qstate.apply_local_unitary(state, ["1", "2"], effective_unitary(BELL_THETA))

    target = payload.as_state(["3"])
    outcomes, raw, corrected, corrections = {}, {}, {}, {}
    for rec in qstate.measure_subsystems(state, ["1", "2"]):
        key = rec.values
        outcomes[key] = rec
        kind = _TELEPORT_CORRECTIONS[key]
        corrections[key] = kind or "failure"
        if rec.post_state is None:
            raw[key] = corrected[key] = None
            continue
        raw[key] = qstate.state_fidelity(qstate.reduced_state(rec.post_state, ["3"]), target)
        if kind is None:
            corrected[key] = None
            continue
        fixed = rec.post_state
        if kind == "phase_flip":
            fixed = qstate.apply_local_unitary(fixed, ["3"], PHASE_FLIP)
        corrected[key] = qstate.state_fidelity(qstate.reduced_state(fixed, ["3"]), target)
    success = sum(outcomes[k].probability for k, kind in _TELEPORT_CORRECTIONS.items() if kind)
    return TeleportResult(outcomes, success, corrected, raw, corrections)


def transfer_single(payload: Payload) -> ProtocolResult:
    """Move a one-qubit payload from atom 1 to atom 3 through two cavities.

    Atoms 2 and 3 start in ``|1>``. After C1 the register is
    ``-|1>_1 (payload)_2 |1>_3``; after C2 it is ``|1>_1 |1>_2 (payload)_3``.
    """
    _require(payload, 1)
    gate = effective_unitary(TRANSFER_THETA)
    state = qstate.tensor(payload.as_state(["1"]), StateVector.basis([atom("2"), atom("3")], [1, 1]))
    history = []
    for pair in (("1", "2"), ("2", "3")):
        state = qstate.apply_local_unitary(state, pair, gate)
        history.append(state)
    schedule = network.build_chain(1, 2)
    ideal = network.ideal_final_state(schedule, payload)
    return network.summarize(state, payload, ("3",), ideal, schedule, history)


def transfer_two_qubit(payload: Payload) -> ProtocolResult:
    """Swap a two-qubit payload from ``(a1, a2)`` onto ``(b1, b2)``.

    Cavities C11 and C21 act on ``(a1, b1)`` and ``(a2, b2)``; together they
    form a SWAP of the two-atom pairs with overall phase ``+1``.
    """
    _require(payload, 2)
    return _parallel_swap(payload, 2)


def transfer_n_qubit(payload: Payload, n: int | None = None) -> ProtocolResult:
    """Swap an n-qubit payload from ``a1..an`` onto excited carriers ``b1..bn``.

    ``n`` parallel pi/2 gates on ``(a_i, b_i)``; the final register is
    ``(-1)**n |1...1>_a (payload)_b``.
    """
    if n is None:
        n = payload.n_qubits
    if not 1 <= n <= MAX_TRANSFER_QUBITS:
        raise CapacityError(f"n must be between 1 and {MAX_TRANSFER_QUBITS}, got {n}")
    _require(payload, n)
    return _parallel_swap(payload, n)


def _parallel_swap(payload: Payload, n: int) -> ProtocolResult:
    if n == 1:
        src, dst = ["1"], ["2"]
    else:
        src = [f"a{i + 1}" for i in range(n)]
        dst = [f"b{i + 1}" for i in range(n)]
    state = qstate.tensor(payload.as_state(src), StateVector.basis([atom(d) for d in dst], [1] * n))
    gate = effective_unitary(TRANSFER_THETA)
    history = []
    # disjoint pairs commute; run in index order
    for a, b in zip(src, dst):
        state = qstate.apply_local_unitary(state, (a, b), gate)
        history.append(state)
    schedule = network.build_chain(n, 1, max_atoms=2 * MAX_TRANSFER_QUBITS)
    ideal = network.ideal_final_state(schedule, payload)
    return network.summarize(state, payload, tuple(dst), ideal, schedule, history)


def multi_hop_transfer(payload: Payload, hops: int, max_atoms: int = network.MAX_ATOMS) -> ProtocolResult:
    """Chain the transfer ``hops`` times through fresh excited carriers."""
    schedule = network.build_chain(payload.n_qubits, hops, max_atoms=max_atoms)
    return network.execute(schedule, payload, max_atoms=max_atoms)


def expected_phase(n_qubits: int, hops: int = 1) -> complex:
    """Global phase of a transfer chain: each pi/2 gate on an excited carrier gives -1."""
    return complex((-1) ** (n_qubits * hops))


def phase_deviation(phases) -> float:
    """Largest pairwise angular distance between unit phases."""
    angles = np.array([math.atan2(p.imag, p.real) for p in phases])
    diff = np.abs(angles[:, None] - angles[None, :])
    return float(np.max(np.minimum(diff, 2 * math.pi - diff), initial=0.0))
