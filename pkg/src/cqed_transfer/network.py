"""Declarative gate schedules for transfer networks and their executor.

A schedule lists the atoms of a register with their initial basis states,
which atoms hold the payload, and a sequence of pairwise cavity passages
grouped into time slots. JSON form::

    {"register": [{"name": "1", "dim": 2, "init": null}, ...],
     "payload_slot": ["1"],
     "events": [{"cavity": "C1", "atoms": ["1", "2"], "theta": 1.5707963, "slot": 0}, ...],
     "destination": ["3"]}

``init`` is ``null`` for payload atoms and a basis index otherwise.
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import qstate
from .dynamics import TRANSFER_THETA, effective_unitary
from .errors import CapacityError, ScheduleError, ValidationError
from .payload import Payload, ProtocolResult
from .qstate import PROPORTIONAL_TOL, StateVector, atom

MAX_ATOMS = 12
CARRIER_INIT = 1
ANGLE_TOL = 1e-12


@dataclass(frozen=True)
class RegisterEntry:
    name: str
    dim: int = 2
    init: int | None = CARRIER_INIT


@dataclass(frozen=True)
class GateEvent:
    """Two atoms passing through one cavity together for gate angle ``theta``."""

    cavity_id: str
    atoms: tuple[str, str]
    theta: float = TRANSFER_THETA
    time_slot: int = 0

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))


@dataclass(frozen=True)
class GateSchedule:
    register: tuple[RegisterEntry, ...]
    payload_slot: tuple[str, ...]
    events: tuple[GateEvent, ...]
    expected_destination: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "register", tuple(self.register))
        object.__setattr__(self, "payload_slot", tuple(self.payload_slot))
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "expected_destination", tuple(self.expected_destination))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.register)

    @property
    def n_slots(self) -> int:
        return 1 + max((e.time_slot for e in self.events), default=-1)

    def slots(self) -> list[list[GateEvent]]:
        """Events grouped by time slot, preserving listed order within a slot."""
        out: list[list[GateEvent]] = [[] for _ in range(self.n_slots)]
        for ev in self.events:
            out[ev.time_slot].append(ev)
        return out

    def to_dict(self) -> dict:
        return {
            "register": [{"name": e.name, "dim": e.dim, "init": e.init} for e in self.register],
            "payload_slot": list(self.payload_slot),
            "events": [{"cavity": ev.cavity_id, "atoms": list(ev.atoms), "theta": ev.theta,
                        "slot": ev.time_slot} for ev in self.events],
            "destination": list(self.expected_destination),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> GateSchedule:
        required = {"register", "payload_slot", "events", "destination"}
        if not isinstance(doc, dict):
            raise ScheduleError("schedule document must be a JSON object")
        missing = required - doc.keys()
        unknown = doc.keys() - required
        if missing:
            raise ScheduleError(f"schedule missing keys: {sorted(missing)}")
        if unknown:
            raise ScheduleError(f"schedule has unknown keys: {sorted(unknown)}")
        try:
            register = tuple(RegisterEntry(str(r["name"]), int(r.get("dim", 2)), r.get("init", CARRIER_INIT))
                             for r in doc["register"])
            events = tuple(GateEvent(str(e["cavity"]), tuple(str(a) for a in e["atoms"]), float(e["theta"]),
                                     int(e["slot"])) for e in doc["events"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScheduleError(f"malformed schedule entry: {exc!r}") from None
        return cls(register, tuple(map(str, doc["payload_slot"])), events, tuple(map(str, doc["destination"])))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> GateSchedule:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScheduleError(f"schedule is not valid JSON: line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc)


def load_schedule(path: str | Path) -> GateSchedule:
    return GateSchedule.from_json(Path(path).read_text())


def save_schedule(schedule: GateSchedule, path: str | Path) -> None:
    Path(path).write_text(schedule.to_json(indent=2) + "\n")


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    code: str
    message: str


def _column_name(col: int) -> str:
    return string.ascii_lowercase[col]


def chain_labels(n_qubits: int, hops: int) -> list[list[str]]:
    """Atom names per column. Single-qubit chains use ``1, 2, 3, ...``;
    wider payloads use ``a1..an, b1..bn, ...``."""
    if n_qubits == 1:
        return [[str(c + 1)] for c in range(hops + 1)]
    return [[f"{_column_name(c)}{i + 1}" for i in range(n_qubits)] for c in range(hops + 1)]


def build_chain(n_qubits: int, hops: int, max_atoms: int = MAX_ATOMS) -> GateSchedule:
    """Linear transfer network: ``hops`` columns of parallel cavities.

    Column 0 holds the payload; every other atom starts excited. Hop ``h``
    pairs column ``h`` with column ``h+1`` qubit by qubit, all at
    ``theta = pi/2``, in time slot ``h``.
    """
    if n_qubits < 1:
        raise ValidationError(f"n_qubits must be >= 1, got {n_qubits}")
    if hops < 1:
        raise ValidationError(f"hops must be >= 1, got {hops}")
    total = n_qubits * (hops + 1)
    if total > max_atoms:
        raise CapacityError(f"chain needs {total} atoms, cap is {max_atoms}")
    if hops + 1 > len(string.ascii_lowercase):
        raise CapacityError(f"at most {len(string.ascii_lowercase) - 1} hops supported")
    cols = chain_labels(n_qubits, hops)
    register = [RegisterEntry(name, 2, None if c == 0 else CARRIER_INIT)
                for c, col in enumerate(cols) for name in col]
    events = []
    for h in range(hops):
        for i in range(n_qubits):
            cav = f"C{h + 1}" if n_qubits == 1 else f"C{i + 1}{h + 1}"
            events.append(GateEvent(cav, (cols[h][i], cols[h + 1][i]), TRANSFER_THETA, h))
    return GateSchedule(tuple(register), tuple(cols[0]), tuple(events), tuple(cols[-1]))


def validate_schedule(schedule: GateSchedule) -> list[Diagnostic]:
    """Structural diagnostics; never raises."""
    diags: list[Diagnostic] = []

    def err(code, msg):
        diags.append(Diagnostic("error", code, msg))

    names = schedule.names
    known = set(names)
    if len(known) != len(names):
        err("duplicate-label", f"register names are not unique: {list(names)}")
    for entry in schedule.register:
        if entry.dim != 2:
            err("bad-dim", f"atom {entry.name!r} has dim {entry.dim}; atoms must be two-level")
        if entry.name in schedule.payload_slot:
            if entry.init is not None:
                err("payload-init", f"payload atom {entry.name!r} must have init null")
        elif entry.init not in (0, 1):
            err("bad-init", f"atom {entry.name!r} has init {entry.init!r}; expected 0 or 1")
    for group, labels in (("payload_slot", schedule.payload_slot),
                          ("destination", schedule.expected_destination)):
        for lab in labels:
            if lab not in known:
                err("unknown-label", f"{group} references unknown atom {lab!r}")
        if len(set(labels)) != len(labels):
            err("duplicate-label", f"{group} repeats atoms: {list(labels)}")
    if len(schedule.expected_destination) != len(schedule.payload_slot):
        err("destination-size", f"destination has {len(schedule.expected_destination)} atoms, "
                                f"payload_slot has {len(schedule.payload_slot)}")

    slots_used = set()
    by_slot: dict[int, dict[str, int]] = {}
    for k, ev in enumerate(schedule.events):
        if len(ev.atoms) != 2 or ev.atoms[0] == ev.atoms[1]:
            err("bad-pair", f"event {k} ({ev.cavity_id}) needs two distinct atoms, got {list(ev.atoms)}")
        for lab in ev.atoms:
            if lab not in known:
                err("unknown-label", f"event {k} ({ev.cavity_id}) references unknown atom {lab!r}")
        if not isinstance(ev.time_slot, int) or ev.time_slot < 0:
            err("bad-slot", f"event {k} has invalid time slot {ev.time_slot!r}")
            continue
        slots_used.add(ev.time_slot)
        seen = by_slot.setdefault(ev.time_slot, {})
        for lab in set(ev.atoms):
            if lab in seen:
                err("slot-conflict", f"atom {lab!r} is used by events {seen[lab]} and {k} in slot {ev.time_slot}")
            else:
                seen[lab] = k
        if not math.isfinite(ev.theta):
            err("bad-theta", f"event {k} has non-finite theta")
        elif abs(ev.theta - TRANSFER_THETA) > ANGLE_TOL:
            diags.append(Diagnostic("warning", "non-transfer-angle",
                                    f"event {k} ({ev.cavity_id}) uses theta={ev.theta:.12g}, not pi/2"))
    if slots_used and slots_used != set(range(max(slots_used) + 1)):
        missing = sorted(set(range(max(slots_used) + 1)) - slots_used)
        err("slot-gap", f"time slots are not contiguous from 0; missing {missing}")

    # payload can only spread along events, in time order
    reached = set(schedule.payload_slot)
    for ev in sorted(schedule.events, key=lambda e: e.time_slot if isinstance(e.time_slot, int) else 0):
        if reached & set(ev.atoms):
            reached |= set(ev.atoms)
    for lab in schedule.expected_destination:
        if lab in known and lab not in reached:
            err("unreachable", f"destination atom {lab!r} is never reached by the payload")
    return diags


def _check(schedule: GateSchedule, max_atoms: int = MAX_ATOMS) -> None:
    if len(schedule.register) > max_atoms:
        raise CapacityError(f"schedule has {len(schedule.register)} atoms, cap is {max_atoms}")
    errors = [d for d in validate_schedule(schedule) if d.level == "error"]
    if errors:
        raise ScheduleError("; ".join(d.message for d in errors))


def _track_swaps(schedule: GateSchedule):
    """Classical bookkeeping of where payload qubits and carrier values end up.

    Returns ``(contents, predicted_phase)`` or ``None`` when some event is not
    a transfer gate. ``contents`` maps atom name to ``("payload", i)`` or
    ``("basis", value)``.
    """
    if any(abs(ev.theta - TRANSFER_THETA) > ANGLE_TOL for ev in schedule.events):
        return None
    contents = {e.name: ("basis", e.init) for e in schedule.register}
    for i, lab in enumerate(schedule.payload_slot):
        contents[lab] = ("payload", i)
    for slot in schedule.slots():
        for ev in slot:
            a, b = ev.atoms
            contents[a], contents[b] = contents[b], contents[a]
    return contents


def ideal_final_state(schedule: GateSchedule, payload: Payload) -> StateVector | None:
    """Register state a perfect swap network would produce, up to global phase."""
    contents = _track_swaps(schedule)
    if contents is None:
        return None
    slots = sorted((i, name) for name, (kind, i) in contents.items() if kind == "payload")
    payload_names = [name for _, name in slots]
    others = [e.name for e in schedule.register if contents[e.name][0] == "basis"]
    state = payload.as_state(payload_names)
    if others:
        state = qstate.tensor(state, StateVector.basis(others, [contents[n][1] for n in others]))
    return state.reorder(schedule.names)


def initial_state(schedule: GateSchedule, payload: Payload) -> StateVector:
    state = payload.as_state(schedule.payload_slot)
    others = [e for e in schedule.register if e.name not in schedule.payload_slot]
    if others:
        state = qstate.tensor(state, StateVector.basis([atom(e.name) for e in others], [e.init for e in others]))
    return state.reorder(schedule.names)


def summarize(final: StateVector, payload: Payload, destination: Sequence[str],
              ideal: StateVector | None, schedule: GateSchedule | None,
              history: Sequence[StateVector] = ()) -> ProtocolResult:
    """Fidelity on the destination atoms, global phase against the ideal
    network output, and the carrier-reuse check."""
    destination = tuple(destination)
    rho = qstate.reduced_state(final, destination)
    fid = qstate.state_fidelity(rho, payload.as_state(destination))
    phase = None
    carriers_ok = False
    if ideal is not None:
        if qstate.fidelity(final, ideal) >= 1.0 - PROPORTIONAL_TOL:
            phase = qstate.relative_phase(final, ideal)
        carriers_ok = True
        dest = set(destination)
        for name in final.names:
            if name in dest:
                continue
            # carriers of the ideal output are basis states
            value = int(np.argmax(np.diag(qstate.reduced_state(ideal, [name]).matrix).real))
            target = StateVector.basis([name], [value])
            if qstate.state_fidelity(qstate.reduced_state(final, [name]), target) < 1.0 - 1e-10:
                carriers_ok = False
    return ProtocolResult(final, fid, phase, carriers_ok, schedule, destination, tuple(history))


def execute(schedule: GateSchedule, payload: Payload, max_atoms: int = MAX_ATOMS) -> ProtocolResult:
    """Run a schedule on a payload.

    Non-payload atoms start in their ``init`` basis state; events run slot by
    slot and, within a slot, in listed order (they act on disjoint atoms and
    therefore commute).
    """
    _check(schedule, max_atoms)
    if payload.n_qubits != len(schedule.payload_slot):
        raise ValidationError(f"{payload.n_qubits}-qubit payload does not fit payload slot "
                              f"{list(schedule.payload_slot)}")
    state = initial_state(schedule, payload)
    history = []
    for slot in schedule.slots():
        for ev in slot:
            state = qstate.apply_local_unitary(state, ev.atoms, effective_unitary(ev.theta))
        history.append(state)
    return summarize(state, payload, schedule.expected_destination,
                     ideal_final_state(schedule, payload), schedule, history)
