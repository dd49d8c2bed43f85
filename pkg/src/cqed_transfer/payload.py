"""Payload states and protocol result containers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ValidationError
from .qstate import STATE_TOL, MeasurementRecord, StateVector, atom

if TYPE_CHECKING:
    from .network import GateSchedule

log = logging.getLogger(__name__)

# inputs this close to unit norm are renormalized instead of rejected
LENIENT_NORM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Payload:
    """Unknown n-qubit state to be moved through the network.

    Coefficients follow the register convention: qubit 1 is the slowest
    index, so for two qubits the order is ``(alpha, beta, gamma, delta)`` on
    ``|00>, |01>, |10>, |11>``.
    """

    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex).reshape(-1)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        n = c.size.bit_length() - 1
        if c.size < 2 or 1 << n != c.size:
            raise ValidationError(f"payload length must be a power of two >= 2, got {c.size}")
        norm = np.linalg.norm(c)
        if abs(norm - 1.0) > STATE_TOL:
            raise ValidationError(f"payload is not normalized (norm={norm:.15g})")

    @property
    def n_qubits(self) -> int:
        return self.coefficients.size.bit_length() - 1

    @classmethod
    def from_coefficients(cls, coefficients: Sequence[complex], n_qubits: int | None = None) -> Payload:
        """Build a payload, renormalizing near-unit inputs.

        Norms within 1e-6 of one are rescaled (with a logged warning when
        the correction exceeds round-off); anything further off is rejected.
        """
        c = np.asarray(coefficients, dtype=complex).reshape(-1)
        if n_qubits is not None and c.size != 2 ** n_qubits:
            raise ValidationError(
                f"payload has {c.size} coefficients but n_qubits={n_qubits} needs {2 ** n_qubits}")
        norm = float(np.linalg.norm(c))
        if abs(norm - 1.0) > LENIENT_NORM_TOL:
            raise ValidationError(f"payload norm {norm:.12g} is not within {LENIENT_NORM_TOL:g} of 1")
        if abs(norm - 1.0) > STATE_TOL:
            log.warning("payload norm %.12g renormalized to 1", norm)
        return cls(c / norm)

    @classmethod
    def random(cls, n_qubits: int, rng: np.random.Generator) -> Payload:
        """Haar-distributed pure state (normalized complex Gaussian vector)."""
        if n_qubits < 1:
            raise ValidationError(f"n_qubits must be >= 1, got {n_qubits}")
        v = rng.normal(size=2 ** n_qubits) + 1j * rng.normal(size=2 ** n_qubits)
        return cls(v / np.linalg.norm(v))

    @classmethod
    def basis(cls, bits: str) -> Payload:
        c = np.zeros(2 ** len(bits), dtype=complex)
        c[int(bits, 2)] = 1.0
        return cls(c)

    def as_state(self, names: Sequence[str]) -> StateVector:
        if len(names) != self.n_qubits:
            raise ValidationError(f"{self.n_qubits}-qubit payload cannot occupy {len(names)} atoms")
        return StateVector(tuple(atom(n) for n in names), self.coefficients)

    def superpose(self, other: Payload, c1: complex, c2: complex) -> Payload:
        v = c1 * self.coefficients + c2 * other.coefficients
        return Payload(v / np.linalg.norm(v))


@dataclass(frozen=True, eq=False)
class ProtocolResult:
    """Outcome of one deterministic transfer run.

    ``history`` holds the register state after each time slot (cavity
    passage column), so intermediate states can be inspected.
    """

    final_state: StateVector
    payload_fidelity: float
    global_phase: complex | None
    carrier_atoms_final: bool
    schedule_used: GateSchedule | None
    destination: tuple[str, ...] = ()
    history: tuple[StateVector, ...] = ()

    def __post_init__(self):
        if not -1e-12 <= self.payload_fidelity <= 1.0 + 1e-12:
            raise ValidationError(f"payload fidelity {self.payload_fidelity} outside [0, 1]")

    @property
    def phase_angle(self) -> float | None:
        return None if self.global_phase is None else math.atan2(self.global_phase.imag, self.global_phase.real)

    def summary(self) -> dict:
        out = {
            "payload_fidelity": self.payload_fidelity,
            "global_phase": None if self.global_phase is None
            else [self.global_phase.real, self.global_phase.imag],
            "carrier_atoms_final": self.carrier_atoms_final,
            "destination": list(self.destination),
        }
        return out


@dataclass(frozen=True, eq=False)
class TeleportResult:
    """Per-outcome record of the probabilistic teleportation baseline.

    Keys of ``outcomes`` and ``corrected_fidelities`` are the measured
    ``(atom1, atom2)`` basis values. Failure branches map to ``None`` in
    ``corrected_fidelities``.
    """

    outcomes: dict[tuple[int, int], MeasurementRecord]
    success_probability: float
    corrected_fidelities: dict[tuple[int, int], float | None]
    raw_fidelities: dict[tuple[int, int], float | None]
    corrections: dict[tuple[int, int], str]

    def __post_init__(self):
        total = sum(r.probability for r in self.outcomes.values())
        if abs(total - 1.0) > STATE_TOL:
            raise ValidationError(f"outcome probabilities sum to {total:.15g}")
        if not 0.0 <= self.success_probability <= 1.0 + 1e-12:
            raise ValidationError(f"success probability {self.success_probability} outside [0, 1]")

    def summary(self) -> dict:
        rows = []
        for key, rec in self.outcomes.items():
            rows.append({
                "atom1": key[0],
                "atom2": key[1],
                "probability": rec.probability,
                "correction": self.corrections[key],
                "fidelity_before": self.raw_fidelities[key],
                "fidelity_after": self.corrected_fidelities[key],
            })
        return {"success_probability": self.success_probability, "outcomes": rows}
