"""Full atom-cavity model checks of the dispersive transfer gate.

Every run evolves atoms that start in ``payload (x) |1>`` together with a
vacuum cavity under the full two-atom Tavis-Cummings Hamiltonian, traces
the cavity out, and compares with the ideal dispersive-gate output. Multi-hop
protocols use a fresh vacuum cavity for each passage.

The Hamiltonian is taken in the atomic rotating frame
(``frame="atom"``), which is the frame of the effective gate; no further
phase correction is needed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import qstate
from .dynamics import (
    DEFAULT_LINDBLAD_STEPS,
    TRANSFER_THETA,
    TRACE_DRIFT_LIMIT,
    FullModelParams,
    annihilation,
    effective_unitary,
    lindblad_propagate,
    propagator,
    tavis_cummings_hamiltonian,
)
from .errors import CutoffError, StepSizeError, ValidationError
from .payload import Payload
from .qstate import atom, cavity

CUTOFF_TOL = 1e-9
THETA_TOL = 1e-9
DEFAULT_PAYLOADS = 10
DEFAULT_RATIO = 20.0
CSV_HEADER = ("parameter", "value", "mean_infidelity", "max_infidelity", "phase_error", "wall_time_s")


class SweepParameter(str, Enum):
    DETUNING_RATIO = "detuning_ratio"
    KAPPA_OVER_G = "kappa_over_g"
    FOCK_CUTOFF = "fock_cutoff"


class Protocol(str, Enum):
    SINGLE_GATE = "single_gate"
    TRANSFER_SINGLE = "transfer_single"


_PROTOCOL_ATOMS = {
    Protocol.SINGLE_GATE: (("1", "2"), (("1", "2"),)),
    Protocol.TRANSFER_SINGLE: (("1", "2", "3"), (("1", "2"), ("2", "3"))),
}


def default_params(ratio: float = DEFAULT_RATIO, g: float = 1.0, **kw) -> FullModelParams:
    """Operating point with ``lambda * t = pi/2`` at ``delta = ratio * g``."""
    return FullModelParams.for_gate(g, ratio * g, TRANSFER_THETA, **kw)


@dataclass(frozen=True)
class SweepSpec:
    parameter: SweepParameter
    values: tuple[float, ...]
    base: FullModelParams = field(default_factory=default_params)
    protocol: Protocol = Protocol.SINGLE_GATE
    payloads: int = DEFAULT_PAYLOADS
    seed: int = 0
    steps: int = DEFAULT_LINDBLAD_STEPS

    def __post_init__(self):
        object.__setattr__(self, "parameter", SweepParameter(self.parameter))
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ValidationError("sweep values must be nonempty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValidationError(f"sweep values must be strictly ascending, got {list(self.values)}")
        if self.payloads < 1:
            raise ValidationError(f"payloads must be >= 1, got {self.payloads}")
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")


@dataclass(frozen=True)
class SweepRow:
    parameter_value: float
    mean_infidelity: float
    max_infidelity: float
    phase_error: float
    wall_time: float


@dataclass(frozen=True)
class Comparison:
    infidelities: np.ndarray
    phase_errors: np.ndarray

    @property
    def mean_infidelity(self) -> float:
        return float(np.mean(self.infidelities))

    @property
    def max_infidelity(self) -> float:
        return float(np.max(self.infidelities))

    @property
    def phase_error(self) -> float:
        return float(np.mean(self.phase_errors))


def payload_set(count: int = DEFAULT_PAYLOADS, seed: int = 0) -> list[Payload]:
    rng = np.random.default_rng(seed)
    return [Payload.random(1, rng) for _ in range(count)]


def _check_theta(p: FullModelParams) -> None:
    if abs(p.theta - TRANSFER_THETA) > THETA_TOL:
        raise ValidationError(f"interaction time gives lambda*t = {p.theta:.12g}, expected pi/2")


def _register(names: Sequence[str], p: FullModelParams):
    return tuple(atom(n) for n in names) + (cavity("cav", p.fock_cutoff),)


def _pair_operators(p: FullModelParams, names: Sequence[str], pair: tuple[str, str]):
    labels = _register(names, p)
    H = qstate.embed_operator(tavis_cummings_hamiltonian(p, frame="atom"), [*pair, "cav"], labels)
    a = qstate.embed_operator(annihilation(p.fock_cutoff), ["cav"], labels)
    return labels, H, a


def _targets(protocol: Protocol, payloads: Sequence[Payload]) -> tuple[tuple[str, ...], np.ndarray]:
    """Ideal dispersive-gate outputs (phase included) on the atom register."""
    names, pairs = _PROTOCOL_ATOMS[protocol]
    gate = effective_unitary(TRANSFER_THETA)
    out = []
    for pl in payloads:
        s = qstate.tensor(pl.as_state(names[:1]), qstate.StateVector.basis(names[1:], [1] * (len(names) - 1)))
        for pair in pairs:
            s = qstate.apply_local_unitary(s, pair, gate)
        out.append(s.amplitudes)
    return names, np.array(out)


def _initial_atoms(names, payloads) -> np.ndarray:
    carriers = np.zeros(2 ** (len(names) - 1), dtype=complex)
    carriers[-1] = 1.0
    return np.array([np.kron(pl.coefficients, carriers) for pl in payloads])


def compare_closed(p: FullModelParams, protocol: Protocol | str = Protocol.SINGLE_GATE,
                   payloads: Sequence[Payload] | None = None) -> Comparison:
    """Closed-system full model versus the dispersive gate.

    Infidelity uses the cavity-traced atomic state; the phase error is the
    angle of the overlap between the ideal output and the branch in which
    every cavity is found empty.
    """
    protocol = Protocol(protocol)
    _check_theta(p)
    payloads = payload_set() if payloads is None else list(payloads)
    names, targets = _targets(protocol, payloads)
    _, pairs = _PROTOCOL_ATOMS[protocol]
    n_cav = p.fock_cutoff + 1
    d_atoms = 2 ** len(names)

    psi = _initial_atoms(names, payloads)  # vacuum-branch amplitudes, (B, d_atoms)
    rho = np.einsum("bi,bj->bij", psi, psi.conj())
    for pair in pairs:
        _, H, _ = _pair_operators(p, names, pair)
        U = propagator(H, p.t)
        full = np.kron(psi, np.eye(n_cav)[0])
        psi = (full @ U.T).reshape(len(payloads), d_atoms, n_cav)[:, :, 0]
        Ur = U.reshape(d_atoms, n_cav, d_atoms, n_cav)[:, :, :, 0]
        rho = np.einsum("imk,bkl,jml->bij", Ur, rho, Ur.conj())

    fid = np.einsum("bi,bij,bj->b", targets.conj(), rho, targets).real
    overlap = np.einsum("bi,bi->b", targets.conj(), psi)
    return Comparison(np.clip(1.0 - fid, 0.0, 1.0), np.abs(np.angle(overlap)))


def compare_open(p: FullModelParams, protocol: Protocol | str = Protocol.SINGLE_GATE,
                 payloads: Sequence[Payload] | None = None,
                 steps: int = DEFAULT_LINDBLAD_STEPS) -> Comparison:
    """Full model with cavity decay ``sqrt(kappa) a`` via the Lindblad integrator.

    Phase errors are NaN: a global phase is not defined for mixed outputs.
    """
    protocol = Protocol(protocol)
    _check_theta(p)
    payloads = payload_set() if payloads is None else list(payloads)
    names, targets = _targets(protocol, payloads)
    _, pairs = _PROTOCOL_ATOMS[protocol]

    psi = _initial_atoms(names, payloads)
    rho_atoms = np.einsum("bi,bj->bij", psi, psi.conj())
    phi = passage_channel(p, steps)
    for pair in pairs:
        rho_atoms = _apply_pair_channel(rho_atoms, names, pair, phi)
    rho_atoms = rho_atoms / np.einsum("bii->b", rho_atoms).real[:, None, None]
    fid = np.einsum("bi,bij,bj->b", targets.conj(), rho_atoms, targets).real
    return Comparison(np.clip(1.0 - fid, 0.0, 1.0), np.full(len(payloads), np.nan))


def passage_channel(p: FullModelParams, steps: int = DEFAULT_LINDBLAD_STEPS) -> np.ndarray:
    """Two-atom channel of one cavity passage, vacuum in and cavity traced out.

    Returns ``phi`` of shape ``(4, 4, 4, 4)`` with
    ``rho_out[i, j] = sum_kl phi[i, j, k, l] rho_in[k, l]``, built by
    propagating the 16 matrix units ``|k><l| (x) |0><0|``.
    """
    n_cav = p.fock_cutoff + 1
    H = tavis_cummings_hamiltonian(p, frame="atom")
    a = np.kron(np.eye(4), annihilation(p.fock_cutoff))
    collapse = [math.sqrt(p.kappa) * a] if p.kappa > 0 else []
    units = np.zeros((16, 4 * n_cav, 4 * n_cav), dtype=complex)
    for k in range(4):
        for l in range(4):
            units[4 * k + l, k * n_cav, l * n_cav] = 1.0
    out = lindblad_propagate(H, collapse, p.t, steps, units)
    out = np.einsum("bimjm->bij", out.reshape(16, 4, n_cav, 4, n_cav))
    drift = max(abs(np.trace(out[5 * k]).real - 1.0) for k in range(4))
    if drift > TRACE_DRIFT_LIMIT:
        raise StepSizeError(f"trace drifted by {drift:.3g} over {steps} steps; increase the step count")
    return out.reshape(4, 4, 4, 4).transpose(2, 3, 0, 1)


def _apply_pair_channel(rho_atoms: np.ndarray, names: Sequence[str], pair: tuple[str, str],
                        phi: np.ndarray) -> np.ndarray:
    """Apply a two-atom channel to ``pair`` inside a batch of atom density matrices.

    The channel is the identity on spectator atoms, so it acts blockwise.
    """
    B = rho_atoms.shape[0]
    n = len(names)
    front = [names.index(x) for x in pair]
    order = front + [i for i in range(n) if i not in front]
    R = 2 ** (n - 2)
    t = rho_atoms.reshape((B,) + (2,) * (2 * n))
    t = t.transpose([0] + [1 + i for i in order] + [1 + n + i for i in order])
    t = t.reshape(B, 4, R, 4, R)
    t = np.einsum("ijkl,bkrls->birjs", phi, t)
    t = t.reshape((B,) + (2,) * (2 * n))
    inv = list(np.argsort(order))
    t = t.transpose([0] + [1 + i for i in inv] + [1 + n + i for i in inv])
    r = t.reshape(B, 2 ** n, 2 ** n)
    return 0.5 * (r + r.conj().transpose(0, 2, 1))


def check_cutoff(p: FullModelParams, protocol: Protocol | str = Protocol.SINGLE_GATE,
                 payloads: Sequence[Payload] | None = None) -> float:
    """Mean-infidelity change between cutoffs N and N+2; raises CutoffError above 1e-9."""
    lo = compare_closed(p, protocol, payloads).mean_infidelity
    hi = compare_closed(p.replace(fock_cutoff=p.fock_cutoff + 2), protocol, payloads).mean_infidelity
    diff = abs(hi - lo)
    if diff > CUTOFF_TOL:
        raise CutoffError(f"Fock cutoff {p.fock_cutoff} not converged: N vs N+2 differ by {diff:.3g}")
    return diff


def gate_infidelity_full_vs_effective(p: FullModelParams, payloads: Sequence[Payload] | None = None,
                                      seed: int = 0, count: int = DEFAULT_PAYLOADS) -> float:
    """Mean infidelity of one full-model cavity passage against the pi/2 gate.

    Input ``(alpha|0> + beta|1>) (x) |1> (x) |vac>`` averaged over a seeded
    payload set. Requires ``g**2 t / delta = pi/2`` and a converged cutoff.
    """
    payloads = payload_set(count, seed) if payloads is None else payloads
    check_cutoff(p, Protocol.SINGLE_GATE, payloads)
    return compare_closed(p, Protocol.SINGLE_GATE, payloads).mean_infidelity


def _point_params(spec: SweepSpec, value: float) -> FullModelParams:
    b = spec.base
    if spec.parameter is SweepParameter.DETUNING_RATIO:
        return FullModelParams.for_gate(b.g, value * b.g, TRANSFER_THETA, kappa=b.kappa, fock_cutoff=b.fock_cutoff)
    if spec.parameter is SweepParameter.KAPPA_OVER_G:
        return FullModelParams.for_gate(b.g, b.delta, TRANSFER_THETA, kappa=value * b.g, fock_cutoff=b.fock_cutoff)
    if int(value) != value or value < 1:
        raise ValidationError(f"fock cutoff values must be positive integers, got {value}")
    return FullModelParams.for_gate(b.g, b.delta, TRANSFER_THETA, kappa=b.kappa, fock_cutoff=int(value))


def _run_point(spec: SweepSpec, value: float) -> SweepRow:
    start = time.perf_counter()
    p = _point_params(spec, value)
    payloads = payload_set(spec.payloads, spec.seed)
    if spec.parameter is SweepParameter.KAPPA_OVER_G:
        check_cutoff(p.replace(kappa=0.0), spec.protocol, payloads)
        cmp = compare_open(p, spec.protocol, payloads, spec.steps)
    else:
        if spec.parameter is SweepParameter.DETUNING_RATIO:
            check_cutoff(p, spec.protocol, payloads)
        cmp = compare_closed(p, spec.protocol, payloads)
    return SweepRow(value, cmp.mean_infidelity, cmp.max_infidelity, cmp.phase_error,
                    time.perf_counter() - start)


def available_parallelism() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, jobs: int | None = None) -> list[SweepRow]:
    """Evaluate every sweep point; rows come back in ``spec.values`` order."""
    jobs = available_parallelism() if jobs is None else jobs
    jobs = max(1, min(jobs, len(spec.values)))
    if jobs == 1:
        return [_run_point(spec, v) for v in spec.values]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_point, [spec] * len(spec.values), spec.values))


def detuning_sweep(spec: SweepSpec, jobs: int | None = None) -> list[SweepRow]:
    if spec.parameter is not SweepParameter.DETUNING_RATIO:
        raise ValidationError(f"detuning_sweep needs parameter=detuning_ratio, got {spec.parameter.value}")
    return run_sweep(spec, jobs)


def decay_sweep(spec: SweepSpec, jobs: int | None = None) -> list[SweepRow]:
    if spec.parameter is not SweepParameter.KAPPA_OVER_G:
        raise ValidationError(f"decay_sweep needs parameter=kappa_over_g, got {spec.parameter.value}")
    return run_sweep(spec, jobs)


def cutoff_sweep(spec: SweepSpec, jobs: int | None = None) -> list[SweepRow]:
    if spec.parameter is not SweepParameter.FOCK_CUTOFF:
        raise ValidationError(f"cutoff_sweep needs parameter=fock_cutoff, got {spec.parameter.value}")
    return run_sweep(spec, jobs)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def rows_to_csv(spec: SweepSpec, rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([spec.parameter.value, _fmt(r.parameter_value), _fmt(r.mean_infidelity),
                    _fmt(r.max_infidelity), _fmt(r.phase_error), _fmt(r.wall_time)])
    return buf.getvalue()


def rows_to_json(spec: SweepSpec, rows: Sequence[SweepRow]) -> dict:
    base = asdict(spec.base)
    return {
        "parameter": spec.parameter.value,
        "protocol": spec.protocol.value,
        "seed": spec.seed,
        "payloads": spec.payloads,
        "steps": spec.steps,
        "base": {k: base[k] for k in ("g", "delta", "kappa", "fock_cutoff")},
        "rows": [
            {"value": r.parameter_value, "mean_infidelity": r.mean_infidelity,
             "max_infidelity": r.max_infidelity,
             "phase_error": None if math.isnan(r.phase_error) else r.phase_error,
             "wall_time_s": r.wall_time}
            for r in rows
        ],
    }


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
