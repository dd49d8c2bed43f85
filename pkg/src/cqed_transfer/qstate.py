"""Dense state vectors and density matrices on labeled registers.

Amplitudes are stored row-major over the register labels, so the first
label is the slowest-varying index. Basis index 0 is the ground state
``|0>`` and index 1 the excited state ``|1>`` for atoms; for a cavity the
index is the photon number.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CompositionError,
    LabelLookupError,
    NotProportionalError,
    ShapeError,
    ValidationError,
)

STATE_TOL = 1e-10
PSD_TOL = 1e-8
PROPORTIONAL_TOL = 1e-8
# outcomes below this probability have no well-defined post-measurement state
ZERO_PROB = 1e-20


@dataclass(frozen=True)
class SubsystemLabel:
    """Name and Hilbert-space dimension of one register slot."""

    name: str
    dim: int = 2

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValidationError(f"subsystem name must be a non-empty string, got {self.name!r}")
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValidationError(f"subsystem {self.name!r}: dim must be an integer >= 2, got {self.dim}")


def atom(name: str) -> SubsystemLabel:
    return SubsystemLabel(name, 2)


def cavity(name: str = "cav", fock_cutoff: int = 5) -> SubsystemLabel:
    """Cavity mode truncated to photon numbers ``0..fock_cutoff``."""
    return SubsystemLabel(name, fock_cutoff + 1)


def _as_labels(labels: Iterable[SubsystemLabel | str]) -> tuple[SubsystemLabel, ...]:
    out = tuple(lab if isinstance(lab, SubsystemLabel) else atom(lab) for lab in labels)
    names = [lab.name for lab in out]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise CompositionError(f"duplicate subsystem names: {dupes}")
    return out


def _frozen(arr) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


class _Register:
    labels: tuple[SubsystemLabel, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.labels)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(lab.dim for lab in self.labels)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=int))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LabelLookupError(f"unknown subsystem {name!r}; register has {list(self.names)}") from None

    def label(self, name: str) -> SubsystemLabel:
        return self.labels[self.index(name)]

    def _axes(self, names: Sequence[str]) -> list[int]:
        if isinstance(names, str):
            names = [names]
        axes = [self.index(n) for n in names]
        if len(set(axes)) != len(axes):
            raise ValidationError(f"repeated target labels: {list(names)}")
        return axes


@dataclass(frozen=True, eq=False)
class StateVector(_Register):
    """Normalized pure state of a labeled register."""

    labels: tuple[SubsystemLabel, ...]
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = _as_labels(self.labels)
        amps = _frozen(self.amplitudes).reshape(-1)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "amplitudes", amps)
        expected = int(np.prod([lab.dim for lab in labels], dtype=int))
        if amps.size != expected:
            raise ShapeError(f"{amps.size} amplitudes for register of dimension {expected}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > STATE_TOL:
            raise ValidationError(f"state is not normalized (norm={norm:.15g})")

    @classmethod
    def from_amplitudes(cls, labels, amplitudes, normalize: bool = False) -> StateVector:
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise ValidationError("cannot normalize the zero vector")
            amps = amps / norm
        return cls(tuple(labels), amps)

    @classmethod
    def basis(cls, labels, indices: Sequence[int]) -> StateVector:
        """Computational basis state, one index per label."""
        labels = _as_labels(labels)
        if len(indices) != len(labels):
            raise ShapeError(f"{len(indices)} basis indices for {len(labels)} subsystems")
        dims = [lab.dim for lab in labels]
        for lab, i in zip(labels, indices):
            if not 0 <= i < lab.dim:
                raise ValidationError(f"basis index {i} out of range for {lab.name!r} (dim {lab.dim})")
        amps = np.zeros(int(np.prod(dims, dtype=int)), dtype=complex)
        amps[np.ravel_multi_index(tuple(indices), dims)] = 1.0
        return cls(labels, amps)

    @property
    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def reorder(self, names: Sequence[str]) -> StateVector:
        """Same state with the register permuted into ``names`` order."""
        axes = self._axes(names)
        if len(axes) != len(self.labels):
            raise ValidationError("reorder needs every register label exactly once")
        amps = np.transpose(self.tensor_view, axes).reshape(-1)
        return StateVector(tuple(self.labels[a] for a in axes), amps)

    def to_density(self) -> DensityMatrix:
        return DensityMatrix(self.labels, np.outer(self.amplitudes, self.amplitudes.conj()))

    def __mul__(self, scalar: complex) -> StateVector:
        if abs(abs(scalar) - 1.0) > STATE_TOL:
            raise ValidationError("only unit-modulus scalars keep the state normalized")
        return StateVector(self.labels, self.amplitudes * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> StateVector:
        return StateVector(self.labels, -self.amplitudes)

    def allclose(self, other: StateVector, atol: float = 1e-12) -> bool:
        _check_same_register(self, other)
        return bool(np.allclose(self.amplitudes, other.amplitudes, rtol=0, atol=atol))


@dataclass(frozen=True, eq=False)
class DensityMatrix(_Register):
    """Mixed state of a labeled register (Hermitian, unit trace, PSD)."""

    labels: tuple[SubsystemLabel, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = _as_labels(self.labels)
        mat = _frozen(self.matrix)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", mat)
        d = int(np.prod([lab.dim for lab in labels], dtype=int))
        if mat.shape != (d, d):
            raise ShapeError(f"density matrix shape {mat.shape} for register of dimension {d}")
        if np.max(np.abs(mat - mat.conj().T), initial=0.0) > STATE_TOL:
            raise ValidationError("density matrix is not Hermitian")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > STATE_TOL:
            raise ValidationError(f"density matrix trace is {tr:.15g}, expected 1")
        if np.linalg.eigvalsh(mat).min() < -PSD_TOL:
            raise ValidationError("density matrix is not positive semidefinite")

    @property
    def purity(self) -> float:
        return float(np.real(np.einsum("ij,ji->", self.matrix, self.matrix)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def expectation(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.matrix @ op))


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """One computational-basis outcome of a projective measurement.

    ``post_state`` is the collapsed, renormalized state of the whole
    register; it is ``None`` when the outcome has (numerically) zero
    probability.
    """

    outcome: tuple[tuple[str, int], ...]
    probability: float
    post_state: StateVector | None

    @property
    def defined(self) -> bool:
        return self.post_state is not None

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(v for _, v in self.outcome)


def _check_same_register(a: _Register, b: _Register) -> None:
    if a.labels != b.labels:
        raise ShapeError(f"register mismatch: {a.labels} vs {b.labels}")


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product; ``a``'s labels come first."""
    clash = set(a.names) & set(b.names)
    if clash:
        raise CompositionError(f"cannot compose registers sharing labels {sorted(clash)}")
    return StateVector(a.labels + b.labels, np.kron(a.amplitudes, b.amplitudes))


def tensor_all(states: Iterable[StateVector]) -> StateVector:
    states = list(states)
    out = states[0]
    for s in states[1:]:
        out = tensor(out, s)
    return out


def is_unitary(U: np.ndarray, atol: float = STATE_TOL) -> bool:
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        return False
    return bool(np.allclose(U.conj().T @ U, np.eye(U.shape[0]), rtol=0, atol=atol))


def apply_operator(s_amps: np.ndarray, dims: Sequence[int], axes: Sequence[int], op: np.ndarray) -> np.ndarray:
    """Contract ``op`` into the given tensor axes of a flat amplitude array.

    Works on any array whose leading ``len(dims)`` axes are the register;
    extra trailing axes (e.g. columns of a matrix) ride along.
    """
    dims = list(dims)
    tdims = [dims[a] for a in axes]
    k = len(axes)
    psi = s_amps.reshape(dims + list(s_amps.shape[1:]))
    op_t = np.asarray(op).reshape(tdims + tdims)
    out = np.tensordot(op_t, psi, axes=(list(range(k, 2 * k)), list(axes)))
    out = np.moveaxis(out, list(range(k)), list(axes))
    return out.reshape(s_amps.shape)


def apply_local_unitary(s: StateVector, targets: Sequence[str], U: np.ndarray) -> StateVector:
    """Apply ``U`` to the ``targets`` subsystems (in the listed order)."""
    axes = s._axes(targets)
    U = np.asarray(U, dtype=complex)
    tdim = int(np.prod([s.dims[a] for a in axes], dtype=int))
    if U.shape != (tdim, tdim):
        raise ShapeError(f"operator shape {U.shape} does not match target dimension {tdim}")
    if not is_unitary(U):
        raise ValidationError("operator is not unitary within 1e-10")
    return StateVector(s.labels, apply_operator(s.amplitudes, s.dims, axes, U))


def embed_operator(op: np.ndarray, targets: Sequence[str], labels: Sequence[SubsystemLabel]) -> np.ndarray:
    """Full-register matrix acting as ``op`` on ``targets`` and identity elsewhere."""
    labels = _as_labels(labels)
    reg = StateVector.basis(labels, [0] * len(labels))
    axes = reg._axes(targets)
    d = reg.dim
    return apply_operator(np.eye(d, dtype=complex), reg.dims, axes, op)


def inner(a: StateVector, b: StateVector) -> complex:
    """``<a|b>``."""
    _check_same_register(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: StateVector, b: StateVector) -> float:
    """Overlap ``|<a|b>|**2`` of two pure states on the same register."""
    return float(min(1.0, abs(inner(a, b)) ** 2))


def state_fidelity(rho: DensityMatrix, psi: StateVector) -> float:
    """``<psi|rho|psi>`` for a mixed state against a pure target."""
    _check_same_register(rho, psi)
    val = np.vdot(psi.amplitudes, rho.matrix @ psi.amplitudes).real
    return float(min(1.0, max(0.0, val)))


def relative_phase(a: StateVector, b: StateVector) -> complex:
    """Unit scalar ``c`` minimizing ``||a - c*b||``.

    Raises NotProportionalError unless the states agree up to a global
    phase (fidelity >= 1 - 1e-8).
    """
    ov = inner(b, a)
    if abs(ov) ** 2 < 1.0 - PROPORTIONAL_TOL:
        raise NotProportionalError(f"states not proportional (fidelity={abs(ov) ** 2:.12g})")
    return ov / abs(ov)


def measure_subsystems(s: StateVector, targets: Sequence[str]) -> list[MeasurementRecord]:
    """Every computational-basis outcome on ``targets`` with Born probabilities.

    Outcomes are enumerated in lexicographic order of basis indices and
    include zero-probability branches.
    """
    axes = s._axes(targets)
    names = [s.names[a] for a in axes]
    psi = s.tensor_view
    records = []
    for values in itertools.product(*(range(s.dims[a]) for a in axes)):
        index = [slice(None)] * len(s.dims)
        for a, v in zip(axes, values):
            index[a] = v
        mask = np.zeros(s.dims, dtype=bool)
        mask[tuple(index)] = True
        branch = np.where(mask, psi, 0.0).reshape(-1)
        prob = float(np.vdot(branch, branch).real)
        post = None
        if prob > ZERO_PROB:
            post = StateVector(s.labels, branch / np.sqrt(prob))
        records.append(MeasurementRecord(tuple(zip(names, values)), prob, post))
    return records


def _reduce(tensor_rho: np.ndarray, dims: list[int], keep_axes: list[int]) -> np.ndarray:
    n = len(dims)
    traced = [i for i in range(n) if i not in keep_axes]
    # einsum sublists: ket axes i, bra axes n+i; traced pairs share an index
    ket = list(range(n))
    bra = [i if i in traced else n + i for i in range(n)]
    out = [ket[i] for i in keep_axes] + [bra[i] for i in keep_axes]
    kd = int(np.prod([dims[i] for i in keep_axes], dtype=int))
    return np.einsum(tensor_rho, ket + bra, out).reshape(kd, kd)


def partial_trace(rho: DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    """Reduced state on ``keep``; the result's register follows ``keep`` order."""
    axes = rho._axes(keep)
    dims = list(rho.dims)
    mat = _reduce(rho.matrix.reshape(dims + dims), dims, axes)
    return DensityMatrix(tuple(rho.labels[a] for a in axes), 0.5 * (mat + mat.conj().T))


def reduced_state(s: StateVector, keep: Sequence[str]) -> DensityMatrix:
    """Reduced density matrix of a pure state, without forming the full projector."""
    axes = s._axes(keep)
    rest = [i for i in range(len(s.dims)) if i not in axes]
    kd = int(np.prod([s.dims[a] for a in axes], dtype=int))
    m = np.transpose(s.tensor_view, axes + rest).reshape(kd, -1)
    mat = m @ m.conj().T
    return DensityMatrix(tuple(s.labels[a] for a in axes), 0.5 * (mat + mat.conj().T))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy in bits."""
    w = rho.eigenvalues()
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log2(w)))
