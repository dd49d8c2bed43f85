"""Two-atom dispersive gate, full atom-cavity model, and time evolution.

Two-atom matrices use the basis order ``|00>, |01>, |10>, |11>`` with the
first atom as the slower index. Full-model matrices act on
``atom (x) atom (x) Fock(N+1)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import StepSizeError, ValidationError
from .qstate import PSD_TOL, STATE_TOL, DensityMatrix, StateVector

log = logging.getLogger(__name__)

TRANSFER_THETA = math.pi / 2
BELL_THETA = math.pi / 4
DISPERSIVE_RATIO_WARN = 10.0
DEFAULT_FOCK_CUTOFF = 5
DEFAULT_LINDBLAD_STEPS = 4000
TRACE_DRIFT_LIMIT = 1e-6


@dataclass(frozen=True)
class EffectiveGateParams:
    """Gate angle ``theta = lambda * t`` with ``lambda = g**2 / delta``."""

    theta: float

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValidationError(f"theta must be finite, got {self.theta}")

    @classmethod
    def from_physical(cls, g: float, delta: float, t: float) -> EffectiveGateParams:
        return cls(g * g / delta * t)


@dataclass(frozen=True)
class FullModelParams:
    """Physical parameters of two atoms in one detuned cavity mode.

    Rates are angular frequencies; ``delta`` is the atom-cavity detuning
    ``omega_0 - omega`` and ``kappa`` the cavity energy decay rate.
    """

    g: float
    delta: float
    t: float
    kappa: float = 0.0
    fock_cutoff: int = DEFAULT_FOCK_CUTOFF

    def __post_init__(self):
        if not self.g > 0:
            raise ValidationError(f"g must be positive, got {self.g}")
        if self.delta == 0 or not math.isfinite(self.delta):
            raise ValidationError(f"delta must be finite and nonzero, got {self.delta}")
        if self.kappa < 0:
            raise ValidationError(f"kappa must be >= 0, got {self.kappa}")
        if int(self.fock_cutoff) != self.fock_cutoff or self.fock_cutoff < 1:
            raise ValidationError(f"fock_cutoff must be an integer >= 1, got {self.fock_cutoff}")
        if not self.t >= 0:
            raise ValidationError(f"interaction time must be >= 0, got {self.t}")
        if self.dispersive_warning:
            log.warning("|delta|/g = %.3g is below %g; dispersive approximation is poor",
                        abs(self.delta) / self.g, DISPERSIVE_RATIO_WARN)

    @classmethod
    def for_gate(cls, g: float, delta: float, theta: float = TRANSFER_THETA, **kw) -> FullModelParams:
        """Parameters whose interaction time realizes ``lambda * t = theta``."""
        if not g > 0:
            raise ValidationError(f"g must be positive, got {g}")
        return cls(g=g, delta=delta, t=theta * delta / (g * g), **kw)

    @property
    def coupling(self) -> float:
        """Effective atom-atom coupling ``lambda = g**2 / delta``."""
        return self.g * self.g / self.delta

    @property
    def theta(self) -> float:
        return self.coupling * self.t

    @property
    def dispersive_warning(self) -> bool:
        return abs(self.delta) / self.g < DISPERSIVE_RATIO_WARN

    def replace(self, **changes) -> FullModelParams:
        return FullModelParams(**{**self.__dict__, **changes})


@dataclass(frozen=True)
class SpinOperatorSet:
    s_plus: np.ndarray
    s_minus: np.ndarray
    excited_projector: np.ndarray


def spin_operators() -> SpinOperatorSet:
    # index 0 = ground, 1 = excited
    s_plus = np.array([[0, 0], [1, 0]], dtype=complex)
    s_minus = s_plus.conj().T.copy()
    return SpinOperatorSet(s_plus, s_minus, s_plus @ s_minus)


def annihilation(fock_cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, fock_cutoff + 1, dtype=float)), 1).astype(complex)


def effective_hamiltonian_matrix() -> np.ndarray:
    """Dispersive two-atom Hamiltonian divided by ``lambda``.

    Excited-state Stark shifts plus the flip-flop exchange
    ``S1+ S2- + S1- S2+``.
    """
    sp = spin_operators()
    eye = np.eye(2)
    h = np.kron(sp.excited_projector, eye) + np.kron(eye, sp.excited_projector)
    flip = np.kron(sp.s_plus, sp.s_minus)
    return h + flip + flip.conj().T


def effective_unitary(theta: float | EffectiveGateParams) -> np.ndarray:
    """Closed-form propagator of the dispersive gate at angle ``theta``.

    ``|00> -> |00>``, ``|11> -> exp(-2i theta)|11>``, and on the
    single-excitation pair ``exp(-i theta)(cos theta |same> - i sin theta |flipped>)``.
    """
    if isinstance(theta, EffectiveGateParams):
        theta = theta.theta
    phase = np.exp(-1j * theta)
    c, s = math.cos(theta), math.sin(theta)
    U = np.zeros((4, 4), dtype=complex)
    U[0, 0] = 1.0
    U[1, 1] = U[2, 2] = phase * c
    U[1, 2] = U[2, 1] = -1j * phase * s
    U[3, 3] = phase * phase
    return U


def excitation_operator(fock_cutoff: int) -> np.ndarray:
    """Total excitation number: excited atoms plus photons."""
    sp = spin_operators()
    n_cav = fock_cutoff + 1
    a = annihilation(fock_cutoff)
    e2, ec = np.eye(2), np.eye(n_cav)
    return (np.kron(np.kron(sp.excited_projector, e2), ec)
            + np.kron(np.kron(e2, sp.excited_projector), ec)
            + np.kron(np.kron(e2, e2), a.conj().T @ a))


def tavis_cummings_hamiltonian(p: FullModelParams, frame: str = "cavity") -> np.ndarray:
    """Two atoms coupled to one cavity mode, rotating-wave form.

    ``frame="cavity"`` rotates at the cavity frequency:
    ``H = delta * sum_k |1><1|_k + g * sum_k (a^dag S_k^- + a S_k^+)``.

    ``frame="atom"`` rotates at the atomic frequency, i.e. subtracts
    ``delta * N_exc``. Since ``N_exc`` is conserved the two frames differ only
    by the phase ``exp(-i delta t N_exc)``; the atom frame is the one in which
    the dispersive gate is stated and has the slowest time scales.
    """
    sp = spin_operators()
    n_cav = p.fock_cutoff + 1
    a = annihilation(p.fock_cutoff)
    e2, ec = np.eye(2), np.eye(n_cav)

    def on_atom(op, k):
        return np.kron(np.kron(op, e2) if k == 0 else np.kron(e2, op), ec)

    cav = np.kron(np.kron(e2, e2), a)
    H = np.zeros((4 * n_cav, 4 * n_cav), dtype=complex)
    for k in (0, 1):
        H += p.delta * on_atom(sp.excited_projector, k)
        H += p.g * (cav.conj().T @ on_atom(sp.s_minus, k) + cav @ on_atom(sp.s_plus, k))
    if frame == "atom":
        H -= p.delta * excitation_operator(p.fock_cutoff)
    elif frame != "cavity":
        raise ValidationError(f"unknown frame {frame!r}; expected 'cavity' or 'atom'")
    return H


def _check_hermitian(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValidationError(f"Hamiltonian must be square, got shape {H.shape}")
    if np.max(np.abs(H - H.conj().T), initial=0.0) > STATE_TOL:
        raise ValidationError("Hamiltonian is not Hermitian within 1e-10")
    return H


def propagator(H: np.ndarray, t: float) -> np.ndarray:
    """``exp(-iHt)`` by Hermitian eigendecomposition."""
    H = _check_hermitian(H)
    w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def evolve_exact(H: np.ndarray, t: float, s: StateVector) -> StateVector:
    H = _check_hermitian(H)
    if H.shape[0] != s.dim:
        raise ValidationError(f"Hamiltonian dimension {H.shape[0]} does not match state dimension {s.dim}")
    w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
    amps = v @ (np.exp(-1j * w * t) * (v.conj().T @ s.amplitudes))
    # eigh round-off can leave ~1e-15 norm error; keep the invariant tight
    return StateVector(s.labels, amps / np.linalg.norm(amps))


def _rk4(rhs, r: np.ndarray, t: float, steps: int) -> np.ndarray:
    dt = t / steps
    for i in range(steps):
        s = i * dt
        k1 = rhs(s, r)
        k2 = rhs(s + 0.5 * dt, r + 0.5 * dt * k1)
        k3 = rhs(s + 0.5 * dt, r + 0.5 * dt * k2)
        k4 = rhs(s + dt, r + dt * k3)
        r = r + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return r


def lindblad_propagate(H: np.ndarray, collapse: Sequence[np.ndarray], t: float, steps: int,
                       rhos: np.ndarray, picture: str = "interaction") -> np.ndarray:
    """Array-level Lindblad integrator behind :func:`lindblad_evolve`.

    ``rhos`` has shape ``(..., d, d)``; leading axes are a batch of
    independent initial conditions. No validation of the output.
    """
    H = _check_hermitian(H)
    if steps < 1 or int(steps) != steps:
        raise ValidationError(f"steps must be a positive integer, got {steps}")
    steps = int(steps)
    rhos = np.asarray(rhos, dtype=complex)
    d = rhos.shape[-1]
    if H.shape[0] != d:
        raise ValidationError(f"Hamiltonian dimension {H.shape[0]} does not match state dimension {d}")
    Ls = [np.asarray(L, dtype=complex) for L in collapse]
    for L in Ls:
        if L.shape != (d, d):
            raise ValidationError(f"collapse operator shape {L.shape} does not match dimension {d}")

    # batch stored as (d, B, d) so every product is one 2-D matrix multiply
    batch_shape = rhos.shape[:-2]
    X = rhos.reshape(-1, d, d).transpose(1, 0, 2).copy()
    nb = X.shape[1]

    def left(A, Y):
        return (A @ Y.reshape(d, -1)).reshape(d, nb, d)

    def right(Y, A):
        return (Y.reshape(-1, d) @ A).reshape(d, nb, d)

    if picture == "schrodinger":
        # non-Hermitian effective generator folds the anticommutator in
        G = -1j * H
        for L in Ls:
            G = G - 0.5 * (L.conj().T @ L)
        Gd = G.conj().T

        def rhs(_s, Y):
            out = left(G, Y) + right(Y, Gd)
            for L in Ls:
                out += left(L, right(Y, L.conj().T))
            return out

        X = _rk4(rhs, X, t, steps)
    elif picture == "interaction":
        w, V = np.linalg.eigh(0.5 * (H + H.conj().T))
        Vd = V.conj().T
        Ls_eig = [Vd @ L @ V for L in Ls]
        gaps = w[:, None] - w[None, :]

        def rhs(s, Y):
            # rho_I(s) = exp(iHs) rho exp(-iHs), written in the eigenbasis of H
            ph = np.exp(1j * gaps * s)
            out = np.zeros_like(Y)
            for L0 in Ls_eig:
                L = ph * L0
                Ld = L.conj().T
                LdL = Ld @ L
                out += left(L, right(Y, Ld)) - 0.5 * (left(LdL, Y) + right(Y, LdL))
            return out

        X = right(left(Vd, X), V)
        if Ls:
            X = _rk4(rhs, X, t, steps)
        back = V * np.exp(-1j * w * t)
        X = right(left(back, X), back.conj().T)
    else:
        raise ValidationError(f"unknown picture {picture!r}; expected 'interaction' or 'schrodinger'")
    return X.transpose(1, 0, 2).reshape(batch_shape + (d, d))


def lindblad_evolve(H: np.ndarray, collapse: Sequence[np.ndarray], t: float, steps: int,
                    rho: DensityMatrix, picture: str = "interaction") -> DensityMatrix:
    """Fixed-step RK4 integration of the Lindblad master equation.

    ``drho/dt = -i[H, rho] + sum_j (L_j rho L_j^dag - 1/2 {L_j^dag L_j, rho})``
    over duration ``t`` in ``steps`` equal steps. The result is Hermitized
    once at the end.

    With ``picture="interaction"`` (default) the coherent part is removed
    exactly through the eigendecomposition of ``H`` and RK4 integrates only
    the dissipator in the rotating frame, so the step error scales with the
    decay rates rather than with the detuning. ``picture="schrodinger"``
    integrates the full right-hand side directly.
    """
    r = lindblad_propagate(H, collapse, t, steps, rho.matrix, picture)
    return _finish_density(rho.labels, r, steps)


def _finish_density(labels, r: np.ndarray, steps: int) -> DensityMatrix:
    r = 0.5 * (r + r.conj().T)
    tr = np.trace(r).real
    if not abs(tr - 1.0) <= TRACE_DRIFT_LIMIT:
        raise StepSizeError(f"trace drifted to {tr:.12g} over {steps} steps; increase the step count")
    r = r / tr
    lowest = np.linalg.eigvalsh(r).min()
    if lowest < -PSD_TOL:
        raise StepSizeError(f"result has eigenvalue {lowest:.3g} after {steps} steps; increase the step count")
    return DensityMatrix(labels, r)
