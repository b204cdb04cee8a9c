"""Digital-analog compilation of the Trotterized qubit-boson propagator.

Each Hamiltonian term f(b) P is rotated by single-qubit Cliffords and a
CNOT fan-out onto X of one pivot qubit, where a spin-dependent
displacement pulse exp(-i dt f(b) X_pivot) acts; the Clifford frame is
then undone.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from prebo.engine import PropagationResult
from prebo.mapping import CMQBHamiltonianSpec, CMQBTerm, boson_operators
from prebo.pauli import pauli_matrix

HADAMARD = "H"
PHASE = "S"
PHASE_DAGGER = "Sdg"
CNOT = "CNOT"
ROTATION = "ROT"
SDD = "SDD"
FREE = "FREE"

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.diag([1, 1j])
_SINGLE = {HADAMARD: _H, PHASE: _S, PHASE_DAGGER: _S.conj()}
# basis change taking each letter to X by conjugation, and its inverse
_TO_X = {"X": None, "Y": PHASE_DAGGER, "Z": HADAMARD}
_FROM_X = {"X": None, "Y": PHASE, "Z": HADAMARD}


@dataclass(frozen=True)
class Gate:
    """One digital or analog operation. Qubits are numbered from 1.

    ``ROT`` is exp(-i angle P) for the Pauli string ``string``. ``SDD`` is
    exp(-i dt (V0 + V1 (b + b^dag)) X_pivot); ``pivot=None`` drops the X
    factor (boson-only pulse). ``FREE`` is exp(-i angle b^dag b).
    """

    kind: str
    qubits: tuple[int, ...] = ()
    angle: float = 0.0
    string: str = ""
    V0: float = 0.0
    V1: float = 0.0
    dt: float = 0.0
    mode: int = 1

    def __post_init__(self):
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {self.kind} gate: {self.qubits}")
        for x in (self.angle, self.V0, self.V1, self.dt):
            if not np.isfinite(x):
                raise ValueError(f"non-finite parameter in {self.kind} gate")

    @property
    def pivot(self) -> int | None:
        return self.qubits[0] if self.qubits else None

    def line(self) -> str:
        if self.kind in _SINGLE:
            return f"{self.kind} {self.qubits[0]}"
        if self.kind == CNOT:
            return f"CNOT {self.qubits[0]} {self.qubits[1]}"
        if self.kind == ROTATION:
            return f"ROT {self.string} angle={self.angle:.12g}"
        if self.kind == SDD:
            pivot = self.pivot if self.pivot is not None else "none"
            return f"SDD mode={self.mode} pivot={pivot} V0={self.V0:.12g} V1={self.V1:.12g} dt={self.dt:.12g}"
        return f"FREE mode={self.mode} phase={self.angle:.12g}"


def hadamard(q):
    return Gate(HADAMARD, (q,))


def cnot(control, target):
    return Gate(CNOT, (control, target))


def compile_term(term: CMQBTerm, dt: float) -> list[Gate]:
    """Gate sequence (in time order) for exp(-i dt (V0 + V1 (b + b^dag)) P)."""
    letters = term.pauli
    support = [i + 1 for i, c in enumerate(letters) if c != "I"]
    if not support:
        if term.V1 == 0.0:
            return [Gate(ROTATION, angle=term.V0 * dt, string=letters)]
        return [Gate(SDD, V0=term.V0, V1=term.V1, dt=dt)]
    if term.V1 == 0.0 and len(support) == 1:
        return [Gate(ROTATION, angle=term.V0 * dt, string=letters)]

    pivot, others = support[0], support[1:]
    pre = [Gate(_TO_X[letters[q - 1]], (q,)) for q in support if _TO_X[letters[q - 1]]]
    post = [Gate(_FROM_X[letters[q - 1]], (q,)) for q in reversed(support) if _FROM_X[letters[q - 1]]]
    fan = [cnot(pivot, q) for q in others]
    if term.V1 == 0.0:
        x_pivot = "".join("X" if i + 1 == pivot else "I" for i in range(len(letters)))
        core = Gate(ROTATION, angle=term.V0 * dt, string=x_pivot)
    else:
        core = Gate(SDD, (pivot,), V0=term.V0, V1=term.V1, dt=dt)
    return pre + fan + [core] + fan[::-1] + post


def cnot_count(gates) -> int:
    return sum(1 for g in gates if g.kind == CNOT)


@dataclass(frozen=True)
class GateSchedule:
    """One Trotter step repeated ``n_steps`` times."""

    step: tuple[Gate, ...]
    n_steps: int
    dt: float
    order: int
    n_qubits: int
    ordering: str = "grouped"

    @property
    def total_time(self) -> float:
        return self.n_steps * self.dt

    @property
    def n_analog(self) -> int:
        """Core (pulse or rotation) operations per step, free evolution excluded."""
        return sum(1 for g in self.step if g.kind in (SDD, ROTATION))

    def text(self) -> str:
        head = [
            f"# order={self.order} steps={self.n_steps} dt={self.dt:.12g} "
            f"total={self.total_time:.12g} ordering={self.ordering}",
        ]
        return "\n".join(head + [g.line() for g in self.step]) + "\n"


def step_count(t: float, dt: float) -> tuple[int, float]:
    """Number of steps nearest to t/dt and the step size that lands exactly on t."""
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    n = max(1, int(round(t / dt)))
    return n, t / n


def trotterize(spec: CMQBHamiltonianSpec, t: float, dt: float, order: int = 1) -> GateSchedule:
    """Product-formula schedule reaching time ``t`` in steps of ``dt``.

    Order 1 applies free evolution then every term in spec order; order 2
    is the symmetric (Strang) arrangement of the same factors.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if t <= 0:
        raise ValueError(f"total time must be positive, got {t}")
    if order not in (1, 2):
        raise ValueError(f"unsupported splitting order {order}")
    n = int(round(t / dt))
    if n < 1 or abs(n * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"dt={dt} does not divide t={t}; use step_count() for a commensurate step")

    terms = [term for group in spec.groups() for term in group]
    free = lambda tau: Gate(FREE, angle=spec.omega * tau)  # noqa: E731
    if order == 1:
        step = [free(dt)]
        for term in terms:
            step += compile_term(term, dt)
    else:
        half = 0.5 * dt
        step = [free(half)]
        for term in terms[:-1]:
            step += compile_term(term, half)
        step += compile_term(terms[-1], dt)
        for term in reversed(terms[:-1]):
            step += compile_term(term, half)
        step.append(free(half))
    return GateSchedule(tuple(step), n, dt, order, spec.n_qubits)


@lru_cache(maxsize=16)
def _quadrature_basis(n_fock: int):
    num, quad = boson_operators(n_fock)
    vals, vecs = np.linalg.eigh(quad)
    return np.diag(num).copy(), vals, vecs


def _pulse(n_fock: int, V0: float, V1: float, tau: float) -> np.ndarray:
    _, vals, vecs = _quadrature_basis(n_fock)
    return (vecs * np.exp(-1j * tau * (V0 + V1 * vals))) @ vecs.T


def _one_qubit(mat: np.ndarray, q: int, n_qubits: int) -> np.ndarray:
    return np.kron(np.kron(np.eye(2 ** (q - 1)), mat), np.eye(2 ** (n_qubits - q)))


def _cnot_permutation(c: int, t: int, n_qubits: int) -> np.ndarray:
    """Index map of CNOT on basis states (an involution)."""
    idx = np.arange(2**n_qubits)
    control = (idx >> (n_qubits - c)) & 1
    return np.where(control == 1, idx ^ (1 << (n_qubits - t)), idx)


def apply_gate(gate: Gate, arr: np.ndarray, n_fock: int, n_qubits: int) -> np.ndarray:
    """Apply ``gate`` to the columns of ``arr`` (shape ``(dim, k)`` or ``(dim,)``)."""
    vec = arr.ndim == 1
    a = arr.reshape(n_fock, 2**n_qubits, -1)
    if gate.kind in _SINGLE:
        a = np.einsum("ij,fjk->fik", _one_qubit(_SINGLE[gate.kind], gate.qubits[0], n_qubits), a)
    elif gate.kind == CNOT:
        a = a[:, _cnot_permutation(*gate.qubits, n_qubits), :]
    elif gate.kind == ROTATION:
        rot = np.cos(gate.angle) * np.eye(2**n_qubits) - 1j * np.sin(gate.angle) * pauli_matrix(gate.string)
        a = np.einsum("ij,fjk->fik", rot, a)
    elif gate.kind == FREE:
        num = _quadrature_basis(n_fock)[0]
        a = np.exp(-1j * gate.angle * num)[:, None, None] * a
    elif gate.kind == SDD:
        plus = _pulse(n_fock, gate.V0, gate.V1, gate.dt)
        if gate.pivot is None:
            a = np.einsum("fg,gjk->fjk", plus, a)
        else:
            minus = _pulse(n_fock, -gate.V0, -gate.V1, gate.dt)
            h = _one_qubit(_H, gate.pivot, n_qubits)
            a = np.einsum("ij,fjk->fik", h, a)
            bit = (np.arange(2**n_qubits) >> (n_qubits - gate.pivot)) & 1
            out = np.empty_like(a, dtype=complex)
            out[:, bit == 0] = np.einsum("fg,gjk->fjk", plus, a[:, bit == 0])
            out[:, bit == 1] = np.einsum("fg,gjk->fjk", minus, a[:, bit == 1])
            a = np.einsum("ij,fjk->fik", h, out)
    else:
        raise ValueError(f"unknown gate kind {gate.kind!r}")
    out = a.reshape(n_fock * 2**n_qubits, -1)
    return out[:, 0] if vec else out


def sequence_unitary(gates, n_fock: int, n_qubits: int) -> np.ndarray:
    """Dense product of ``gates`` applied in list (time) order."""
    u = np.eye(n_fock * 2**n_qubits, dtype=complex)
    for g in gates:
        u = apply_gate(g, u, n_fock, n_qubits)
    return u


def propagate_schedule(psi0: np.ndarray, schedule: GateSchedule, n_fock: int, record_every: int = 1) -> PropagationResult:
    """Apply the schedule to ``psi0``, recording every ``record_every`` steps."""
    psi = np.asarray(psi0, dtype=complex)
    if psi.size != n_fock * 2**schedule.n_qubits:
        raise ValueError(f"state dimension {psi.size} does not match n_fock={n_fock}, n_qubits={schedule.n_qubits}")
    times, states = [0.0], [psi.copy()]
    if not schedule.step or schedule.n_steps == 0:
        return PropagationResult(np.array(times), np.array(states), "trotter")
    step = sequence_unitary(schedule.step, n_fock, schedule.n_qubits)
    for n in range(1, schedule.n_steps + 1):
        psi = step @ psi
        if n % record_every == 0 or n == schedule.n_steps:
            times.append(n * schedule.dt)
            states.append(psi.copy())
    return PropagationResult(np.array(times), np.array(states), "trotter", {"dt": schedule.dt, "order": schedule.order})
