"""Second-quantized fermion operators and the Jordan-Wigner encoding.

Spin orbitals are numbered from 1. Qubit state |1> means occupied, so
a_p = Z...Z (X_p + i Y_p)/2 lowers the occupation of orbital p.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from prebo.pauli import QubitOperator

CREATE = "+"
ANNIHILATE = "-"


@dataclass(frozen=True)
class FermionTerm:
    """Coefficient times an ordered product of ladder operators.

    ``ops`` is a tuple of ``(orbital, action)`` with orbital indices from 1
    and action ``"+"`` (create) or ``"-"`` (annihilate), applied as written
    left to right. ``coeff`` is a scalar or ``(c0, c1)`` for a degree-1
    boson polynomial ``c0 + c1 (b + b^dagger)``.
    """

    ops: tuple[tuple[int, str], ...]
    coeff: complex | tuple[float, float] = 1.0

    def __post_init__(self):
        for orb, act in self.ops:
            if act not in (CREATE, ANNIHILATE):
                raise ValueError(f"unknown ladder action {act!r}")
            if not isinstance(orb, (int, np.integer)) or orb < 1:
                raise ValueError(f"orbital index must be a positive integer, got {orb!r}")
        if isinstance(self.coeff, tuple) and len(self.coeff) != 2:
            raise ValueError("boson polynomial coefficients are limited to degree 1")

    def polynomial(self) -> tuple[complex, complex]:
        if isinstance(self.coeff, tuple):
            return complex(self.coeff[0]), complex(self.coeff[1])
        return complex(self.coeff), 0.0j


def _ladder(p: int, n_qubits: int, action: str) -> QubitOperator:
    if not 1 <= p <= n_qubits:
        raise ValueError(f"orbital {p} out of range for {n_qubits} qubits")
    head = "Z" * (p - 1)
    tail = "I" * (n_qubits - p)
    sign = 1j if action == ANNIHILATE else -1j
    return QubitOperator([(head + "X" + tail, 0.5), (head + "Y" + tail, 0.5 * sign)], n_qubits)


def annihilation(p: int, n_qubits: int) -> QubitOperator:
    return _ladder(p, n_qubits, ANNIHILATE)


def creation(p: int, n_qubits: int) -> QubitOperator:
    return _ladder(p, n_qubits, CREATE)


def jordan_wigner(term: FermionTerm, n_qubits: int) -> QubitOperator | tuple[QubitOperator, QubitOperator]:
    """Pauli image of a fermion term.

    Scalar coefficients give one operator; polynomial coefficients give the
    pair ``(constant part, (b + b^dagger) part)``.
    """
    product = reduce(
        lambda acc, op: acc * _ladder(op[0], n_qubits, op[1]),
        term.ops,
        QubitOperator.identity(n_qubits),
    )
    if isinstance(term.coeff, tuple):
        c0, c1 = term.polynomial()
        return product * c0, product * c1
    return product * term.coeff


def jordan_wigner_sum(terms, n_qubits: int) -> QubitOperator:
    out = QubitOperator.zero(n_qubits)
    for t in terms:
        out = out + jordan_wigner(t, n_qubits)
    return out


def ladder_matrices(n_qubits: int) -> list[np.ndarray]:
    """Dense annihilation matrices a_1..a_N in big-endian qubit order."""
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    eye = np.eye(2, dtype=complex)
    mats = []
    for p in range(n_qubits):
        factors = [z] * p + [sm] + [eye] * (n_qubits - p - 1)
        mats.append(reduce(np.kron, factors))
    return mats


def number_operator(n_qubits: int) -> QubitOperator:
    return jordan_wigner_sum((FermionTerm(((p, CREATE), (p, ANNIHILATE))) for p in range(1, n_qubits + 1)), n_qubits)


def spin_of(p: int) -> int:
    """Spin label of orbital ``p``: 0 for up (odd p), 1 for down (even p)."""
    return (p - 1) % 2


def spatial_of(p: int) -> int:
    return (p - 1) // 2


def sz_operator(n_qubits: int) -> QubitOperator:
    """S_z = 1/2 sum_p (+1 up, -1 down) n_p."""
    terms = [
        FermionTerm(((p, CREATE), (p, ANNIHILATE)), 0.5 if spin_of(p) == 0 else -0.5)
        for p in range(1, n_qubits + 1)
    ]
    return jordan_wigner_sum(terms, n_qubits)


def s2_operator(n_qubits: int) -> QubitOperator:
    """Total spin S^2 = S_- S_+ + S_z (S_z + 1)."""
    n_spatial = n_qubits // 2
    sp = jordan_wigner_sum(
        (FermionTerm(((2 * j + 1, CREATE), (2 * j + 2, ANNIHILATE))) for j in range(n_spatial)), n_qubits
    )
    sz = sz_operator(n_qubits)
    return sp.adjoint() * sp + sz * sz + sz


def occupation_index(bits: str) -> int:
    """Basis index of an occupation bitstring such as ``"1100"``."""
    if set(bits) - {"0", "1"}:
        raise ValueError(f"invalid occupation string {bits!r}")
    return int(bits, 2)

