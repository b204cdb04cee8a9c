"""Pauli strings and weighted sums of them.

Letters are stored left to right, so ``"XZXI"`` acts with X on qubit 1,
Z on qubit 2 and so on. Matrices use the matching big-endian Kronecker
order: qubit 1 is the most significant bit of the basis index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

PRUNE_TOL = 1e-14

_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# single-letter products: (a, b) -> (phase, letter) with a*b = phase*letter
_PRODUCT = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}


def pauli_matrix(letters: str) -> np.ndarray:
    """Dense matrix of an unweighted Pauli string."""
    return reduce(np.kron, (_MATS[c] for c in letters), np.eye(1, dtype=complex))


@dataclass(frozen=True)
class PauliString:
    letters: str
    coeff: complex = 1.0

    def __post_init__(self):
        bad = set(self.letters) - set("IXYZ")
        if bad or not self.letters:
            raise ValueError(f"invalid Pauli letters {self.letters!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def support(self) -> tuple[int, ...]:
        """Zero-based indices of non-identity letters."""
        return tuple(i for i, c in enumerate(self.letters) if c != "I")

    @property
    def weight(self) -> int:
        return len(self.support)

    def __mul__(self, other):
        if isinstance(other, PauliString):
            if other.n_qubits != self.n_qubits:
                raise ValueError("Pauli strings act on different qubit counts")
            phase = complex(self.coeff) * complex(other.coeff)
            out = []
            for a, b in zip(self.letters, other.letters):
                ph, c = _PRODUCT[a, b]
                phase *= ph
                out.append(c)
            return PauliString("".join(out), phase)
        return PauliString(self.letters, self.coeff * other)

    __rmul__ = __mul__

    def commutes_with(self, other: "PauliString") -> bool:
        anti = sum(1 for a, b in zip(self.letters, other.letters) if a != "I" and b != "I" and a != b)
        return anti % 2 == 0

    def matrix(self) -> np.ndarray:
        return self.coeff * pauli_matrix(self.letters)


class QubitOperator:
    """Linear combination of Pauli strings with complex coefficients.

    Always held in canonical form: one entry per distinct string, sorted by
    letters, with coefficients below ``PRUNE_TOL`` in magnitude removed.
    """

    def __init__(self, terms=(), n_qubits: int | None = None):
        acc: dict[str, complex] = {}
        for t in terms:
            if isinstance(t, PauliString):
                letters, c = t.letters, t.coeff
            else:
                letters, c = t
            if n_qubits is None:
                n_qubits = len(letters)
            elif len(letters) != n_qubits:
                raise ValueError(f"string {letters!r} does not act on {n_qubits} qubits")
            acc[letters] = acc.get(letters, 0.0) + complex(c)
        if n_qubits is None:
            raise ValueError("qubit count needed for an empty operator")
        self.n_qubits = n_qubits
        self.terms: dict[str, complex] = {
            k: acc[k] for k in sorted(acc) if abs(acc[k]) > PRUNE_TOL
        }

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> "QubitOperator":
        return cls([("I" * n_qubits, coeff)])

    @classmethod
    def zero(cls, n_qubits: int) -> "QubitOperator":
        return cls([], n_qubits)

    def canonical(self) -> "QubitOperator":
        return QubitOperator(self.terms.items(), self.n_qubits)

    def __iter__(self):
        return iter(PauliString(k, v) for k, v in self.terms.items())

    def __len__(self):
        return len(self.terms)

    def __getitem__(self, letters: str) -> complex:
        return self.terms.get(letters, 0.0)

    def __eq__(self, other):
        if not isinstance(other, QubitOperator):
            return NotImplemented
        return self.n_qubits == other.n_qubits and self.terms == other.terms

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = QubitOperator.identity(self.n_qubits, other)
        return QubitOperator(list(self.terms.items()) + list(other.terms.items()), self.n_qubits)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, QubitOperator):
            out = []
            for a in self:
                for b in other:
                    p = a * b
                    out.append((p.letters, p.coeff))
            return QubitOperator(out, self.n_qubits)
        return QubitOperator(((k, v * other) for k, v in self.terms.items()), self.n_qubits)

    def __rmul__(self, other):
        return self * other

    def adjoint(self) -> "QubitOperator":
        return QubitOperator(((k, np.conj(v)) for k, v in self.terms.items()), self.n_qubits)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(v.imag) <= tol for v in self.terms.values())

    def close_to(self, other: "QubitOperator", tol: float = 1e-12) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self[k] - other[k]) <= tol for k in keys)

    def matrix(self) -> np.ndarray:
        dim = 2**self.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for k, v in self.terms.items():
            out += v * pauli_matrix(k)
        return out

    def __repr__(self):
        body = " + ".join(f"({v:.6g}) {k}" for k, v in self.terms.items())
        return f"QubitOperator({body or '0'})"
