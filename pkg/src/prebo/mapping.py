"""Assembly of the qubit-boson Hamiltonian from integral expansions."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from prebo.electronic import INTEGRAL_LABELS, ModelParams, TaylorFit, integral_label, one_electron_label
from prebo.fermion import ANNIHILATE, CREATE, FermionTerm, jordan_wigner_sum, spatial_of, spin_of
from prebo.pauli import QubitOperator, pauli_matrix

N_QUBITS = 4
MAX_DIM = 2**20

#: Pauli-string groups sharing one net coefficient, in Trotter order
STRING_GROUPS: tuple[tuple[str, ...], ...] = (
    ("IIII",),
    ("ZIII", "IZII"),
    ("IIZI", "IIIZ"),
    ("ZZII",),
    ("IIZZ",),
    ("ZIIZ", "IZZI"),
    ("ZIZI", "IZIZ"),
    ("XZXI", "YZYI", "IXZX", "IYZY"),
    ("ZXZX", "ZYZY", "XIXI", "YIYI"),
    ("XZXZ", "YZYZ", "IXIX", "IYIY"),
    ("XXYY", "YYXX", "XYYX", "YXXY"),
)


def electronic_fermion_terms(values: dict[str, float]) -> list[FermionTerm]:
    """Spin-orbital expansion of h a^dag a + 1/2 v a^dag a^dag a a.

    ``values`` maps integral labels to numbers (or ``(c0, c1)`` pairs).
    Spin orbitals 1..4 are (a up, a down, b up, b down).
    """
    missing = [lab for lab in INTEGRAL_LABELS if lab not in values]
    if missing:
        raise KeyError(f"missing integral labels: {', '.join(missing)}")

    def scaled(x, s):
        return (x[0] * s, x[1] * s) if isinstance(x, tuple) else x * s

    orbitals = range(1, N_QUBITS + 1)
    terms = []
    for p in orbitals:
        for q in orbitals:
            if spin_of(p) == spin_of(q):
                h = values[one_electron_label(spatial_of(p), spatial_of(q))]
                terms.append(FermionTerm(((p, CREATE), (q, ANNIHILATE)), h))
    for p in orbitals:
        for q in orbitals:
            for r in orbitals:
                for s in orbitals:
                    if spin_of(p) != spin_of(r) or spin_of(q) != spin_of(s):
                        continue
                    if p == q or r == s:
                        continue
                    label, sign = integral_label(spatial_of(p), spatial_of(q), spatial_of(r), spatial_of(s))
                    ops = ((p, CREATE), (q, CREATE), (s, ANNIHILATE), (r, ANNIHILATE))
                    terms.append(FermionTerm(ops, scaled(values[label], 0.5 * sign)))
    return terms


def electronic_qubit_hamiltonian(values: dict[str, float]) -> QubitOperator:
    """Jordan-Wigner image of the electronic Hamiltonian for scalar integrals."""
    return jordan_wigner_sum(electronic_fermion_terms(values), N_QUBITS)


@dataclass(frozen=True)
class CMQBTerm:
    pauli: str
    V0: float
    V1: float


@dataclass
class CMQBHamiltonianSpec:
    """omega b^dag b + sum_I (V0_I + V1_I (b + b^dag)) P_I.

    Terms are ordered group by group following :data:`STRING_GROUPS`.
    The zero-point energy omega/2 is omitted (global phase).
    """

    omega: float
    terms: list[CMQBTerm]
    n_qubits: int = N_QUBITS
    n_modes: int = 1

    def __post_init__(self):
        if self.n_modes != 1:
            raise ValueError("only a single bosonic mode is supported")
        for t in self.terms:
            if len(t.pauli) != self.n_qubits:
                raise ValueError(f"string {t.pauli!r} does not act on {self.n_qubits} qubits")
            if not (np.isfinite(t.V0) and np.isfinite(t.V1)):
                raise ValueError(f"non-finite coefficient on {t.pauli}")

    def groups(self) -> list[list[CMQBTerm]]:
        """Terms partitioned by :data:`STRING_GROUPS`; strings outside any group trail."""
        by_letters = {t.pauli: t for t in self.terms}
        out, seen = [], set()
        for grp in STRING_GROUPS:
            members = [by_letters[s] for s in grp if s in by_letters]
            if members:
                out.append(members)
                seen.update(grp)
        out.extend([t] for t in self.terms if t.pauli not in seen)
        return out

    def term(self, letters: str) -> CMQBTerm:
        for t in self.terms:
            if t.pauli == letters:
                return t
        return CMQBTerm(letters, 0.0, 0.0)

    def to_json(self) -> str:
        payload = {
            "omega": self.omega,
            "n_qubits": self.n_qubits,
            "terms": [{"pauli": t.pauli, "V0": t.V0, "V1": t.V1} for t in self.terms],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CMQBHamiltonianSpec":
        data = json.loads(text)
        terms = [CMQBTerm(d["pauli"], float(d["V0"]), float(d["V1"])) for d in data["terms"]]
        return cls(float(data["omega"]), terms, int(data["n_qubits"]))


def _ordered(op0: QubitOperator, op1: QubitOperator, coupling_tol: float) -> list[CMQBTerm]:
    letters = set(op0.terms) | set(op1.terms)
    order = [s for grp in STRING_GROUPS for s in grp if s in letters]
    order += sorted(letters - set(order))
    terms = []
    for s in order:
        c0, c1 = op0[s], op1[s]
        if abs(complex(c0).imag) > 1e-12 or abs(complex(c1).imag) > 1e-12:
            raise ValueError(f"non-Hermitian coefficient on {s}")
        v1 = complex(c1).real
        if abs(v1) < coupling_tol:
            v1 = 0.0
        terms.append(CMQBTerm(s, complex(c0).real, v1))
    return terms


def build_molecular_qubit_hamiltonian(
    fit: TaylorFit,
    params: ModelParams = ModelParams(),
    coupling_tol: float = 1e-10,
) -> CMQBHamiltonianSpec:
    """Map the linearized electronic Hamiltonian onto one mode and four qubits.

    The slope of each integral multiplies R = (b + b^dag) / sqrt(2 omega M).
    Boson couplings below ``coupling_tol`` are set to zero so that purely
    electronic strings compile to plain qubit rotations.
    """
    missing = [lab for lab in INTEGRAL_LABELS if lab not in fit.v0 or lab not in fit.v1]
    if missing:
        raise KeyError(f"missing integral labels: {', '.join(missing)}")
    omega = params.omega
    to_mode = 1.0 / np.sqrt(2.0 * omega * params.M)
    op0 = electronic_qubit_hamiltonian({lab: fit.v0[lab] for lab in INTEGRAL_LABELS})
    op1 = electronic_qubit_hamiltonian({lab: fit.v1[lab] * to_mode for lab in INTEGRAL_LABELS})
    return CMQBHamiltonianSpec(omega, _ordered(op0, op1, coupling_tol))


def boson_operators(n_fock: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated number operator and position-like quadrature b + b^dag."""
    if n_fock < 2:
        raise ValueError(f"n_fock must be at least 2, got {n_fock}")
    b = np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), 1)
    return np.diag(np.arange(n_fock, dtype=float)), b + b.T


def symbolic_matrix(spec: CMQBHamiltonianSpec | QubitOperator, n_fock: int) -> np.ndarray:
    """Dense Hamiltonian on Fock (x) qubits, Fock index major."""
    n_qubits = spec.n_qubits
    dim = n_fock * 2**n_qubits
    if dim > MAX_DIM:
        raise MemoryError(f"matrix dimension {dim} exceeds guard {MAX_DIM}")
    num, quad = boson_operators(n_fock)
    eye_f = np.eye(n_fock)
    if isinstance(spec, QubitOperator):
        h = np.kron(eye_f, spec.matrix())
    else:
        h = np.kron(spec.omega * num, np.eye(2**n_qubits)).astype(complex)
        for t in spec.terms:
            p = pauli_matrix(t.pauli)
            h += np.kron(t.V0 * eye_f + t.V1 * quad, p)
    return 0.5 * (h + h.conj().T)
