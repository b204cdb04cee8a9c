"""Exact state-vector dynamics on the truncated Fock (x) qubit space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, expm

from prebo.electronic import ModelParams
from prebo.fermion import ladder_matrices, occupation_index
from prebo.mapping import boson_operators
from prebo.pauli import PauliString, QubitOperator, pauli_matrix

TRUNCATION_TOL = 1e-6


@dataclass
class VibronicState:
    """Amplitudes over (Fock level, qubit bitstring), Fock index major."""

    amplitudes: np.ndarray
    n_fock: int
    n_qubits: int
    omega: float
    M: float

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.n_fock * 2**self.n_qubits,):
            raise ValueError(
                f"amplitude vector of shape {self.amplitudes.shape} does not match "
                f"n_fock={self.n_fock}, n_qubits={self.n_qubits}"
            )

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to ``(n_fock, 2**n_qubits)``."""
        return self.amplitudes.reshape(self.n_fock, 2**self.n_qubits)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def fock_populations(self) -> np.ndarray:
        return np.sum(np.abs(self.tensor()) ** 2, axis=1)

    def top_population(self) -> float:
        return float(self.fock_populations()[-1])

    def with_amplitudes(self, amplitudes: np.ndarray) -> "VibronicState":
        return VibronicState(amplitudes, self.n_fock, self.n_qubits, self.omega, self.M)


@dataclass
class PropagationResult:
    times: np.ndarray
    states: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("propagation times must be strictly increasing")
        if len(self.states) != self.times.size:
            raise ValueError("one state per time point required")

    def __len__(self):
        return self.times.size

    def at(self, t: float, tol: float = 1e-6) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol:
            raise KeyError(f"time {t} not on the propagation grid")
        return self.states[i]


def coherent_displacement(alpha: complex, n_fock: int) -> np.ndarray:
    """exp(alpha b^dag - conj(alpha) b) on the truncated Fock space."""
    b = np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), 1)
    return expm(alpha * b.T - np.conj(alpha) * b)


def prepare_initial_state(
    R0: float = 0.1,
    occupation: str = "1100",
    n_fock: int = 20,
    params: ModelParams = ModelParams(),
) -> VibronicState:
    """Coherent nuclear packet displaced by ``R0`` times an occupation basis state."""
    omega = params.omega
    alpha = R0 * np.sqrt(params.M * omega / 2.0)
    fock = coherent_displacement(alpha, n_fock)[:, 0]
    qubits = np.zeros(2 ** len(occupation), dtype=complex)
    qubits[occupation_index(occupation)] = 1.0
    state = VibronicState(np.kron(fock, qubits), n_fock, len(occupation), omega, params.M)
    if state.top_population() > TRUNCATION_TOL:
        needed = n_fock
        while abs(coherent_displacement(alpha, needed)[-1, 0]) ** 2 > TRUNCATION_TOL:
            needed += 4
        raise ValueError(
            f"Fock truncation too small for alpha={alpha:.4f}: top-level population "
            f"{state.top_population():.2e}; try n_fock >= {needed}"
        )
    return state


class SpectralPropagator:
    """exp(-iHt) from a single cached eigendecomposition of ``H``."""

    def __init__(self, H: np.ndarray, herm_tol: float = 1e-10):
        H = np.asarray(H)
        dev = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
        if dev > herm_tol:
            raise ValueError(f"Hamiltonian not Hermitian: max deviation {dev:.2e}")
        self.energies, self.vectors = eigh(H)

    def evolve(self, psi0: np.ndarray, times) -> np.ndarray:
        coeffs = self.vectors.conj().T @ psi0
        phases = np.exp(-1j * np.outer(np.atleast_1d(times), self.energies))
        return (phases * coeffs) @ self.vectors.T

    def unitary(self, t: float) -> np.ndarray:
        return (self.vectors * np.exp(-1j * self.energies * t)) @ self.vectors.conj().T


def exact_evolve(H: np.ndarray, psi0, t_grid, propagator: SpectralPropagator | None = None) -> PropagationResult:
    """Spectral propagation of ``psi0`` to every time in ``t_grid``."""
    vec = psi0.amplitudes if isinstance(psi0, VibronicState) else np.asarray(psi0, dtype=complex)
    if H.shape != (vec.size, vec.size):
        raise ValueError(f"Hamiltonian shape {H.shape} does not match state dimension {vec.size}")
    prop = propagator or SpectralPropagator(H)
    times = np.asarray(t_grid, dtype=float)
    return PropagationResult(times, prop.evolve(vec, times), "exact")


def time_grid(t_final: float, dt_out: float) -> np.ndarray:
    """Uniform output grid from 0 to ``t_final`` with step close to ``dt_out``."""
    n = max(1, int(round(t_final / dt_out)))
    return np.linspace(0.0, t_final, n + 1)


def _as_matrix(operator, n_fock: int, n_qubits: int) -> np.ndarray:
    if isinstance(operator, PauliString):
        return np.kron(np.eye(n_fock), operator.matrix())
    if isinstance(operator, QubitOperator):
        return np.kron(np.eye(n_fock), operator.matrix())
    if isinstance(operator, str):
        return np.kron(np.eye(n_fock), pauli_matrix(operator))
    mat = np.asarray(operator)
    qdim = 2**n_qubits
    if mat.shape == (qdim, qdim):
        return np.kron(np.eye(n_fock), mat)
    return mat


def expectation(state, operator) -> complex:
    """<psi|O|psi> for a full-space matrix, a qubit-only operator or a Pauli string."""
    if isinstance(state, VibronicState):
        vec, n_fock, n_qubits = state.amplitudes, state.n_fock, state.n_qubits
        mat = _as_matrix(operator, n_fock, n_qubits)
    else:
        vec = np.asarray(state, dtype=complex)
        mat = np.asarray(operator)
    if mat.shape != (vec.size, vec.size):
        raise ValueError(f"operator shape {mat.shape} does not match state dimension {vec.size}")
    return complex(np.vdot(vec, mat @ vec))


def fidelity(psi, phi, norm_tol: float = 1e-8) -> float:
    a = psi.amplitudes if isinstance(psi, VibronicState) else np.asarray(psi)
    b = phi.amplitudes if isinstance(phi, VibronicState) else np.asarray(phi)
    if a.shape != b.shape:
        raise ValueError("states have different dimensions")
    for v in (a, b):
        if abs(np.linalg.norm(v) - 1.0) > norm_tol:
            raise ValueError(f"state not normalized (norm {np.linalg.norm(v):.10f})")
    return float(min(1.0, abs(np.vdot(a, b)) ** 2))


class Observables:
    """Dense observables on the (n_fock, n_qubits) space for one model."""

    def __init__(self, n_fock: int, n_qubits: int, params: ModelParams = ModelParams()):
        self.n_fock, self.n_qubits = n_fock, n_qubits
        qdim = 2**n_qubits
        eye_f, eye_q = np.eye(n_fock), np.eye(qdim)
        _, quad = boson_operators(n_fock)
        to_R = 1.0 / np.sqrt(2.0 * params.omega * params.M)
        self.position = np.kron(quad * to_R, eye_q)
        self.position_sq = np.kron((quad @ quad) * to_R**2, eye_q)
        ladders = ladder_matrices(n_qubits)
        self.occupations = [np.real(np.diag(a.conj().T @ a)) for a in ladders]
        self.number = np.kron(eye_f, sum(a.conj().T @ a for a in ladders))

    def fon(self, vec: np.ndarray) -> np.ndarray:
        """Fractional occupations of every spin orbital."""
        qpop = np.sum(np.abs(vec.reshape(self.n_fock, -1)) ** 2, axis=0)
        return np.array([qpop @ occ for occ in self.occupations])

    def mean_R(self, vec):
        return float(np.real(np.vdot(vec, self.position @ vec)))

    def mean_R2(self, vec):
        return float(np.real(np.vdot(vec, self.position_sq @ vec)))


def trajectory_table(result: PropagationResult, H: np.ndarray, obs: Observables) -> tuple[list[str], np.ndarray]:
    """Rows of t, norm, energy, FON_1..FON_N, <R>, <R^2>."""
    header = ["t", "norm", "energy"] + [f"FON_{p + 1}" for p in range(obs.n_qubits)] + ["R_mean", "R2_mean"]
    rows = []
    for t, vec in zip(result.times, result.states):
        energy = float(np.real(np.vdot(vec, H @ vec)))
        rows.append([t, np.linalg.norm(vec), energy, *obs.fon(vec), obs.mean_R(vec), obs.mean_R2(vec)])
    return header, np.array(rows)


def oscillator_functions(Q: np.ndarray, n_levels: int, omega: float) -> np.ndarray:
    """Unit-mass oscillator eigenfunctions chi_v(Q); shape ``(n_levels, len(Q))``."""
    Q = np.asarray(Q, dtype=float)
    chi = np.empty((n_levels, Q.size))
    chi[0] = (omega / np.pi) ** 0.25 * np.exp(-0.5 * omega * Q**2)
    if n_levels > 1:
        chi[1] = np.sqrt(2.0 * omega) * Q * chi[0]
    for v in range(1, n_levels - 1):
        chi[v + 1] = np.sqrt(2.0 * omega / (v + 1)) * Q * chi[v] - np.sqrt(v / (v + 1)) * chi[v - 1]
    return chi


def nuclear_wavefunction(state: VibronicState, R_grid) -> tuple[np.ndarray, np.ndarray]:
    """Nuclear amplitude per qubit sector and the reduced density on ``R_grid``.

    Amplitudes are scaled so that the density integrates to one over R
    (not over the mass-weighted coordinate).

    Returns:
        ``(psi, density)`` with ``psi`` of shape ``(len(R_grid), 2**n_qubits)``.
    """
    R = np.asarray(R_grid, dtype=float)
    chi = oscillator_functions(np.sqrt(state.M) * R, state.n_fock, state.omega)
    psi = state.M**0.25 * (chi.T @ state.tensor())
    return psi, np.sum(np.abs(psi) ** 2, axis=1)
