"""Measurement emulation: Pauli expectations, 1RDM, characteristic functions
and Fourier reconstruction of nuclear and joint electron-nuclear densities.

The momentum ``k`` is conjugate to the nuclear position R, so a sample at
``k`` is the expectation of D(i xi) = exp(i xi (b + b^dag)) with
xi = k / sqrt(2 omega M), which equals exp(i k R).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from prebo.electronic import OrbitalSet
from prebo.engine import VibronicState, nuclear_wavefunction
from prebo.fermion import CREATE, ANNIHILATE, FermionTerm, jordan_wigner, spin_of
from prebo.pauli import QubitOperator, pauli_matrix

N_ORBITALS = 4
UNITARITY_TOL = 1e-6


@dataclass(frozen=True)
class MomentumGrid:
    """Symmetric momentum grid k_j = (j - n_k // 2) dk, j = 0..n_k-1."""

    n_k: int = 250
    dk: float = 1.26

    def __post_init__(self):
        if self.n_k < 2 or not self.dk > 0:
            raise ValueError(f"invalid momentum grid n_k={self.n_k}, dk={self.dk}")

    @property
    def k(self) -> np.ndarray:
        return (np.arange(self.n_k) - self.n_k // 2) * self.dk

    def xi(self, omega: float, M: float) -> np.ndarray:
        return self.k / np.sqrt(2.0 * omega * M)

    @property
    def resolution(self) -> float:
        """Spacing 2 pi / (n_k dk) of the native position grid."""
        return 2.0 * np.pi / (self.n_k * self.dk)

    @property
    def window(self) -> float:
        return 2.0 * np.pi / self.dk

    def positions(self) -> np.ndarray:
        """Native position grid covering one period, centered on R = 0."""
        return (np.arange(self.n_k) - self.n_k // 2) * self.resolution


@dataclass
class RDM1:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        self.matrix = 0.5 * (m + m.conj().T)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def fon(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))


@dataclass
class DensityGrid:
    """Sampled density on an R grid, optionally times an electron grid.

    ``values`` has shape ``(len(R),)`` for nuclear densities and
    ``(len(R), len(r))`` for joint densities.
    """

    values: np.ndarray
    R: np.ndarray
    r: np.ndarray | None = None
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def is_joint(self) -> bool:
        return self.r is not None

    def integral(self) -> float:
        return float(np.trapezoid(self.marginal_R(), self.R))

    def marginal_R(self) -> np.ndarray:
        if not self.is_joint:
            return self.values
        return np.trapezoid(self.values, self.r, axis=1)

    def l1_distance(self, other: "DensityGrid") -> float:
        if self.values.shape != other.values.shape or not np.allclose(self.R, other.R):
            raise ValueError("density grids differ")
        diff = np.abs(self.values - other.values)
        if self.is_joint:
            return float(np.trapezoid(np.trapezoid(diff, self.r, axis=1), self.R))
        return float(np.trapezoid(diff, self.R))

    def rows(self):
        """Table rows: ``(R, rho)`` or ``(r, R, rho)`` with r varying fastest."""
        if not self.is_joint:
            return ["R", "rho"], np.column_stack([self.R, self.values])
        RR, rr = np.meshgrid(self.R, self.r, indexing="ij")
        return ["r", "R", "rho"], np.column_stack([rr.ravel(), RR.ravel(), self.values.ravel()])


def rdm_operator(p: int, q: int, n_qubits: int = N_ORBITALS) -> QubitOperator:
    """Pauli expansion of a^dag_p a_q (orbitals from 1)."""
    return jordan_wigner(FermionTerm(((p, CREATE), (q, ANNIHILATE))), n_qubits)


def measurement_sets(spin_symmetry: bool = True) -> list[tuple[tuple[int, int], str]]:
    """(orbital pair, Pauli string) settings needed for the joint density.

    Diagonal pairs need the identity and one Z string; same-spin
    off-diagonal pairs need the XZX and YZY strings of their Hermitian part.
    Restricting to spin-up orbitals halves the count.
    """
    sets = []
    for p in range(1, N_ORBITALS + 1):
        for q in range(p, N_ORBITALS + 1):
            if spin_of(p) != spin_of(q) or (spin_symmetry and spin_of(p) == 1):
                continue
            hermitian = rdm_operator(p, q) + rdm_operator(q, p)
            sets.extend(((p, q), s) for s in hermitian.terms)
    return sets


class _ExpectationSampler:
    """Exact or binomially sampled Hadamard-test estimates from one generator."""

    def __init__(self, shots: int = 0, seed: int | None = None):
        if shots < 0:
            raise ValueError("shots must be non-negative")
        self.shots = shots
        self.rng = np.random.Generator(np.random.PCG64(seed))

    def __call__(self, value: complex) -> complex:
        if self.shots == 0:
            return complex(value)
        p_re = np.clip(0.5 * (1.0 + value.real), 0.0, 1.0)
        p_im = np.clip(0.5 * (1.0 + value.imag), 0.0, 1.0)
        re = 2.0 * self.rng.binomial(self.shots, p_re) / self.shots - 1.0
        im = 2.0 * self.rng.binomial(self.shots, p_im) / self.shots - 1.0
        return complex(re, im)


def hadamard_test_sample(state, unitary: np.ndarray, shots: int, seed: int | None = None) -> tuple[float, float]:
    """Estimate Re and Im of <psi|U|psi> from ancilla measurements.

    The ancilla reads 0 with probability (1 + Re<U>)/2, or (1 + Im<U>)/2
    when an S^dagger precedes the final Hadamard. ``shots=0`` returns the
    exact values.
    """
    vec = state.amplitudes if isinstance(state, VibronicState) else np.asarray(state, dtype=complex)
    u = np.asarray(unitary)
    if u.shape != (vec.size, vec.size):
        raise ValueError(f"operator shape {u.shape} does not match state dimension {vec.size}")
    dev = np.max(np.abs(u.conj().T @ u - np.eye(vec.size)))
    if dev > 1e-10:
        raise ValueError(f"operator is not unitary (deviation {dev:.2e})")
    if shots < 1 and shots != 0:
        raise ValueError("shots must be >= 1, or 0 for exact values")
    est = _ExpectationSampler(shots, seed)(complex(np.vdot(vec, u @ vec)))
    return est.real, est.imag


def _pauli_expectations(state: VibronicState, strings, sampler: _ExpectationSampler) -> dict[str, complex]:
    rho_q = state.tensor().T @ state.tensor().conj()  # qubit reduced density matrix
    out = {}
    for s in sorted(strings):
        exact = complex(np.trace(rho_q @ pauli_matrix(s)))
        out[s] = sampler(exact)
    return out


def measure_rdm1(state: VibronicState, shots: int = 0, seed: int | None = None) -> RDM1:
    """<a^dag_p a_q> from Pauli-string expectations (sampled when ``shots`` > 0)."""
    ops = {(p, q): rdm_operator(p, q, state.n_qubits) for p in range(1, state.n_qubits + 1) for q in range(1, state.n_qubits + 1)}
    strings = set().union(*(op.terms for op in ops.values()))
    values = _pauli_expectations(state, strings, _ExpectationSampler(shots, seed))
    mat = np.zeros((state.n_qubits, state.n_qubits), dtype=complex)
    for (p, q), op in ops.items():
        mat[p - 1, q - 1] = sum(c * values[s] for s, c in op.terms.items())
    return RDM1(mat)


class DisplacementTable:
    """Blocks of exp(i xi (b + b^dag)) computed in a padded Fock space.

    The generator is exponentiated on ``n_fock + pad`` levels and the
    leading ``n_fock`` block is kept, so high-lying components that a plain
    truncation would reflect back are carried correctly. Weight reaching the
    top padded levels is tracked as the truncation error.
    """

    def __init__(self, n_fock: int, xi: np.ndarray, pad: int | None = None):
        self.xi = np.asarray(xi, dtype=float)
        xmax = float(np.max(np.abs(self.xi))) if self.xi.size else 0.0
        if pad is None:
            pad = int(np.ceil(xmax**2 + 10.0 * xmax + 40.0))
        size = n_fock + pad
        b = np.diag(np.sqrt(np.arange(1, size, dtype=float)), 1)
        vals, vecs = np.linalg.eigh(b + b.T)
        phases = np.exp(1j * np.outer(self.xi, vals))
        head = vecs[:n_fock]
        tail = vecs[-5:]
        self.blocks = np.einsum("fm,km,gm->kfg", head, phases, head)
        edge = np.einsum("tm,km,gm->ktg", tail, phases, head)
        self.leakage = float(np.max(np.sum(np.abs(edge) ** 2, axis=1))) if self.xi.size else 0.0
        if self.leakage > UNITARITY_TOL:
            warnings.warn(
                f"displacement operator lost {self.leakage:.2e} of unitarity at |xi| <= {xmax:.3g}; "
                f"increase the Fock padding"
            )


def _fock_reduced(state: VibronicState, table: DisplacementTable) -> np.ndarray:
    """G[k, s, t] = sum_fg conj(psi[f, s]) D_k[f, g] psi[g, t]."""
    psi = state.tensor()
    return np.einsum("fs,kfg,gt->kst", psi.conj(), table.blocks, psi)


def characteristic_function(
    state: VibronicState,
    pair: tuple[int, int] | None,
    grid: MomentumGrid = MomentumGrid(),
    table: DisplacementTable | None = None,
    shots: int = 0,
    seed: int | None = None,
) -> np.ndarray:
    """Samples C_pq(k) = <a^dag_p a_q (x) D(i xi(k))> on ``grid``.

    ``pair=None`` gives the nuclear-only characteristic function <D>.
    """
    table = table or DisplacementTable(state.n_fock, grid.xi(state.omega, state.M))
    reduced = _fock_reduced(state, table)
    if pair is None:
        op = QubitOperator.identity(state.n_qubits)
    else:
        op = rdm_operator(*pair, state.n_qubits)
    sampler = _ExpectationSampler(shots, seed)
    out = np.zeros(grid.n_k, dtype=complex)
    for s, c in op.terms.items():
        exact = np.einsum("kst,st->k", reduced, pauli_matrix(s))
        out += c * np.array([sampler(v) for v in exact])
    return out


def fourier_density(samples: np.ndarray, grid: MomentumGrid, R: np.ndarray, imag_tol: float = 1e-6) -> np.ndarray:
    """rho(R) = dk / (2 pi) sum_k C(k) exp(-i k R), real part."""
    rho = (grid.dk / (2.0 * np.pi)) * (np.exp(-1j * np.outer(R, grid.k)) @ samples)
    resid = float(np.max(np.abs(rho.imag))) if rho.size else 0.0
    if resid > imag_tol:
        raise ValueError(f"reconstructed density has imaginary residue {resid:.2e}")
    return rho.real


NEGATIVE_FLOOR = 1e-3


def negative_floor(grid: MomentumGrid, shots: int = 0) -> float:
    """Largest tolerated negative density value.

    Exact samples get a fixed numerical floor. Sampled estimates have
    per-component variance at most 1/shots, so the transform carries noise
    of at most dk/(2 pi) sqrt(n_k/shots); five of those are tolerated.
    """
    if shots <= 0:
        return NEGATIVE_FLOOR
    return max(NEGATIVE_FLOOR, 5.0 * grid.dk / (2.0 * np.pi) * np.sqrt(grid.n_k / shots))


def reconstruct_nuclear_density(
    samples: np.ndarray,
    grid: MomentumGrid = MomentumGrid(),
    R: np.ndarray | None = None,
    time: float = 0.0,
    imag_tol: float = 1e-6,
    shots: int = 0,
) -> DensityGrid:
    """Inverse transform of nuclear characteristic-function samples.

    ``shots`` only sets the tolerated negative excursion (see :func:`negative_floor`).
    """
    if len(samples) != grid.n_k:
        raise ValueError("sample count does not match the momentum grid")
    R = grid.positions() if R is None else np.asarray(R, dtype=float)
    rho = fourier_density(np.asarray(samples), grid, R, imag_tol)
    native = grid.positions()
    edge_rho = fourier_density(np.asarray(samples), grid, np.concatenate([native[:3], native[-3:]]), np.inf)
    if np.sum(np.abs(edge_rho)) * grid.resolution > 1e-3:
        warnings.warn("nuclear density reaches the edge of the Fourier window; aliasing likely")
    if np.min(rho) < -negative_floor(grid, shots):
        raise ValueError(f"reconstructed density has negative excursion {np.min(rho):.2e}")
    return DensityGrid(rho, R, time=time, meta={"resolution": grid.resolution})


def default_joint_R(grid: MomentumGrid, orbitals: OrbitalSet) -> np.ndarray:
    """Native Fourier positions inside the orbital table range."""
    R = grid.positions()
    lo, hi = orbitals.R[0], orbitals.R[-1]
    return R[(R >= lo - 1e-12) & (R <= hi + 1e-12)]


def reconstruct_joint_density(
    state: VibronicState,
    orbitals: OrbitalSet,
    grid: MomentumGrid = MomentumGrid(),
    R: np.ndarray | None = None,
    r_stride: int = 1,
    spin_symmetry: bool = True,
    shots: int = 0,
    seed: int | None = None,
    time: float = 0.0,
) -> DensityGrid:
    """rho(r, R) = sum_pq eta_p(r; R) eta_q(r; R) delta_spin gamma_pq(R).

    gamma_pq(R) is reconstructed from characteristic-function samples of the
    Hermitian parts of a^dag_p a_q (orbitals are real). With
    ``spin_symmetry`` only spin-up settings are measured and doubled.
    The result integrates to the electron number.
    """
    if R is None:
        R = default_joint_R(grid, orbitals)
    R = np.asarray(R, dtype=float)
    table = DisplacementTable(state.n_fock, grid.xi(state.omega, state.M))
    reduced = _fock_reduced(state, table)
    sampler = _ExpectationSampler(shots, seed)

    gamma = {}
    for pair, s in measurement_sets(spin_symmetry):
        herm = rdm_operator(*pair) + rdm_operator(*pair[::-1]) if pair[0] != pair[1] else rdm_operator(*pair)
        coeff = herm[s] * (0.5 if pair[0] != pair[1] else 1.0)
        exact = np.einsum("kst,st->k", reduced, pauli_matrix(s))
        samples = coeff * np.array([sampler(v) for v in exact])
        gamma[pair] = gamma.get(pair, 0.0) + fourier_density(samples, grid, R, np.inf)

    eta = orbitals.interpolate(R)[:, :, ::r_stride]
    r = orbitals.r[::r_stride]
    rho = np.zeros((R.size, r.size))
    scale = 2.0 if spin_symmetry else 1.0
    for (p, q), g in gamma.items():
        a, b = (p - 1) // 2, (q - 1) // 2
        prod = eta[:, a] * eta[:, b]
        weight = scale * g * (1.0 if p == q else 2.0)
        rho += weight[:, None] * prod
    if shots <= 0 and rho.size and np.min(rho) < -NEGATIVE_FLOOR:
        raise ValueError(f"reconstructed joint density has negative excursion {np.min(rho):.2e}")
    return DensityGrid(rho, R, r, time=time, meta={"sets": len(measurement_sets(spin_symmetry))})


def statevector_joint_density(
    state: VibronicState,
    orbitals: OrbitalSet,
    R: np.ndarray,
    r_stride: int = 1,
    time: float = 0.0,
) -> DensityGrid:
    """Joint density straight from the nuclear amplitudes (reference oracle)."""
    R = np.asarray(R, dtype=float)
    psi, _ = nuclear_wavefunction(state, R)
    eta = orbitals.interpolate(R)[:, :, ::r_stride]
    gamma = np.zeros((R.size, N_ORBITALS, N_ORBITALS))
    for p in range(1, N_ORBITALS + 1):
        for q in range(1, N_ORBITALS + 1):
            if spin_of(p) != spin_of(q):
                continue
            op = rdm_operator(p, q).matrix()
            gamma[:, p - 1, q - 1] = np.real(np.einsum("rs,st,rt->r", psi.conj(), op, psi))
    rho = np.zeros((R.size, eta.shape[-1]))
    for p in range(N_ORBITALS):
        for q in range(N_ORBITALS):
            rho += gamma[:, p, q][:, None] * eta[:, p // 2] * eta[:, q // 2]
    return DensityGrid(rho, R, orbitals.r[::r_stride], time=time)
