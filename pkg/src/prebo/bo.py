"""Born-Oppenheimer reference dynamics in the three singlet CSFs.

Surfaces and couplings come from diagonalizing the 3x3 CSF Hamiltonian on
a uniform R grid; nuclear packets on each surface are propagated with a
sinc-DVR Born-Huang Hamiltonian.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.linalg import eigh

from prebo.dvr import derivative_matrix, kinetic_matrix
from prebo.electronic import INTEGRAL_LABELS, ModelParams, OrbitalSet, TaylorFit, nuclear_potential
from prebo.engine import PropagationResult
from prebo.fermion import ladder_matrices, occupation_index
from prebo.tomography import DensityGrid

logger = logging.getLogger(__name__)

N_CSF = 3
DVR_POINTS = 1500
DVR_RANGE = (-1.0, 1.0)
MAX_DVR_DIM = 6000


def csf_vectors() -> np.ndarray:
    """CSFs as columns in the 16-dim qubit space: |1100>, |0011>, open-shell singlet."""
    vecs = np.zeros((16, N_CSF))
    vecs[occupation_index("1100"), 0] = 1.0
    vecs[occupation_index("0011"), 1] = 1.0
    vecs[occupation_index("1001"), 2] = 1.0 / np.sqrt(2.0)
    vecs[occupation_index("0110"), 2] = -1.0 / np.sqrt(2.0)
    return vecs


def _csf_matrix(g: dict[str, float]) -> np.ndarray:
    s2 = np.sqrt(2.0)
    h13 = s2 * (g["h_ab"] + g["v_aaab"])
    h23 = s2 * (g["h_ab"] + g["v_abbb"])
    return np.array([
        [2 * g["h_aa"] + g["v_aaaa"], g["v_aabb"], h13],
        [g["v_aabb"], 2 * g["h_bb"] + g["v_bbbb"], h23],
        [h13, h23, g["h_aa"] + g["h_bb"] + g["v_abab"] + g["v_aabb"]],
    ])


def _check_fit(fit: TaylorFit):
    missing = [lab for lab in INTEGRAL_LABELS if lab not in fit.v0]
    if missing:
        raise KeyError(f"missing integral labels: {', '.join(missing)}")


def build_csf_hamiltonian(fit: TaylorFit, R: float) -> np.ndarray:
    """Electronic Hamiltonian in the CSF basis at nuclear position ``R``."""
    _check_fit(fit)
    return _csf_matrix({lab: float(fit.value(lab, R)) for lab in INTEGRAL_LABELS})


def csf_hamiltonian_slope(fit: TaylorFit) -> np.ndarray:
    """dH/dR of the CSF Hamiltonian (constant for linear integral models)."""
    _check_fit(fit)
    return _csf_matrix(dict(fit.v1))


@dataclass
class BOSurfaceSet:
    """BO energies, CSF->BO rotations and derivative couplings on a grid.

    ``U[k, :, j]`` is BO state j in the CSF basis at ``R[k]``;
    ``D[k, i, j]`` is <i|d/dR j>.
    """

    R: np.ndarray
    E: np.ndarray
    U: np.ndarray
    D: np.ndarray | None = None

    @property
    def spacing(self) -> float:
        return float(self.R[1] - self.R[0])

    def rows(self):
        if self.D is None:
            raise ValueError("couplings not computed")
        header = ["R", "E1", "E2", "E3", "D12", "D13", "D23"]
        cols = [self.R, *self.E.T, self.D[:, 0, 1], self.D[:, 0, 2], self.D[:, 1, 2]]
        return header, np.column_stack(cols)


def dvr_grid(n: int = DVR_POINTS, lo: float = DVR_RANGE[0], hi: float = DVR_RANGE[1]) -> np.ndarray:
    return np.linspace(lo, hi, n)


def diagonalize_bo(fit: TaylorFit, R_grid: np.ndarray | None = None, degeneracy_tol: float = 1e-12) -> BOSurfaceSet:
    """Ascending BO surfaces with columns sign-aligned along R from the left end."""
    R = dvr_grid() if R_grid is None else np.asarray(R_grid, dtype=float)
    if R.size > 2 and not np.allclose(np.diff(R), R[1] - R[0], rtol=1e-9, atol=1e-12):
        raise ValueError("R grid must be uniform")
    E = np.empty((R.size, N_CSF))
    U = np.empty((R.size, N_CSF, N_CSF))
    for k, Rk in enumerate(R):
        e, u = np.linalg.eigh(build_csf_hamiltonian(fit, Rk))
        if np.any(np.diff(e) < degeneracy_tol):
            u = u * np.where(u[0] < 0, -1.0, 1.0)
            logger.warning("degenerate BO states at R=%.6f; signs fixed by the CSF-1 amplitude", Rk)
        elif k > 0:
            for j in range(N_CSF):
                if u[:, j] @ U[k - 1, :, j] < 0:
                    u[:, j] *= -1.0
        E[k], U[k] = e, u
    return BOSurfaceSet(R, E, U)


def compute_nacs(surfaces: BOSurfaceSet, fit: TaylorFit | None = None, method: str = "analytic") -> np.ndarray:
    """Derivative couplings D_ij = <i|d/dR j> between BO states.

    ``method="analytic"`` uses u_i^T (dH/dR) u_j / (E_j - E_i), exact for
    the linear integral model; ``"finite-difference"`` differentiates the
    stored rotations with central differences (one-sided at the ends).
    """
    R, U, E = surfaces.R, surfaces.U, surfaces.E
    if method == "analytic":
        if fit is None:
            raise ValueError("analytic couplings need the integral fit")
        dH = csf_hamiltonian_slope(fit)
        num = np.einsum("kai,ab,kbj->kij", U, dH, U)
        gap = E[:, None, :] - E[:, :, None]  # E_j - E_i
        off = ~np.eye(N_CSF, dtype=bool)[None]
        D = np.zeros_like(num)
        np.divide(num, gap, out=D, where=off & (gap != 0))
    elif method == "finite-difference":
        h = surfaces.spacing
        dU = np.gradient(U, h, axis=0, edge_order=1)
        D = np.einsum("kai,kaj->kij", U, dU)
    else:
        raise ValueError(f"unknown coupling method {method!r}")
    D = 0.5 * (D - np.transpose(D, (0, 2, 1)))
    worst = float(np.max(np.abs(D))) * surfaces.spacing
    if worst > 0.5:
        warnings.warn(f"coupling peak undersampled: max |D| dR = {worst:.3f}; refine the R grid")
    surfaces.D = D
    return D


def _subset_indices(subset) -> list[int]:
    idx = sorted({int(s) for s in subset})
    if not idx:
        raise ValueError("state subset is empty")
    if idx[0] < 1 or idx[-1] > N_CSF:
        raise ValueError(f"state subset {subset} outside 1..{N_CSF}")
    return [i - 1 for i in idx]


@dataclass
class BHHamiltonian:
    matrix: np.ndarray
    subset: list[int]
    n_grid: int
    gboa: bool

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def build_bh_hamiltonian(
    surfaces: BOSurfaceSet,
    subset=(1, 2, 3),
    params: ModelParams = ModelParams(),
) -> BHHamiltonian:
    """Sinc-DVR Born-Huang Hamiltonian on the surfaces in ``subset`` (1-based).

    Each block carries T + (E_i + V_nn) delta_ij - (1/2M)[D d/dR + d/dR D + D^2]_ij,
    which equals T - (1/M) D d/dR - (1/2M)(dD/dR + D^2). D^2 is formed inside
    the subset, so for a proper subset this is the group-BO approximation.
    """
    idx = _subset_indices(subset)
    if surfaces.D is None:
        raise ValueError("surfaces carry no derivative couplings; call compute_nacs first")
    n = surfaces.R.size
    m = len(idx)
    if m * n > MAX_DVR_DIM:
        raise MemoryError(f"Born-Huang dimension {m * n} exceeds guard {MAX_DVR_DIM}")
    h = surfaces.spacing
    T = kinetic_matrix(n, h, params.M)
    dvr_d = derivative_matrix(n, h)
    Dsub = surfaces.D[:, idx][:, :, idx]
    D2 = np.einsum("kij,kjl->kil", Dsub, Dsub)
    V = nuclear_potential(params, surfaces.R)
    H = np.zeros((m * n, m * n))
    for a, i in enumerate(idx):
        for b in range(m):
            d = Dsub[:, a, b]
            blk = -(d[:, None] * dvr_d + dvr_d * d[None, :]) / (2.0 * params.M)
            blk[np.diag_indices(n)] -= D2[:, a, b] / (2.0 * params.M)
            if a == b:
                blk += T
                blk[np.diag_indices(n)] += surfaces.E[:, i] + V
            H[a * n:(a + 1) * n, b * n:(b + 1) * n] = blk
    dev = np.max(np.abs(H - H.T))
    if dev > 1e-10:
        raise ValueError(f"Born-Huang matrix not symmetric (deviation {dev:.2e})")
    H = 0.5 * (H + H.T)
    return BHHamiltonian(H, idx, n, gboa=m < N_CSF)


@dataclass
class DVRState:
    """Amplitudes ``(n_states, n_grid)`` on the DVR points for the chosen BO states."""

    amplitudes: np.ndarray
    subset: list[int]
    R: np.ndarray
    discarded: float = 0.0
    meta: dict = field(default_factory=dict)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def flat(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def full(self, n_states: int = N_CSF) -> np.ndarray:
        """Amplitudes padded to all BO states."""
        out = np.zeros((n_states, self.R.size), dtype=complex)
        out[self.subset] = self.amplitudes
        return out


def initial_state_bo(
    surfaces: BOSurfaceSet,
    R0: float = 0.1,
    subset=(1, 2, 3),
    params: ModelParams = ModelParams(),
    max_discarded: float = 0.05,
) -> DVRState:
    """Coherent-state Gaussian times CSF-1, projected on the chosen BO states."""
    idx = _subset_indices(subset)
    R = surfaces.R
    var = 1.0 / (2.0 * params.omega * params.M)
    gauss = np.exp(-((R - R0) ** 2) / (4.0 * var))
    gauss /= np.linalg.norm(gauss)
    chi = surfaces.U[:, 0, :].T * gauss  # BO amplitudes of CSF-1 times packet
    kept = chi[idx]
    discarded = float(1.0 - np.sum(kept**2))
    if discarded > max_discarded:
        raise ValueError(f"subset {subset} discards {discarded:.3f} of the initial state (limit {max_discarded})")
    edge = float(np.sum(np.abs(kept[:, [0, -1]]) ** 2))
    if edge > 1e-6:
        warnings.warn(f"initial packet has {edge:.2e} weight on the DVR boundary")
    amps = kept / np.linalg.norm(kept)
    return DVRState(amps.astype(complex), idx, R, discarded)


def propagate_bh(psi0: DVRState, H: BHHamiltonian, t_grid) -> PropagationResult:
    """Spectral propagation of a DVR state; states are stored flattened."""
    vec = psi0.flat()
    if vec.size != H.dim or psi0.subset != H.subset:
        raise ValueError("DVR state does not match the Born-Huang Hamiltonian")
    evals, evecs = eigh(H.matrix)
    coeffs = evecs.T @ vec
    times = np.asarray(t_grid, dtype=float)
    states = (np.exp(-1j * np.outer(times, evals)) * coeffs) @ evecs.T
    drift = float(np.max(np.abs(np.linalg.norm(states, axis=1) - 1.0)))
    if drift > 1e-8:
        raise RuntimeError(f"norm drift {drift:.2e} in Born-Huang propagation")
    return PropagationResult(times, states, "bo", {"subset": H.subset, "evals": evals, "evecs": evecs})


def csf_amplitudes(state_vec: np.ndarray, subset: list[int], surfaces: BOSurfaceSet) -> np.ndarray:
    """CSF amplitudes c_i(R) = sum_j U_ij(R) chi_j(R); shape ``(3, n_grid)``."""
    n = surfaces.R.size
    full = np.zeros((N_CSF, n), dtype=complex)
    full[subset] = np.asarray(state_vec).reshape(len(subset), n)
    return np.einsum("kij,jk->ik", surfaces.U, full)


def csf_fon(csf: np.ndarray) -> np.ndarray:
    """Spin-orbital occupations from CSF amplitudes (DVR-normalized)."""
    w = np.sum(np.abs(csf) ** 2, axis=1)
    a = w[0] + 0.5 * w[2]
    b = w[1] + 0.5 * w[2]
    return np.array([a, a, b, b])


def csf_transition_densities() -> np.ndarray:
    """gamma[i, j, p, q] = <CSF_i| a^dag_p a_q |CSF_j> (spin orbitals p, q)."""
    vecs = csf_vectors()
    lad = ladder_matrices(4)
    gamma = np.zeros((N_CSF, N_CSF, 4, 4))
    for p in range(4):
        for q in range(4):
            op = np.real(lad[p].conj().T @ lad[q])
            gamma[:, :, p, q] = vecs.T @ op @ vecs
    return gamma


def bo_densities(
    state_vec: np.ndarray,
    subset: list[int],
    surfaces: BOSurfaceSet,
    orbitals: OrbitalSet,
    R_stride: int = 1,
    r_stride: int = 1,
    time: float = 0.0,
) -> DensityGrid:
    """Joint density rho(r, R) of a Born-Huang state, including CSF cross terms.

    Normalized so that the integral over r and R equals two.
    """
    csf = csf_amplitudes(state_vec, subset, surfaces)[:, ::R_stride]
    R = surfaces.R[::R_stride]
    dR = surfaces.spacing
    eta = orbitals.interpolate(R)[:, :, ::r_stride]
    gamma = csf_transition_densities()
    # spin-orbital density matrix per R, then fold spins onto spatial orbitals
    g_so = np.einsum("ik,ijpq,jk->kpq", csf.conj(), gamma, csf).real / dR
    g_sp = g_so[:, 0::2, 0::2] + g_so[:, 1::2, 1::2]
    rho = np.einsum("kab,kar,kbr->kr", g_sp, eta, eta)
    return DensityGrid(rho, R, orbitals.r[::r_stride], time=time)


def weyl_count(S: float, n_orbitals: int, n_electrons: int) -> int:
    """Number of spin-S CSFs for ``n_electrons`` in ``n_orbitals`` spin orbitals."""
    if n_orbitals < 0 or n_orbitals % 2:
        raise ValueError(f"spin-orbital count must be even, got {n_orbitals}")
    if not 0 <= n_electrons <= n_orbitals:
        raise ValueError(f"electron count {n_electrons} outside 0..{n_orbitals}")
    two_s = round(2 * S)
    if abs(2 * S - two_s) > 1e-12 or two_s < 0:
        raise ValueError(f"spin {S} is not a non-negative half-integer")
    if (n_electrons - two_s) % 2:
        raise ValueError(f"spin {S} incompatible with {n_electrons} electrons")
    n = n_orbitals // 2
    low = (n_electrons - two_s) // 2
    high = (n_electrons + two_s) // 2 + 1
    if low < 0:
        return 0
    num = (two_s + 1) * comb(n + 1, low) * comb(n + 1, high)
    count, rem = divmod(num, n + 1)
    if rem:
        raise ArithmeticError("non-integer CSF count")
    return count
