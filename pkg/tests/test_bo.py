from itertools import product
from math import comb

import numpy as np
import pytest
from scipy.linalg import expm, null_space

from prebo.bo import (
    BOSurfaceSet,
    DVRState,
    bo_densities,
    build_bh_hamiltonian,
    build_csf_hamiltonian,
    compute_nacs,
    csf_amplitudes,
    csf_fon,
    csf_vectors,
    diagonalize_bo,
    dvr_grid,
    initial_state_bo,
    propagate_bh,
    weyl_count,
)
from prebo.dvr import kinetic_matrix
from prebo.electronic import INTEGRAL_LABELS, ModelParams, TaylorFit, nuclear_potential
from prebo.fermion import number_operator, s2_operator
from prebo.mapping import electronic_qubit_hamiltonian
from prebo.tomography import statevector_joint_density

SAMPLE_R = np.linspace(-1.0, 1.0, 21)


def singlet_pair_basis():
    """Orthonormal basis of the N = 2, S = 0 sector of the 4-qubit Fock space."""
    N = number_operator(4).matrix().real
    S2 = s2_operator(4).matrix().real
    return null_space(np.vstack([N - 2 * np.eye(16), S2]))


# --------------------------------------------------------------- CSF matrix

def test_printed_entries_from_table_values():
    H = build_csf_hamiltonian(TaylorFit.published_table(), 0.0)
    assert H[0, 0] == pytest.approx(2 * (-2.66) + 0.2236, abs=1e-12)
    assert H[0, 0] == pytest.approx(-5.0964, abs=1e-10)
    assert H[0, 1] == pytest.approx(1.5e-6, abs=1e-15)
    np.testing.assert_array_equal(H, H.T)


def test_entries_follow_printed_formulas(fit):
    R = 0.23
    g = {lab: fit.value(lab, R) for lab in INTEGRAL_LABELS}
    H = build_csf_hamiltonian(fit, R)
    s2 = np.sqrt(2)
    assert H[0, 0] == pytest.approx(2 * g["h_aa"] + g["v_aaaa"])
    assert H[1, 1] == pytest.approx(2 * g["h_bb"] + g["v_bbbb"])
    assert H[2, 2] == pytest.approx(g["h_aa"] + g["h_bb"] + g["v_abab"] + g["v_aabb"])
    assert H[0, 2] == pytest.approx(s2 * (g["h_ab"] + g["v_aaab"]))
    assert H[1, 2] == pytest.approx(s2 * (g["h_ab"] + g["v_abbb"]))


def test_computed_matrix_near_table(fit):
    ours = build_csf_hamiltonian(fit, 0.0)
    table = build_csf_hamiltonian(TaylorFit.published_table(), 0.0)
    assert ours[0, 0] == pytest.approx(table[0, 0], rel=2e-2)
    assert ours[2, 2] == pytest.approx(table[2, 2], rel=2e-2)


def test_csf_vectors_are_singlets():
    vecs = csf_vectors()
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(3), atol=1e-15)
    S2 = s2_operator(4).matrix().real
    N = number_operator(4).matrix().real
    np.testing.assert_allclose(S2 @ vecs, 0.0, atol=1e-14)
    np.testing.assert_allclose(N @ vecs, 2 * vecs, atol=1e-14)


@pytest.mark.parametrize("which", ["computed", "table"])
def test_csf_spectrum_equals_fock_sector(fit, which):
    model = fit if which == "computed" else TaylorFit.published_table()
    basis = singlet_pair_basis()
    assert basis.shape[1] == 3
    for R in SAMPLE_R:
        values = {lab: float(model.value(lab, R)) for lab in INTEGRAL_LABELS}
        H = electronic_qubit_hamiltonian(values).matrix()
        sector = np.linalg.eigvalsh(basis.T @ H @ basis)
        csf = np.linalg.eigvalsh(build_csf_hamiltonian(model, R))
        assert np.max(np.abs(sector - csf)) <= 1e-10
        # the CSF vectors span the same sector, so the matrices agree entrywise
        vecs = csf_vectors()
        np.testing.assert_allclose(vecs.T @ H @ vecs, build_csf_hamiltonian(model, R), atol=1e-12)


def test_missing_label_raises():
    with pytest.raises(KeyError):
        build_csf_hamiltonian(TaylorFit({"h_aa": 0.0}, {"h_aa": 0.0}), 0.0)


# --------------------------------------------------------------- surfaces and couplings

def test_surface_grid_matches_dvr():
    R = dvr_grid()
    assert R.size == 1500 and R[0] == -1.0 and R[-1] == 1.0


def test_surfaces_ordered_and_orthogonal(bo_surfaces):
    E, U = bo_surfaces.E, bo_surfaces.U
    assert np.all(np.diff(E, axis=1) >= 0)
    eye = np.eye(3)
    assert max(np.max(np.abs(u.T @ u - eye)) for u in U) <= 1e-12


def test_surfaces_mirror_symmetric(bo_surfaces):
    np.testing.assert_allclose(bo_surfaces.E, bo_surfaces.E[::-1], atol=1e-8)


def test_sign_chain_is_continuous(bo_surfaces):
    U = bo_surfaces.U
    overlaps = np.einsum("kai,kai->ki", U[1:], U[:-1])
    assert overlaps.min() > 0


def test_couplings_antisymmetric(bo_surfaces):
    D = bo_surfaces.D
    np.testing.assert_allclose(D, -np.transpose(D, (0, 2, 1)), atol=1e-14)
    assert np.max(np.abs(np.einsum("kii->ki", D))) <= 1e-10


def test_upper_pair_coupling_dominates(bo_surfaces):
    D, R = bo_surfaces.D, bo_surfaces.R
    mid = np.argmin(np.abs(R))
    peak = np.argmax(np.abs(D[:, 1, 2]))
    assert abs(R[peak]) < 0.05
    assert abs(D[mid, 1, 2]) > 100 * abs(D[mid, 0, 1])


def test_coupling_integral_matches_mixing_angle(fit, bo_surfaces):
    # the 2-3 peak is narrow, so across a small window the pair rotates in its own plane
    R = np.linspace(-0.02, 0.02, 4001)
    surf = diagonalize_bo(fit, R)
    D = compute_nacs(surf, fit)
    u2, u3 = surf.U[0, :, 1], surf.U[0, :, 2]
    theta = np.unwrap(np.arctan2(surf.U[:, :, 1] @ u3, surf.U[:, :, 1] @ u2))
    leak = np.trapezoid(np.abs(D[:, 0, 1]) + np.abs(D[:, 0, 2]), R)
    assert abs(-np.trapezoid(D[:, 1, 2], R) - (theta[-1] - theta[0])) <= leak + 1e-3
    total = np.trapezoid(bo_surfaces.D[:, 1, 2], bo_surfaces.R)
    assert abs(total) == pytest.approx(np.pi / 2, abs=0.1)


def test_couplings_transport_the_rotation(fit):
    # integrate dU/dR = U D with exponential midpoint steps and compare to direct diagonalization
    R = np.linspace(-0.3, 0.3, 6001)
    surf = diagonalize_bo(fit, R)
    D = compute_nacs(surf, fit)
    U = surf.U[0].copy()
    for k in range(R.size - 1):
        U = U @ expm(0.5 * (D[k] + D[k + 1]) * (R[k + 1] - R[k]))
    np.testing.assert_allclose(U, surf.U[-1], atol=2e-3)


def test_analytic_and_finite_difference_couplings_agree(fit):
    R = np.linspace(-1, 1, 4001)
    surf = diagonalize_bo(fit, R)
    analytic = compute_nacs(surf, fit).copy()
    numeric = compute_nacs(surf, method="finite-difference")
    inner = slice(1, -1)
    scale = np.max(np.abs(analytic[:, 1, 2]))
    # central differences resolve the narrow 2-3 peak to a few percent and the rest far better
    assert np.max(np.abs(analytic[inner] - numeric[inner])) <= 0.05 * scale
    for i, j in ((0, 1), (0, 2), (1, 2)):
        assert np.trapezoid(numeric[inner, i, j], R[inner]) == pytest.approx(
            np.trapezoid(analytic[inner, i, j], R[inner]), abs=5e-3
        )


def test_coupling_guards(fit):
    surf = diagonalize_bo(fit, np.linspace(-1, 1, 11))
    with pytest.raises(ValueError):
        compute_nacs(surf)
    with pytest.raises(ValueError):
        compute_nacs(surf, fit, method="spline")
    with pytest.warns(UserWarning, match="undersampled"):
        compute_nacs(surf, fit)
    with pytest.raises(ValueError, match="uniform"):
        diagonalize_bo(fit, np.array([0.0, 0.1, 0.3]))


def test_surface_rows(bo_surfaces):
    header, rows = bo_surfaces.rows()
    assert header == ["R", "E1", "E2", "E3", "D12", "D13", "D23"]
    assert rows.shape == (1500, 7)


# --------------------------------------------------------------- Born-Huang dynamics

def test_free_gaussian_spreading():
    M, width, t = 1836.0, 0.05, 20.0
    R = dvr_grid()
    T = kinetic_matrix(R.size, R[1] - R[0], M)
    evals, evecs = np.linalg.eigh(T)
    psi0 = np.exp(-(R**2) / (4 * width**2)).astype(complex)
    psi0 /= np.linalg.norm(psi0)
    psi = evecs @ (np.exp(-1j * evals * t) * (evecs.T @ psi0))
    grown = width**2 * (1 + (t / (2 * M * width**2)) ** 2)
    density = np.exp(-(R**2) / (2 * grown)) / np.sqrt(2 * np.pi * grown) * (R[1] - R[0])
    np.testing.assert_allclose(np.abs(psi) ** 2, density, atol=1e-6 * density.max())


def test_single_flat_surface_is_free_particle():
    R = dvr_grid(300)
    surf = BOSurfaceSet(R, np.zeros((R.size, 3)), np.tile(np.eye(3), (R.size, 1, 1)), np.zeros((R.size, 3, 3)))
    params = ModelParams()
    bh = build_bh_hamiltonian(surf, (1,), params)
    shifted = bh.matrix - np.diag(nuclear_potential(params, R))
    np.testing.assert_allclose(shifted, kinetic_matrix(R.size, surf.spacing, params.M), atol=1e-14)


def test_subset_validation(bo_surfaces):
    for bad in ((), (0,), (4,)):
        with pytest.raises(ValueError):
            build_bh_hamiltonian(bo_surfaces, bad)
    bare = BOSurfaceSet(bo_surfaces.R, bo_surfaces.E, bo_surfaces.U)
    with pytest.raises(ValueError, match="couplings"):
        build_bh_hamiltonian(bare)


def test_initial_state_projection(bo_full, bo_gboa):
    assert bo_full.psi0.discarded == pytest.approx(0.0, abs=1e-12)
    assert 0.0 < bo_gboa.psi0.discarded <= 0.05
    for run in (bo_full, bo_gboa):
        assert run.psi0.norm() == pytest.approx(1.0, abs=1e-12)


def test_ground_state_alone_is_rejected(bo_surfaces):
    with pytest.raises(ValueError, match="discards"):
        initial_state_bo(bo_surfaces, 0.1, (1,))


def test_initial_csf_character(bo_full, bo_surfaces):
    csf = csf_amplitudes(bo_full.psi0.flat(), bo_full.psi0.subset, bo_surfaces)
    np.testing.assert_allclose(np.sum(np.abs(csf) ** 2, axis=1), [1, 0, 0], atol=1e-12)


def test_full_propagation_conserves_norm_and_energy(bo_full):
    states = bo_full.result.states
    assert np.max(np.abs(np.linalg.norm(states, axis=1) - 1)) <= 1e-8
    H = bo_full.H.matrix
    energy = np.real(np.einsum("ti,ij,tj->t", states.conj(), H, states))
    assert np.max(np.abs(energy - energy[0])) <= 1e-6 * abs(energy[0])
    np.testing.assert_allclose(states[0], bo_full.psi0.flat(), atol=1e-12)


def test_state_mismatch_rejected(bo_full, bo_gboa):
    with pytest.raises(ValueError):
        propagate_bh(bo_gboa.psi0, bo_full.H, [0.0])


def test_harmonic_surface_frequency():
    params = ModelParams()
    R = dvr_grid()
    extra = 1.3
    # one flat-coupled surface with added curvature on top of the confinement
    surf = BOSurfaceSet(R, np.tile(0.5 * extra * R[:, None] ** 2, 3), np.tile(np.eye(3), (R.size, 1, 1)), np.zeros((R.size, 3, 3)))
    expected = np.sqrt((params.k + extra) / params.M)
    bh = build_bh_hamiltonian(surf, (1,), params)
    var = 1.0 / (2 * expected * params.M)
    packet = np.exp(-((R - 0.08) ** 2) / (4 * var)).astype(complex)
    packet /= np.linalg.norm(packet)
    times = np.linspace(0, 4000, 8001)
    res = propagate_bh(DVRState(packet[None], [0], R), bh, times)
    mean_R = np.abs(res.states) ** 2 @ R
    period = 2 * np.pi / expected
    np.testing.assert_allclose(mean_R, 0.08 * np.cos(expected * times), atol=1e-6)
    assert times[-1] > 10 * period


def test_fon_from_csf_weights():
    csf = np.array([[1.0], [0.0], [0.0]])
    np.testing.assert_allclose(csf_fon(csf), [1, 1, 0, 0])
    csf = np.array([[0.0], [0.0], [1.0]])
    np.testing.assert_allclose(csf_fon(csf), [0.5, 0.5, 0.5, 0.5])


def test_full_fon_tracks_exact(bo_full, bo_surfaces, exact_model):
    for k in range(0, exact_model.times.size, 16):
        csf = csf_amplitudes(bo_full.result.states[k], bo_full.psi0.subset, bo_surfaces)
        exact = exact_model.obs.fon(exact_model.states[k])
        assert np.max(np.abs(csf_fon(csf) - exact)) <= 0.02


# --------------------------------------------------------------- densities

def test_pure_first_csf_density(bo_surfaces, density_orbitals):
    R = bo_surfaces.R
    dR = bo_surfaces.spacing
    k = np.argmin(np.abs(R - 0.2))
    csf = np.zeros((3, R.size))
    csf[0, k] = np.sqrt(dR)
    # rotate the CSF-1 column into BO amplitudes on the grid
    chi = np.einsum("kij,ik->jk", bo_surfaces.U, csf)
    dens = bo_densities(chi.reshape(-1), [0, 1, 2], bo_surfaces, density_orbitals)
    eta_a = density_orbitals.interpolate(R[k : k + 1])[0, 0]
    np.testing.assert_allclose(dens.values[k], 2 * eta_a**2, atol=1e-10)
    assert np.trapezoid(dens.values[k], dens.r) == pytest.approx(2.0, abs=1e-6)


def test_density_normalization(bo_full, bo_surfaces, density_orbitals):
    dens = bo_densities(bo_full.result.states[100], bo_full.psi0.subset, bo_surfaces, density_orbitals)
    assert dens.integral() == pytest.approx(2.0, abs=1e-3)


def test_full_density_matches_exact_late(bo_full, bo_surfaces, density_orbitals, exact_model):
    k = int(np.argmin(np.abs(exact_model.times - 1514.4)))
    bo = bo_densities(bo_full.result.states[k], bo_full.psi0.subset, bo_surfaces, density_orbitals, R_stride=10, r_stride=3)
    exact = statevector_joint_density(exact_model.psi0.with_amplitudes(exact_model.states[k]), density_orbitals, bo.R, 3)
    assert bo.l1_distance(exact) <= 0.05


# --------------------------------------------------------------- CSF counting

def spin_projection_count(n_spatial, n_alpha, n_beta):
    if not (0 <= n_alpha <= n_spatial and 0 <= n_beta <= n_spatial):
        return 0
    return comb(n_spatial, n_alpha) * comb(n_spatial, n_beta)


def enumerate_csfs(S, n_orbitals, n_electrons):
    """Spin-S multiplets counted as (#states with Sz = S) - (#states with Sz = S + 1)."""
    n = n_orbitals // 2
    two_s = int(2 * S)

    def count(two_m):
        if (n_electrons + two_m) % 2:
            return 0
        return spin_projection_count(n, (n_electrons + two_m) // 2, (n_electrons - two_m) // 2)

    return count(two_s) - count(two_s + 2)


def test_weyl_printed_and_small_cases():
    assert weyl_count(0, 4, 2) == 3
    assert weyl_count(0, 2, 2) == 1
    assert weyl_count(0, 12, 4) == 105


def test_weyl_matches_enumeration():
    for n_orb in range(2, 13, 2):
        for n_el in range(n_orb + 1):
            for S in (0, 0.5, 1):
                if (n_el - int(2 * S)) % 2:
                    continue
                assert weyl_count(S, n_orb, n_el) == enumerate_csfs(S, n_orb, n_el), (S, n_orb, n_el)


@pytest.mark.parametrize("n_orb,n_el", [(4, 2), (6, 2), (6, 3), (6, 4)])
def test_weyl_matches_spin_diagonalization(n_orb, n_el):
    S2 = s2_operator(n_orb).matrix().real
    N = number_operator(n_orb).matrix().real
    sector = null_space(N - n_el * np.eye(N.shape[0]))
    evals = np.linalg.eigvalsh(sector.T @ S2 @ sector)
    for S in (0, 0.5, 1, 1.5):
        if (n_el - int(2 * S)) % 2:
            continue
        degeneracy = int(np.sum(np.abs(evals - S * (S + 1)) < 1e-8))
        assert weyl_count(S, n_orb, n_el) * (2 * S + 1) == degeneracy


def test_weyl_rejects_bad_input():
    for args in ((0, 3, 2), (0, 4, 5), (0.5, 4, 2), (0.3, 4, 2), (-1, 4, 2)):
        with pytest.raises(ValueError):
            weyl_count(*args)
    assert weyl_count(2, 4, 2) == 0


def test_brute_force_enumeration_is_exhaustive():
    # direct enumeration of determinants as a check on the counting helper
    n = 3
    dets = [(a, b) for a, b in product(product((0, 1), repeat=n), repeat=2)]
    by_m = {}
    for a, b in dets:
        key = (sum(a) + sum(b), sum(a) - sum(b))
        by_m[key] = by_m.get(key, 0) + 1
    for (n_el, two_m), cnt in by_m.items():
        assert spin_projection_count(n, (n_el + two_m) // 2, (n_el - two_m) // 2) == cnt
