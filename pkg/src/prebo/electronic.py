"""Two-electron Shin-Metiu model on a real-space grid.

Builds the one-electron Hamiltonian, solves for the two lowest adiabatic
orbitals along the nuclear coordinate, rotates them into quasi-diabatic
orbitals and tabulates the one- and two-electron integrals together with
their first-order Taylor coefficients about R = 0.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.special import erf

from prebo.dvr import kinetic_matrix

logger = logging.getLogger(__name__)

#: integral labels in table order (spatial orbitals a, b)
INTEGRAL_LABELS = (
    "h_aa", "h_bb", "h_ab",
    "v_aaaa", "v_bbbb", "v_abab", "v_aaab", "v_abbb", "v_aabb",
)


@dataclass(frozen=True)
class ModelParams:
    """Shin-Metiu parameters in atomic units."""

    M: float = 1836.0
    k: float = 4.0
    L: float = 5.4
    C_l: float = 0.3
    C_r: float = 0.3
    C_c: float = 0.6
    C_e: float = 5.0

    def __post_init__(self):
        for name in ("M", "k", "L", "C_l", "C_r", "C_c", "C_e"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"model parameter {name} must be positive, got {value!r}")

    @property
    def omega(self) -> float:
        """Harmonic frequency sqrt(k/M) of the nuclear mode."""
        return float(np.sqrt(self.k / self.M))


@dataclass(frozen=True)
class SpatialGrid:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"grid needs at least 3 points, got {self.n}")
        if not self.hi > self.lo:
            raise ValueError(f"grid bounds must satisfy hi > lo, got [{self.lo}, {self.hi}]")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights."""
        w = np.full(self.n, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w


DEFAULT_ELECTRON_GRID = SpatialGrid(-9.0, 9.0, 601)
DEFAULT_R_GRID = SpatialGrid(-0.4, 0.4, 81)


def soft_coulomb(x, C: float) -> np.ndarray:
    """erf(|x|/C)/|x| with the analytic limit 2/(C sqrt(pi)) at x = 0."""
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.full(ax.shape, 2.0 / (C * np.sqrt(np.pi)))
    nz = ax > 1e-12
    out[nz] = erf(ax[nz] / C) / ax[nz]
    return out


def nuclear_potential(params: ModelParams, R):
    """Harmonic confinement 1/2 k R^2 of the moving ion."""
    return 0.5 * params.k * np.asarray(R, dtype=float) ** 2


def electron_nuclear_potential(r, params: ModelParams, R: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    half = 0.5 * params.L
    return -(
        soft_coulomb(r - R, params.C_c)
        + soft_coulomb(r - half, params.C_r)
        + soft_coulomb(r + half, params.C_l)
    )


def _check_electron_grid(grid: SpatialGrid, params: ModelParams) -> None:
    half = 0.5 * params.L
    if grid.lo > -half - 3.0 or grid.hi < half + 3.0:
        raise ValueError(
            f"electron grid [{grid.lo}, {grid.hi}] must extend 3 a.u. beyond the fixed ions at +-{half}"
        )


def build_h1e(grid: SpatialGrid, params: ModelParams, R: float) -> np.ndarray:
    """One-electron Hamiltonian at nuclear position ``R`` as a dense DVR matrix."""
    _check_electron_grid(grid, params)
    if abs(R) >= 0.5 * params.L:
        raise ValueError(f"moving ion position R={R} lies outside the fixed ions")
    h = kinetic_matrix(grid.n, grid.spacing)
    h[np.diag_indices(grid.n)] += electron_nuclear_potential(grid.points, params, R)
    if not np.all(np.isfinite(h)):
        raise ValueError("non-finite entries in one-electron Hamiltonian")
    return h


def _normalize(psi: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return psi / np.sqrt(np.sum(weights * psi * psi, axis=-1, keepdims=True))


def solve_adiabatic_orbitals(h1e: np.ndarray, grid: SpatialGrid = DEFAULT_ELECTRON_GRID):
    """Two lowest eigenpairs of ``h1e`` in ascending order.

    Orbitals are normalized on the grid and carry a positive amplitude at the
    point of largest magnitude.

    Returns:
        ``(e1, e2, psi1, psi2)``
    """
    if not np.allclose(h1e, h1e.T, atol=1e-12):
        raise ValueError("h1e must be real symmetric")
    energies, vecs = eigh(h1e, subset_by_index=[0, 1])
    if energies[1] - energies[0] < 1e-12:
        warnings.warn(f"lowest orbital pair is degenerate (gap {energies[1] - energies[0]:.2e})")
    psi = _normalize(vecs.T, grid.weights)
    for j in range(2):
        if psi[j, np.argmax(np.abs(psi[j]))] < 0:
            psi[j] *= -1.0
    return float(energies[0]), float(energies[1]), psi[0], psi[1]


@dataclass
class OrbitalSet:
    """Two real orbitals per nuclear grid point.

    ``orbitals`` has shape ``(n_R, 2, n_r)``.
    """

    R: np.ndarray
    r: np.ndarray
    orbitals: np.ndarray
    kind: str
    energies: np.ndarray | None = None
    angles: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("adiabatic", "diabatic"):
            raise ValueError(f"unknown orbital kind {self.kind!r}")
        if self.weights is None:
            dx = self.r[1] - self.r[0]
            self.weights = np.full(self.r.size, dx)
            self.weights[[0, -1]] *= 0.5

    @property
    def spacing_R(self) -> float:
        return float(self.R[1] - self.R[0])

    def overlaps(self) -> np.ndarray:
        """Overlap matrices, shape ``(n_R, 2, 2)``."""
        return np.einsum("aip,ajp,p->aij", self.orbitals, self.orbitals, self.weights)

    def at(self, R: float) -> np.ndarray:
        """Orbitals at ``R`` by linear interpolation, clamped to the table range."""
        return self.interpolate(np.atleast_1d(R))[0]

    def interpolate(self, R, orthonormalize: bool = True) -> np.ndarray:
        """Orbitals on arbitrary nuclear positions; shape ``(len(R), 2, n_r)``.

        Linear interpolation between table points, followed by a symmetric
        (Loewdin) re-orthonormalization unless ``orthonormalize`` is false.
        """
        R = np.asarray(R, dtype=float)
        lo, hi = self.R[0], self.R[-1]
        if np.any(R < lo - 1e-12) or np.any(R > hi + 1e-12):
            warnings.warn(f"orbital table covers [{lo}, {hi}]; positions outside are clamped")
        Rc = np.clip(R, lo, hi)
        pos = (Rc - lo) / self.spacing_R
        i0 = np.clip(np.floor(pos).astype(int), 0, self.R.size - 2)
        frac = (pos - i0)[:, None, None]
        phi = (1.0 - frac) * self.orbitals[i0] + frac * self.orbitals[i0 + 1]
        if not orthonormalize:
            return phi
        overlap = np.einsum("aip,ajp,p->aij", phi, phi, self.weights)
        vals, vecs = np.linalg.eigh(overlap)
        inv_sqrt = np.einsum("aik,ak,ajk->aij", vecs, vals**-0.5, vecs)
        return np.einsum("aij,ajp->aip", inv_sqrt, phi)


def compute_adiabatic_orbitals(
    params: ModelParams = ModelParams(),
    grid: SpatialGrid = DEFAULT_ELECTRON_GRID,
    R_grid: SpatialGrid = DEFAULT_R_GRID,
) -> OrbitalSet:
    """Adiabatic orbital pair along ``R_grid`` with sign continuity in R."""
    Rs = R_grid.points
    orbs = np.empty((Rs.size, 2, grid.n))
    energies = np.empty((Rs.size, 2))
    for i, R in enumerate(Rs):
        e1, e2, p1, p2 = solve_adiabatic_orbitals(build_h1e(grid, params, R), grid)
        orbs[i] = p1, p2
        energies[i] = e1, e2
    w = grid.weights
    for i in range(1, Rs.size):
        for j in range(2):
            if np.sum(w * orbs[i, j] * orbs[i - 1, j]) < 0:
                orbs[i, j] *= -1.0
    return OrbitalSet(Rs, grid.points, orbs, "adiabatic", energies=energies, weights=w)


def derivative_couplings(orbset: OrbitalSet) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivative couplings <p|d/dR q>, <p|d2/dR2 q>.

    Central differences in R; one-sided at the table ends. Returned arrays
    have shape ``(n_R, 2, 2)``; the first is antisymmetrized.
    """
    phi = orbset.orbitals
    h = orbset.spacing_R
    d1 = np.gradient(phi, h, axis=0, edge_order=2)
    d2 = np.empty_like(phi)
    d2[1:-1] = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / h**2
    d2[0] = (2 * phi[0] - 5 * phi[1] + 4 * phi[2] - phi[3]) / h**2
    d2[-1] = (2 * phi[-1] - 5 * phi[-2] + 4 * phi[-3] - phi[-4]) / h**2
    logger.warning("derivative couplings at the two R-table ends use one-sided stencils")
    w = orbset.weights
    d = np.einsum("aip,ajp,p->aij", phi, d1, w)
    g = np.einsum("aip,ajp,p->aij", phi, d2, w)
    d = 0.5 * (d - np.transpose(d, (0, 2, 1)))
    return d, g


def _midpoint_couplings(orbset: OrbitalSet) -> np.ndarray:
    """d_12 at the midpoints between consecutive R points."""
    phi = orbset.orbitals
    w = orbset.weights
    mid1 = 0.5 * (phi[1:, 0] + phi[:-1, 0])
    dpsi2 = (phi[1:, 1] - phi[:-1, 1]) / orbset.spacing_R
    return np.einsum("ap,ap,p->a", mid1, dpsi2, w)


def _left_projector(orbset: OrbitalSet) -> np.ndarray:
    r = orbset.r
    return np.where(r < 0, 1.0, np.where(r == 0, 0.5, 0.0))


def diabatize(adiabatic: OrbitalSet, anchor: str = "center", min_localization: float = 0.75) -> OrbitalSet:
    """Rotate the adiabatic pair so that the derivative coupling vanishes.

    The mixing angle obeys dtheta/dR = -d_12(R) and is integrated with the
    midpoint rule from an anchor point where the rotation that maximally
    localizes the first orbital on the left (r < 0) is taken as the initial
    angle. ``anchor="center"`` uses the grid point nearest R = 0, which keeps
    the mirror relation between the two diabatic orbitals exact;
    ``"left"``/``"right"`` anchor at a table end.

    The output satisfies eta_a = cos(theta) psi_1 - sin(theta) psi_2 and
    eta_b = sin(theta) psi_1 + cos(theta) psi_2, up to one global sign per
    orbital chosen so both peak with positive amplitude at the anchor.
    """
    if adiabatic.kind != "adiabatic":
        raise ValueError("diabatize expects adiabatic orbitals")
    dmid = _midpoint_couplings(adiabatic)
    h = adiabatic.spacing_R
    if np.max(np.abs(dmid)) * h >= 0.5:
        raise ValueError(
            f"R grid too coarse for diabatization: max |d12| dR = {np.max(np.abs(dmid)) * h:.3f} >= 0.5"
        )

    n_R = adiabatic.R.size
    if anchor == "center":
        i0 = int(np.argmin(np.abs(adiabatic.R)))
    elif anchor == "left":
        i0 = 0
    elif anchor == "right":
        i0 = n_R - 1
    else:
        raise ValueError(f"unknown anchor {anchor!r}")

    proj = _left_projector(adiabatic)
    psi = adiabatic.orbitals[i0]
    pm = np.einsum("ip,p,jp->ij", psi, proj * adiabatic.weights, psi)
    loc, vecs = np.linalg.eigh(pm)
    if loc[1] < min_localization:
        raise ValueError(
            f"no localized orbital combination at anchor R={adiabatic.R[i0]:.4f}: "
            f"best left weight {loc[1]:.3f} < {min_localization}"
        )
    c = vecs[:, 1]
    theta = np.empty(n_R)
    theta[i0] = np.arctan2(-c[1], c[0])
    for i in range(i0 + 1, n_R):
        theta[i] = theta[i - 1] - h * dmid[i - 1]
    for i in range(i0 - 1, -1, -1):
        theta[i] = theta[i + 1] + h * dmid[i]

    cos, sin = np.cos(theta)[:, None], np.sin(theta)[:, None]
    p1, p2 = adiabatic.orbitals[:, 0], adiabatic.orbitals[:, 1]
    eta = np.stack([cos * p1 - sin * p2, sin * p1 + cos * p2], axis=1)
    for j in range(2):
        ref = eta[i0, j]
        if ref[np.argmax(np.abs(ref))] < 0:
            eta[:, j] *= -1.0
    return OrbitalSet(
        adiabatic.R.copy(), adiabatic.r.copy(), eta, "diabatic",
        energies=adiabatic.energies, angles=theta, weights=adiabatic.weights,
    )


def integral_label(p: int, q: int, r: int, s: int) -> tuple[str, float]:
    """Table label for the spatial integral v_pqrs with p, q, r, s in {0, 1}.

    Real orbitals give the eightfold symmetry of the charge-distribution
    pairs (pr) and (qs), so every index combination maps onto one of the six
    tabulated two-electron labels. The second return value is the sign
    (always +1 for real orbitals).
    """
    pr = tuple(sorted((p, r)))
    qs = tuple(sorted((q, s)))
    key = tuple(sorted((pr, qs)))
    table = {
        ((0, 0), (0, 0)): "v_aaaa",
        ((1, 1), (1, 1)): "v_bbbb",
        ((0, 0), (1, 1)): "v_abab",
        ((0, 1), (0, 1)): "v_aabb",
        ((0, 0), (0, 1)): "v_aaab",
        ((0, 1), (1, 1)): "v_abbb",
    }
    return table[key], 1.0


def one_electron_label(p: int, q: int) -> str:
    return {(0, 0): "h_aa", (1, 1): "h_bb"}.get((p, q), "h_ab")


@dataclass
class IntegralTables:
    """Integrals on the R grid for the diabatic pair (a, b).

    ``values`` maps each label in :data:`INTEGRAL_LABELS` to an array over
    ``R``; ``d`` and ``g`` hold the derivative couplings, shape ``(n_R, 2, 2)``.
    """

    R: np.ndarray
    values: dict[str, np.ndarray]
    d: np.ndarray
    g: np.ndarray
    h: np.ndarray = field(repr=False, default=None)
    v: np.ndarray = field(repr=False, default=None)

    def __getitem__(self, label: str) -> np.ndarray:
        if label == "d_ab":
            return self.d[:, 0, 1]
        if label == "g_ab":
            return self.g[:, 0, 1]
        return self.values[label]

    def rows(self):
        labels = ("R",) + INTEGRAL_LABELS + ("d_ab", "g_ab")
        cols = [self.R] + [self[lab] for lab in labels[1:]]
        return labels, np.column_stack(cols)


def compute_electron_integrals(
    orbitals: OrbitalSet,
    params: ModelParams = ModelParams(),
    grid: SpatialGrid | None = None,
) -> IntegralTables:
    """Tabulate h_pq, v_pqrs, d_pq and g_pq for a diabatic orbital set."""
    if orbitals.kind != "diabatic":
        raise ValueError("electron integrals are tabulated for diabatic orbitals")
    if grid is None:
        grid = SpatialGrid(float(orbitals.r[0]), float(orbitals.r[-1]), orbitals.r.size)
    w = orbitals.weights
    r = orbitals.r
    vee = soft_coulomb(r[:, None] - r[None, :], params.C_e)
    wvw = w[:, None] * vee * w[None, :]

    n_R = orbitals.R.size
    h = np.empty((n_R, 2, 2))
    v = np.empty((n_R, 2, 2, 2, 2))
    for i, R in enumerate(orbitals.R):
        phi = orbitals.orbitals[i]
        hphi = phi @ build_h1e(grid, params, R)
        h[i] = np.einsum("ip,jp,p->ij", phi, hphi, w)
        pair = np.einsum("ip,jp->ijp", phi, phi)  # rho_pr(r)
        coul = np.einsum("ijp,pq,klq->ijkl", pair, wvw, pair)  # (pr|qs) as [p,r,q,s]
        v[i] = np.transpose(coul, (0, 2, 1, 3))  # v_pqrs
    h = 0.5 * (h + np.transpose(h, (0, 2, 1)))
    v = 0.5 * (v + np.transpose(v, (0, 2, 1, 4, 3)))  # bit-exact v_pqrs = v_qpsr

    values = {
        "h_aa": h[:, 0, 0], "h_bb": h[:, 1, 1], "h_ab": h[:, 0, 1],
        "v_aaaa": v[:, 0, 0, 0, 0], "v_bbbb": v[:, 1, 1, 1, 1],
        "v_abab": v[:, 0, 1, 0, 1], "v_aaab": v[:, 0, 0, 0, 1],
        "v_abbb": v[:, 0, 1, 1, 1], "v_aabb": v[:, 0, 0, 1, 1],
    }
    d, g = derivative_couplings(orbitals)
    return IntegralTables(orbitals.R.copy(), values, d, g, h=h, v=v)


@dataclass
class TaylorFit:
    """First-order expansion v(R) ~ v0 + v1 R per integral label."""

    v0: dict[str, float]
    v1: dict[str, float]
    residual: dict[str, float] = field(default_factory=dict)

    def value(self, label: str, R):
        return self.v0[label] + self.v1[label] * np.asarray(R, dtype=float)

    def labels(self):
        return list(self.v0)

    @classmethod
    def published_table(cls) -> "TaylorFit":
        """Published expansion coefficients for the default model."""
        v0 = dict(zip(INTEGRAL_LABELS, (-2.66, -2.66, -0.0046, 0.2236, 0.2236, 0.1652, 0.0001, 0.0001, 0.0000015)))
        v1 = dict(zip(INTEGRAL_LABELS, (0.2, -0.2, 0.0, 0.00044, -0.00044, 0.0, 0.0, 0.0, 0.0)))
        return cls(v0, v1, {lab: 0.0 for lab in INTEGRAL_LABELS})

    def rows(self):
        return [(lab, self.v0[lab], self.v1[lab], self.residual.get(lab, 0.0)) for lab in self.v0]


def taylor_fit(tables: IntegralTables, window: tuple[float, float] = (-0.1, 0.1)) -> TaylorFit:
    """Linear expansion about R = 0 from the tabulated integrals.

    v0 is the table value at R = 0, v1 the centered finite-difference slope
    there; the residual is the largest deviation of the linear model from
    the table inside ``window``.
    """
    lo, hi = window
    R = tables.R
    if abs(lo + hi) > 1e-9:
        raise ValueError(f"fit window {window} is not centered at R = 0")
    if lo < R[0] - 1e-12 or hi > R[-1] + 1e-12:
        raise ValueError(f"fit window {window} lies outside the table [{R[0]}, {R[-1]}]")
    i0 = int(np.argmin(np.abs(R)))
    if abs(R[i0]) > 1e-9 or i0 == 0 or i0 == R.size - 1:
        raise ValueError("R = 0 must be an interior point of the table")
    mask = (R >= lo - 1e-12) & (R <= hi + 1e-12)
    dR = R[i0 + 1] - R[i0 - 1]
    v0, v1, res = {}, {}, {}
    for lab in INTEGRAL_LABELS:
        y = tables[lab]
        v0[lab] = float(y[i0])
        v1[lab] = float((y[i0 + 1] - y[i0 - 1]) / dR)
        res[lab] = float(np.max(np.abs(y[mask] - (v0[lab] + v1[lab] * R[mask]))))
    return TaylorFit(v0, v1, res)


def run_electronic_structure(
    params: ModelParams = ModelParams(),
    grid: SpatialGrid = DEFAULT_ELECTRON_GRID,
    R_grid: SpatialGrid = DEFAULT_R_GRID,
    window: tuple[float, float] = (-0.1, 0.1),
    anchor: str = "center",
):
    """Full pipeline: adiabatic orbitals, diabatization, integrals, fit."""
    adiabatic = compute_adiabatic_orbitals(params, grid, R_grid)
    diabatic = diabatize(adiabatic, anchor=anchor)
    tables = compute_electron_integrals(diabatic, params, grid)
    return adiabatic, diabatic, tables, taylor_fit(tables, window)
