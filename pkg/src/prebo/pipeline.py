"""End-to-end scenario stages with content-hashed caching and a manifest.

Layout of an output directory::

    integrals.csv, taylor.csv      electronic-structure stage
    hamiltonian.json               qubit-boson mapping
    fidelity.csv                   Trotter fidelities, one row per (t, dt)
    manifest.json                  inputs, file hashes and versions
    cache/                         content-addressed intermediates
    <run>/                         exact, trotter_dt<dt>, bo-full, bo-gboa, tomography
"""

from __future__ import annotations

import contextlib
import json
import logging
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from prebo import __version__
from prebo.bo import (
    bo_densities,
    build_bh_hamiltonian,
    compute_nacs,
    csf_amplitudes,
    csf_fon,
    diagonalize_bo,
    initial_state_bo,
    propagate_bh,
)
from prebo.config import ScenarioConfig
from prebo.electronic import (
    INTEGRAL_LABELS,
    OrbitalSet,
    TaylorFit,
    compute_adiabatic_orbitals,
    compute_electron_integrals,
    diabatize,
    taylor_fit,
)
from prebo.engine import (
    Observables,
    SpectralPropagator,
    VibronicState,
    exact_evolve,
    fidelity,
    nuclear_wavefunction,
    prepare_initial_state,
    time_grid,
    trajectory_table,
)
from prebo.io import content_key, file_hash, read_csv, time_tag, write_csv, write_json
from prebo.mapping import CMQBHamiltonianSpec, build_molecular_qubit_hamiltonian, symbolic_matrix
from prebo.tomography import (
    DensityGrid,
    MomentumGrid,
    characteristic_function,
    measure_rdm1,
    reconstruct_joint_density,
    reconstruct_nuclear_density,
    statevector_joint_density,
)
from prebo.trotter import propagate_schedule, step_count, trotterize

logger = logging.getLogger(__name__)

METRICS = ("L1-density", "fidelity", "FON-max-dev")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


class Workspace:
    """Output directory with cache and an incrementally updated manifest."""

    def __init__(self, config: ScenarioConfig, out: str | Path | None = None):
        self.config = config
        self.root = Path(out or config.out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.cache = self.root / "cache"
        self._written: dict[str, str] = {}

    def path(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def record(self, path: Path):
        rel = Path(path).relative_to(self.root).as_posix()
        self._written[rel] = file_hash(path)

    def csv(self, rel: str, header, rows) -> Path:
        p = write_csv(self.path(rel), header, rows)
        self.record(p)
        return p

    def cached(self, kind: str, key_obj, compute):
        """Load ``cache/<kind>-<hash>.npz`` or compute and store it."""
        key = content_key({"kind": kind, "version": __version__, "inputs": key_obj})
        path = self.cache / f"{kind}-{key}.npz"
        if path.exists():
            with np.load(path, allow_pickle=False) as data:
                return {k: data[k] for k in data.files}
        arrays = compute()
        self.cache.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, **arrays)
        tmp.replace(path)
        return arrays

    def write_manifest(self, command: str, run: str | None = None):
        manifest_path = self.root / "manifest.json"
        manifest = {}
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
        manifest["versions"] = {
            "prebo": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        }
        runs = manifest.setdefault("runs", {})
        entry = {"command": command, "config": self.config.to_dict(), "files": dict(sorted(self._written.items()))}
        runs[run or command] = entry
        files = manifest.setdefault("files", {})
        files.update(self._written)
        manifest["files"] = dict(sorted(files.items()))
        write_json(manifest_path, manifest)


# ---------------------------------------------------------------- integrals

def _model_key(cfg: ScenarioConfig) -> dict:
    d = cfg.to_dict()
    return {k: d[k] for k in ("model", "electron_grid", "r_table", "fit_window")}


def _orbitals_from(arrays, prefix: str) -> OrbitalSet:
    return OrbitalSet(arrays[f"{prefix}_R"], arrays[f"{prefix}_r"], arrays[f"{prefix}_orb"], "diabatic")


def integrals_stage(ws: Workspace) -> dict:
    """Diabatic orbitals, integral tables and their linear fit (cached)."""
    cfg = ws.config

    def compute():
        adiabatic = compute_adiabatic_orbitals(cfg.model, cfg.electron_grid, cfg.r_table)
        diabatic = diabatize(adiabatic)
        tables = compute_electron_integrals(diabatic, cfg.model, cfg.electron_grid)
        fit = taylor_fit(tables, cfg.fit_window)
        header, rows = tables.rows()
        return {
            "table_header": np.array(header),
            "table_rows": rows,
            "fit": np.array([[fit.v0[k], fit.v1[k], fit.residual[k]] for k in INTEGRAL_LABELS]),
            "orb_R": diabatic.R,
            "orb_r": diabatic.r,
            "orb_orb": diabatic.orbitals,
        }

    with stage("integrals"):
        data = ws.cached("integrals", _model_key(cfg), compute)
        fit = TaylorFit(
            {k: float(v[0]) for k, v in zip(INTEGRAL_LABELS, data["fit"])},
            {k: float(v[1]) for k, v in zip(INTEGRAL_LABELS, data["fit"])},
            {k: float(v[2]) for k, v in zip(INTEGRAL_LABELS, data["fit"])},
        )
        ws.csv("integrals.csv", [str(h) for h in data["table_header"]], data["table_rows"])
        ws.csv("taylor.csv", ["label", "v0", "v1", "residual"], fit.rows())
    return {"fit": fit, "orbitals": _orbitals_from(data, "orb")}


def density_orbitals(ws: Workspace) -> OrbitalSet:
    """Diabatic orbitals on the wider nuclear table used for densities (cached)."""
    cfg = ws.config
    key = {**_model_key(cfg), "density_table": cfg.to_dict()["density_table"]}

    def compute():
        adiabatic = compute_adiabatic_orbitals(cfg.model, cfg.electron_grid, cfg.density_table)
        dia = diabatize(adiabatic)
        return {"orb_R": dia.R, "orb_r": dia.r, "orb_orb": dia.orbitals}

    with stage("integrals"):
        return _orbitals_from(ws.cached("density-orbitals", key, compute), "orb")


def dynamics_fit(ws: Workspace) -> TaylorFit:
    if ws.config.integrals == "table":
        return TaylorFit.published_table()
    return integrals_stage(ws)["fit"]


# ---------------------------------------------------------------- mapping

def map_stage(ws: Workspace) -> CMQBHamiltonianSpec:
    fit = dynamics_fit(ws)
    with stage("map"):
        spec = build_molecular_qubit_hamiltonian(fit, ws.config.model)
        p = ws.path("hamiltonian.json")
        p.write_text(spec.to_json())
        ws.record(p)
    return spec


# ---------------------------------------------------------------- simulation

@dataclass
class ExactRun:
    spec: CMQBHamiltonianSpec
    H: np.ndarray
    propagator: SpectralPropagator
    psi0: VibronicState
    obs: Observables

    def states_at(self, times) -> np.ndarray:
        return self.propagator.evolve(self.psi0.amplitudes, np.asarray(times, dtype=float))


def exact_setup(ws: Workspace, spec: CMQBHamiltonianSpec) -> ExactRun:
    cfg = ws.config
    with stage("simulate"):
        H = symbolic_matrix(spec, cfg.n_fock)
        psi0 = prepare_initial_state(cfg.R0, "1100", cfg.n_fock, cfg.model)
        return ExactRun(spec, H, SpectralPropagator(H), psi0, Observables(cfg.n_fock, 4, cfg.model))


def density_R_points(cfg: ScenarioConfig) -> np.ndarray:
    """Shared nuclear grid of every joint-density file: strided DVR points."""
    return cfg.dvr.points[:: cfg.density_R_stride]


def _write_states(ws: Workspace, run: str, times, states):
    ws.csv(f"{run}/state_times.csv", ["t"], [[t] for t in times])
    p = ws.path(run, "states.npy")
    np.save(p, np.asarray(states, dtype=complex))
    ws.record(p)


def _write_joint(ws: Workspace, rel: str, dens: DensityGrid):
    header, rows = dens.rows()
    ws.csv(rel, header, rows)


def _statevector_densities(ws, run, exact: ExactRun, times, states, orbitals):
    cfg = ws.config
    R = density_R_points(cfg)
    for t, vec in zip(times, states):
        st = exact.psi0.with_amplitudes(vec)
        joint = statevector_joint_density(st, orbitals, R, cfg.density_r_stride, time=t)
        _write_joint(ws, f"{run}/density_joint_t{time_tag(t)}.csv", joint)
        _, nuc = nuclear_wavefunction(st, R)
        ws.csv(f"{run}/density_nuclear_t{time_tag(t)}.csv", ["R", "rho"], np.column_stack([R, nuc]))


def simulate_exact(ws: Workspace) -> Path:
    cfg = ws.config
    spec = map_stage(ws)
    exact = exact_setup(ws, spec)
    orbitals = density_orbitals(ws)
    with stage("simulate"):
        result = exact_evolve(exact.H, exact.psi0, time_grid(cfg.t_final, cfg.dt_out), exact.propagator)
        header, rows = trajectory_table(result, exact.H, exact.obs)
        ws.csv("exact/trajectory.csv", header, rows)
        times = cfg.density_times()
        states = exact.states_at(times)
        _write_states(ws, "exact", times, states)
    with stage("measure"):
        _statevector_densities(ws, "exact", exact, times, states, orbitals)
    return ws.root / "exact"


def _update_fidelity(ws: Workspace, rows_new):
    path = ws.root / "fidelity.csv"
    table = {}
    if path.exists():
        _, old = read_csv(path)
        for t, dt, f in old:
            table[(round(t, 9), round(dt, 9))] = f
    for t, dt, f in rows_new:
        table[(round(t, 9), round(dt, 9))] = f
    rows = [[t, dt, table[(t, dt)]] for t, dt in sorted(table)]
    ws.csv("fidelity.csv", ["t", "dt", "fidelity"], rows)


def simulate_trotter(ws: Workspace) -> Path:
    cfg = ws.config
    spec = map_stage(ws)
    exact = exact_setup(ws, spec)
    orbitals = density_orbitals(ws)
    run = f"trotter_dt{time_tag(cfg.dt)}"
    with stage("simulate"):
        n_steps, dt_eff = step_count(cfg.t_final, cfg.dt)
        schedule = trotterize(spec, cfg.t_final, dt_eff, cfg.order)
        p = ws.path(run, "schedule.txt")
        p.write_text(schedule.text())
        ws.record(p)
        stride = max(1, int(round(cfg.dt_out / dt_eff)))
        result = propagate_schedule(exact.psi0.amplitudes, schedule, cfg.n_fock, record_every=stride)
        header, rows = trajectory_table(result, exact.H, exact.obs)
        ws.csv(f"{run}/trajectory.csv", header, rows)

        times = cfg.density_times()
        states, fid_rows = [], []
        for t in times:
            if t == 0:
                vec = exact.psi0.amplitudes
            else:
                _, dt_t = step_count(t, cfg.dt)
                sched_t = trotterize(spec, t, dt_t, cfg.order)
                vec = propagate_schedule(exact.psi0.amplitudes, sched_t, cfg.n_fock, record_every=10**9).states[-1]
            states.append(vec)
            fid_rows.append([t, cfg.dt, fidelity(exact.states_at([t])[0], vec)])
        _write_states(ws, run, times, states)
        _update_fidelity(ws, fid_rows)
    with stage("measure"):
        _statevector_densities(ws, run, exact, times, states, orbitals)
    return ws.root / run


def simulate_bo(ws: Workspace) -> Path:
    cfg = ws.config
    fit = dynamics_fit(ws)
    orbitals = density_orbitals(ws)
    subset = cfg.bo_states
    run = "bo-full" if subset == (1, 2, 3) else "bo-gboa" if subset == (2, 3) else "bo-" + "".join(map(str, subset))
    with stage("bo"):
        surfaces = diagonalize_bo(fit, cfg.dvr.points)
        compute_nacs(surfaces, fit)
        header, rows = surfaces.rows()
        ws.csv(f"{run}/surfaces.csv", header, rows)
        bh = build_bh_hamiltonian(surfaces, subset, cfg.model)
        psi0 = initial_state_bo(surfaces, cfg.R0, subset, cfg.model)
        grid_t = time_grid(cfg.t_final, cfg.dt_out)
        times = cfg.density_times()
        all_t = np.union1d(grid_t, times)
        result = propagate_bh(psi0, bh, all_t)
        R = surfaces.R
        traj = []
        for t, vec in zip(result.times, result.states):
            if not np.any(np.isclose(grid_t, t, atol=1e-9, rtol=0)):
                continue
            csf = csf_amplitudes(vec, bh.subset, surfaces)
            energy = float(np.real(np.vdot(vec, bh.matrix @ vec)))
            nuc = np.sum(np.abs(vec.reshape(len(bh.subset), -1)) ** 2, axis=0)
            traj.append([t, np.linalg.norm(vec), energy, *csf_fon(csf), nuc @ R, nuc @ R**2])
        header = ["t", "norm", "energy", "FON_1", "FON_2", "FON_3", "FON_4", "R_mean", "R2_mean"]
        ws.csv(f"{run}/trajectory.csv", header, traj)
        ws.csv(f"{run}/discarded.csv", ["discarded_weight"], [[psi0.discarded]])
    with stage("measure"):
        for t in times:
            vec = result.at(t)
            dens = bo_densities(vec, bh.subset, surfaces, orbitals, cfg.density_R_stride, cfg.density_r_stride, time=t)
            _write_joint(ws, f"{run}/bo_density_t{time_tag(t)}.csv", dens)
    return ws.root / run


def simulate(ws: Workspace) -> Path:
    method = ws.config.method
    if method == "exact":
        return simulate_exact(ws)
    if method == "trotter":
        return simulate_trotter(ws)
    return simulate_bo(ws)


def tomography_run(ws: Workspace) -> Path:
    cfg = ws.config
    spec = map_stage(ws)
    exact = exact_setup(ws, spec)
    orbitals = density_orbitals(ws)
    grid = MomentumGrid(cfg.kpoints, cfg.kspacing)
    with stage("measure"):
        times = cfg.density_times()
        for i, (t, vec) in enumerate(zip(times, exact.states_at(times))):
            st = exact.psi0.with_amplitudes(vec)
            seed = cfg.seed + i
            samples = characteristic_function(st, None, grid, shots=cfg.shots, seed=seed)
            nuc = reconstruct_nuclear_density(
                samples, grid, time=t, imag_tol=1e-6 if cfg.shots == 0 else np.inf, shots=cfg.shots
            )
            ws.csv(f"tomography/density_nuclear_t{time_tag(t)}.csv", *nuc.rows())
            joint = reconstruct_joint_density(
                st, orbitals, grid, r_stride=cfg.density_r_stride, shots=cfg.shots, seed=seed, time=t
            )
            _write_joint(ws, f"tomography/density_joint_t{time_tag(t)}.csv", joint)
            rdm = measure_rdm1(st, cfg.shots, seed)
            rows = [[p + 1, q + 1, rdm.matrix[p, q].real, rdm.matrix[p, q].imag] for p in range(4) for q in range(4)]
            ws.csv(f"tomography/rdm1_t{time_tag(t)}.csv", ["p", "q", "re", "im"], rows)
    return ws.root / "tomography"


# ---------------------------------------------------------------- comparison

def _density_files(run: Path) -> dict[float, Path]:
    out = {}
    for p in sorted(run.glob("*density_t*.csv")) + sorted(run.glob("density_joint_t*.csv")):
        tag = p.stem.split("_t")[-1]
        out[round(float(tag), 9)] = p
    return out


def _load_density(path: Path) -> DensityGrid:
    header, data = read_csv(path)
    if header != ["r", "R", "rho"]:
        raise ValueError(f"{path} is not a joint density file")
    R = np.unique(data[:, 1])
    r = np.unique(data[:, 0])
    return DensityGrid(data[:, 2].reshape(R.size, r.size), R, r)


def compare_runs(run_a: str | Path, run_b: str | Path, metric: str) -> tuple[list[str], list[list[float]]]:
    """Per-time comparison table between two run directories."""
    run_a, run_b = Path(run_a), Path(run_b)
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    rows = []
    if metric == "L1-density":
        da, db = _density_files(run_a), _density_files(run_b)
        common = sorted(set(da) & set(db))
        if not common:
            raise ValueError("runs share no density time stamps")
        for t in common:
            a, b = _load_density(da[t]), _load_density(db[t])
            if a.values.shape != b.values.shape or not (np.allclose(a.R, b.R) and np.allclose(a.r, b.r)):
                raise ValueError(f"density grids differ at t={t}")
            rows.append([t, a.l1_distance(b)])
    elif metric == "fidelity":
        sa, sb = run_a / "states.npy", run_b / "states.npy"
        if not (sa.exists() and sb.exists()):
            raise ValueError("fidelity needs state vectors from exact or trotter runs")
        ta = read_csv(run_a / "state_times.csv")[1][:, 0]
        tb = read_csv(run_b / "state_times.csv")[1][:, 0]
        va, vb = np.load(sa), np.load(sb)
        if va.shape[1] != vb.shape[1]:
            raise ValueError("state spaces differ")
        for i, t in enumerate(ta):
            j = np.flatnonzero(np.isclose(tb, t, atol=1e-9))
            if j.size:
                rows.append([t, fidelity(va[i], vb[j[0]])])
        if not rows:
            raise ValueError("runs share no state time stamps")
    else:
        ha, a = read_csv(run_a / "trajectory.csv")
        hb, b = read_csv(run_b / "trajectory.csv")
        cols_a = [ha.index(f"FON_{p}") for p in range(1, 5)]
        cols_b = [hb.index(f"FON_{p}") for p in range(1, 5)]
        for row in a:
            j = np.flatnonzero(np.isclose(b[:, 0], row[0], atol=1e-6))
            if j.size:
                rows.append([row[0], float(np.max(np.abs(row[cols_a] - b[j[0], cols_b])))])
        if not rows:
            raise ValueError("trajectories share no time stamps")
    return ["t", metric], rows
