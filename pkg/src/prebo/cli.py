"""Command-line entry point: ``prebo <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from prebo.bo import weyl_count
from prebo.config import METHODS, ScenarioConfig
from prebo.io import write_csv
from prebo.pipeline import METRICS, StageError, Workspace, compare_runs, integrals_stage, map_stage, simulate, tomography_run


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON scenario configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="seed for shot sampling")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="prebo", description="Pre-Born-Oppenheimer qubit-boson dynamics toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("integrals", parents=[common], help="orbitals, integral tables and linear fit")
    m = sub.add_parser("map", parents=[common], help="write the qubit-boson Hamiltonian")
    m.add_argument("--integrals", choices=("computed", "table"))

    s = sub.add_parser("simulate", parents=[common], help="propagate the vibronic state")
    s.add_argument("--method", choices=METHODS)
    s.add_argument("--t", dest="t_final", type=float, help="final time")
    s.add_argument("--dt", type=float, help="Trotter step")
    s.add_argument("--order", type=int, choices=(1, 2))
    s.add_argument("--n-fock", dest="n_fock", type=int)
    s.add_argument("--states", help="BO states for bo runs, e.g. 2,3")
    s.add_argument("--integrals", choices=("computed", "table"))

    t = sub.add_parser("tomography", parents=[common], help="characteristic-function density reconstruction")
    t.add_argument("--t", dest="t_final", type=float)
    t.add_argument("--kpoints", type=int)
    t.add_argument("--kspacing", type=float)
    t.add_argument("--shots", type=int)
    t.add_argument("--integrals", choices=("computed", "table"))

    b = sub.add_parser("bo", parents=[common], help="Born-Huang reference dynamics")
    b.add_argument("--states", help="BO states, e.g. 2,3 for the group-BO subset")
    b.add_argument("--t", dest="t_final", type=float)
    b.add_argument("--integrals", choices=("computed", "table"))

    c = sub.add_parser("compare", parents=[common], help="compare two run directories")
    c.add_argument("run_a", type=Path)
    c.add_argument("run_b", type=Path)
    c.add_argument("--metric", choices=METRICS, default="L1-density")

    w = sub.add_parser("weyl", parents=[common], help="count spin-adapted configurations")
    w.add_argument("--spin", type=float, default=0.0)
    w.add_argument("--orbitals", type=int, required=True, help="number of spin orbitals")
    w.add_argument("--electrons", type=int, required=True)
    return p


def _config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    changes = {}
    for key in ("method", "t_final", "dt", "order", "n_fock", "kpoints", "kspacing", "shots", "integrals", "seed"):
        if getattr(args, key, None) is not None:
            changes[key] = getattr(args, key)
    states = getattr(args, "states", None)
    if states:
        changes["states"] = tuple(int(s) for s in states.split(","))
    if args.command == "bo" and "method" not in changes:
        chosen = changes.get("states", cfg.states)
        changes["method"] = "bo-gboa" if chosen and tuple(sorted(chosen)) != (1, 2, 3) else "bo-full"
    if args.out is not None:
        changes["out"] = str(args.out)
    return cfg.updated(**changes)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "weyl":
            print(weyl_count(args.spin, args.orbitals, args.electrons))
            return 0
        cfg = _config(args)
        ws = Workspace(cfg)
        if args.command == "integrals":
            integrals_stage(ws)
            run = "integrals"
        elif args.command == "map":
            map_stage(ws)
            run = "map"
        elif args.command in ("simulate", "bo"):
            run = simulate(ws).name
        elif args.command == "tomography":
            run = tomography_run(ws).name
        else:
            header, rows = compare_runs(args.run_a, args.run_b, args.metric)
            path = write_csv(ws.root / "compare.csv", header, rows)
            ws.record(path)
            run = f"compare:{args.run_a.name}:{args.run_b.name}:{args.metric}"
        ws.write_manifest(args.command, run)
        print(ws.root / (run if (ws.root / run).is_dir() else ""))
        return 0
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"error [{args.command}] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
