"""Command-line front end: experiment drivers plus a single-instance solver.

Subcommands `random`, `deterministic`, and `csi-sweep` write CSV; `solve`
reads a JSON problem document and writes a JSON solution. A JSON config
file can prefill any experiment field; explicit flags override it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import (ExperimentConfig, config_from_dict, run_to_csv,
                      solve_from_document)

SCENARIO_BY_COMMAND = {"random": "random-drop",
                       "deterministic": "deterministic",
                       "csi-sweep": "csi-sweep"}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _strs(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(","))


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file prefilling any experiment field")
    p.add_argument("--n", type=int, help="antennas at the base station")
    p.add_argument("--m", type=int, help="near-field users (= beams)")
    p.add_argument("--k", type=int, help="far-field users")
    p.add_argument("--dx", type=int, help="beams per far-field user")
    p.add_argument("--pdbm", type=_floats, help="per-beam budget(s) in dBm, comma separated")
    p.add_argument("--rho", type=float, help="CSI quality in [0, 1]")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--methods", type=_strs, help="comma separated subset of "
                   "greedy,sca,closed-form,bb")
    p.add_argument("--timing", action="store_true",
                   help="record wall times in the CSV (breaks byte reproducibility)")
    p.add_argument("--out", required=True, help="output CSV path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfnoma",
        description="Simulate far-field users admitted onto preconfigured "
                    "near-field zero-forcing beams.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_rand = sub.add_parser("random", help="random user drops over a power sweep")
    _add_experiment_flags(p_rand)

    p_det = sub.add_parser("deterministic",
                           help="fixed grid/arc layout against the exact solvers")
    _add_experiment_flags(p_det)
    p_det.add_argument("--sweep", choices=("k", "dx"))
    p_det.add_argument("--sweep-values", type=_ints, dest="sweep_values")

    p_csi = sub.add_parser("csi-sweep", help="imperfect-CSI sensitivity study")
    _add_experiment_flags(p_csi)
    p_csi.add_argument("--rho-values", type=_floats, dest="rho_values")

    p_solve = sub.add_parser("solve", help="solve one instance from a JSON document")
    p_solve.add_argument("--in", dest="infile", required=True)
    p_solve.add_argument("--out", help="output JSON path (default: stdout)")
    return parser


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        with open(args.config) as f:
            data.update(json.load(f))
    data["scenario"] = SCENARIO_BY_COMMAND[args.command]
    overrides = {
        "n": args.n, "m": args.m, "k": args.k, "dx": args.dx,
        "p_dbm": args.pdbm, "rho": args.rho, "trials": args.trials,
        "seed": args.seed, "methods": args.methods,
        "sweep": getattr(args, "sweep", None),
        "sweep_values": getattr(args, "sweep_values", None),
        "rho_values": getattr(args, "rho_values", None),
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.timing:
        data["record_timing"] = True
    return config_from_dict(data)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "solve":
        with open(args.infile) as f:
            doc = json.load(f)
        result = solve_from_document(doc)
        text = json.dumps(result, indent=2)
        if args.out:
            with open(args.out, "w") as f:
                f.write(text + "\n")
        else:
            print(text)
        return 0
    cfg = _experiment_config(args)
    rows = run_to_csv(cfg, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
