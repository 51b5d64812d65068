"""Command line surface.

Verbs::

    clockhist run <scenario>            execute queries, write CSVs + manifest
    clockhist verify <scenario>         two-measurement identity report
    clockhist sweep-residual <scenario> run only the residual-sweep queries
    clockhist spectrum <scenario>       constraint-operator eigenvalues

Exit codes: 0 success, 1 validation error, 2 verification failure,
3 internal numerical guard tripped.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import GuardError, ScenarioError
from .history import constraint_operator
from .oracle import DEFAULT_SUBSTEPS, ConstantWave, HamiltonianSpec
from .tensor import Operator
from .scenario import (
    ResidualSweepQuery,
    Scenario,
    VERIFY_TOL,
    load_scenario,
    run_scenario,
    verify_report,
    write_outputs,
    _fmt,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VERIFY = 2
EXIT_GUARD = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clockhist",
        description="Clock-conditioned history-state simulator",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("scenario", help="path to a scenario JSON file")
        p.add_argument("--out-dir", default=None, help="output directory (default: <scenario>_out)")
        p.add_argument("--substeps", type=int, default=DEFAULT_SUBSTEPS,
                       help="midpoint integrator steps per unit time")
        p.add_argument("--tolerance-scale", type=float, default=1.0,
                       help="multiplier applied to the verification tolerance")

    for verb in ("run", "verify", "sweep-residual", "spectrum"):
        p = sub.add_parser(verb)
        common(p)
    sub.choices["verify"].add_argument(
        "--inject-fault-branch", type=int, default=None, metavar="K",
        help="(testing) flip one amplitude sign in branch K before verifying",
    )
    return parser


def _out_dir(args) -> Path:
    if args.out_dir is not None:
        return Path(args.out_dir)
    return Path(f"{Path(args.scenario).stem}_out")


def _cmd_run(args, scenario: Scenario) -> int:
    result = run_scenario(scenario, substeps=args.substeps)
    out = write_outputs(result, _out_dir(args), args.substeps, args.tolerance_scale, args.scenario)
    for q in result.queries:
        dev = "n/a" if q.oracle_deviation is None else f"{q.oracle_deviation:.3e}"
        print(f"wrote {out / q.csv_name}  (oracle deviation {dev})")
    print(f"wrote {out / 'manifest.json'}")
    return EXIT_OK


def _cmd_verify(args, scenario: Scenario) -> int:
    report = verify_report(
        scenario,
        substeps=args.substeps,
        tolerance=VERIFY_TOL * args.tolerance_scale,
        corrupt_branch=args.inject_fault_branch,
    )
    for line in report.lines():
        print(line)
    if not report.passed:
        print("verification FAILED", file=sys.stderr)
        return EXIT_VERIFY
    print(f"verification passed (tolerance {report.tolerance:.3e})")
    return EXIT_OK


def _cmd_sweep_residual(args, scenario: Scenario) -> int:
    sweeps = [q for q in scenario.queries if isinstance(q, ResidualSweepQuery)]
    if not sweeps:
        raise ScenarioError("$.queries", "scenario has no residual_sweep query")
    trimmed = Scenario(
        scenario.grid, scenario.envelope, scenario.hamiltonian, scenario.psi0,
        scenario.t0, scenario.schedule, tuple(sweeps), scenario.source,
    )
    result = run_scenario(trimmed, substeps=args.substeps)
    out = write_outputs(result, _out_dir(args), args.substeps, args.tolerance_scale, args.scenario)
    for q in result.queries:
        print(f"wrote {out / q.csv_name}  (width-oracle deviation {q.oracle_deviation:.3e})")
    return EXIT_OK


def _cmd_spectrum(args, scenario: Scenario) -> int:
    j_op = constraint_operator(scenario.hamiltonian, scenario.grid)
    evals = np.sort(np.linalg.eigvalsh(j_op.matrix))
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "spectrum.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "eigenvalue"])
        writer.writerows([[str(i), _fmt(float(v))] for i, v in enumerate(evals)])
    deviation = None
    if scenario.hamiltonian.is_constant:
        energies = np.linalg.eigvalsh(scenario.hamiltonian._constant_matrix)
        expected = np.sort(np.add.outer(scenario.grid.omegas, energies).ravel())
        deviation = float(np.max(np.abs(evals - expected)))
    # shifting the Hamiltonian spectrum by -eps must shift every eigenvalue by -eps
    eps = 0.25
    eye = Operator(scenario.hamiltonian.factors, np.eye(scenario.hamiltonian.dim))
    shifted_spec = HamiltonianSpec(
        scenario.hamiltonian.terms + ((eye, ConstantWave(-eps)),)
    )
    shifted = np.sort(np.linalg.eigvalsh(constraint_operator(shifted_spec, scenario.grid).matrix))
    shift_deviation = float(np.max(np.abs(shifted - (evals - eps))))
    with open(out / "manifest.json", "w") as fh:
        json.dump(
            {
                "version": 1,
                "scenario": args.scenario,
                "grid": {"N": scenario.grid.n, "t_min": scenario.grid.t_min,
                         "t_max": scenario.grid.t_max, "dt": scenario.grid.dt},
                "queries": [{"name": "spectrum", "type": "spectrum", "csv": "spectrum.csv",
                             "oracle_deviation": deviation,
                             "shift_deviation": shift_deviation}],
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    dev = "n/a" if deviation is None else f"{deviation:.3e}"
    print(f"wrote {path}  (pair-sum lattice deviation {dev}, shift deviation {shift_deviation:.3e})")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "verify": _cmd_verify,
    "sweep-residual": _cmd_sweep_residual,
    "spectrum": _cmd_spectrum,
}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; remap
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    try:
        scenario = load_scenario(args.scenario)
        return _COMMANDS[args.verb](args, scenario)
    except ScenarioError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GuardError as exc:
        print(f"numerical guard tripped: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ValueError as exc:  # library precondition outside the scenario schema
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def cli_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli_entry()
