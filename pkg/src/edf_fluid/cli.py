"""Command-line entry point: ``edf-fluid {simulate,fluid,compare,example,rerun}``.

Every command resolves its inputs, writes ``manifest.json`` into the output
directory and only then computes. ``edf-fluid rerun MANIFEST`` repeats a run
from the resolved inputs stored in a manifest.

Exit codes: 0 success, 2 configuration or assumption error, 3 runtime
error, 4 a convergence verdict failed.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from pathlib import Path
from typing import Any

from . import __version__
from .errors import (
    AssumptionViolation,
    ConfigError,
    EdfFluidError,
    RegimeError,
)
from .example import Case, ExampleParams, example_case, example_curves, find_a1_a2
from .fluid import problem_from_config, solve
from .harness import load_plan, plan_from_dict, run_experiment
from .measures import fmt
from .model import Regime, config_from_dict, load_config
from .simulator import OutputGrid, simulate

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERDICT = 0, 2, 3, 4
MANIFEST = "manifest.json"


def _write_manifest(out: Path, command: str, inputs: dict[str, Any], seeds: list) -> None:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "edf-fluid",
        "version": __version__,
        "command": command,
        "inputs": inputs,
        "seeds": seeds,
        "output_dir": str(out),
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _config_overrides(args) -> list[str]:
    sets = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        sets.append(f"seed={args.seed}")
    return sets


# Each command is split into "resolve" (args -> JSON-able inputs) and
# "execute" (inputs -> files), so that rerun can skip the first step.


def _resolve_simulate(args) -> dict[str, Any]:
    if args.config is None:
        raise ConfigError("simulate needs --config")
    config = load_config(args.config, _config_overrides(args))
    N = config.N_list[0] if args.N is None else args.N
    grid = config.output_points if args.grid is None else args.grid
    return {"config": config.to_dict(), "N": int(N), "grid": int(grid)}


def _execute_simulate(inputs: dict[str, Any], out: Path) -> int:
    config = config_from_dict(inputs["config"])
    grid = OutputGrid.uniform(config.horizon, inputs["grid"], config.snapshot_count)
    trace = simulate(config, inputs["N"], grid=grid)
    trace.to_dir(out)
    print(f"simulated N={trace.N}: {len(trace.events)} events, R={trace.R}, D={trace.D}")
    return EXIT_OK


def _resolve_fluid(args) -> dict[str, Any]:
    if args.config is None:
        raise ConfigError("fluid needs --config")
    config = load_config(args.config, _config_overrides(args))
    steps = config.fluid_steps if args.grid is None else args.grid
    return {"config": config.to_dict(), "steps": int(steps)}


def _execute_fluid(inputs: dict[str, Any], out: Path) -> int:
    config = config_from_dict(inputs["config"])
    prob = problem_from_config(config, inputs["steps"])
    if config.regime() is Regime.SUBCRITICAL:
        sol = solve(prob)
    else:
        sol = solve(prob, kappa=config.kappa)
    sol.to_csv(out / "fluid.csv")
    summary: dict[str, Any] = {"regime": config.regime().value, "dt": sol.problem.dt}
    if sol.frontier is not None:
        summary["kappa"] = sol.kappa
        tail_dir = out / "limit_measure"
        tail_dir.mkdir(exist_ok=True)
        snaps = OutputGrid.uniform(config.horizon, config.output_points, config.snapshot_count)
        rows = []
        for k, t in enumerate(snaps.times[snaps.snapshot_indices]):
            if t < sol.kappa:
                continue
            name = f"limit_{k:03d}.csv"
            sol.write_tail_grid(tail_dir / name, float(t))
            rows.append(f"{k},{fmt(t)},{name}\n")
        (tail_dir / "limit_index.csv").write_text("index,t,file\n" + "".join(rows))
    else:
        t_bar = sol.t_bar
        summary["t_bar"] = t_bar if math.isfinite(t_bar) else "inf"
        print(f"T_bar = {summary['t_bar']}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"fluid solution ({summary['regime']}) on {len(sol.times)} grid points")
    return EXIT_OK


def _resolve_compare(args) -> dict[str, Any]:
    if args.plan is None:
        raise ConfigError("compare needs --plan")
    sets = list(args.set or [])
    if args.seed is not None:
        sets.append(f"seed={args.seed}")
    if args.workers is not None:
        sets.append(f"workers={args.workers}")
    if args.grid is not None:
        sets.append(f"config.output_points={args.grid}")
    return {"plan": load_plan(args.plan, sets).raw}


def _execute_compare(inputs: dict[str, Any], out: Path) -> int:
    plan = plan_from_dict(inputs["plan"])
    report = run_experiment(plan)
    report.to_json(out / "report.json")
    report.to_csv(out / "replications.csv")
    for v in report.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'} {v.name}: {v.detail}")
    return EXIT_OK if report.all_pass else EXIT_VERDICT


def _resolve_example(args) -> dict[str, Any]:
    ExampleParams(args.mu, args.theta)
    if not args.horizon > 0:
        raise ConfigError("horizon must be > 0")
    steps = 4096 if args.grid is None else args.grid
    return {"mu": args.mu, "theta": args.theta, "horizon": args.horizon, "steps": int(steps)}


def _execute_example(inputs: dict[str, Any], out: Path) -> int:
    p = ExampleParams(inputs["mu"], inputs["theta"])
    case = example_case(p)
    print(f"case: {case.value}")
    if case is Case.CASE3B:
        a1, a2 = find_a1_a2(p)
        print(f"a1 = {fmt(a1)}")
        print(f"a2 = {fmt(a2)}")
    elif case is Case.CASE2:
        print("phi = 1, eta = 0 for all t")
    curves = example_curves(p, inputs["horizon"], inputs["steps"])
    cols = ["t", "psi", "h", "eta", "phi", "F"]
    with open(out / "oracle.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in zip(*(curves[c] for c in cols)):
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return EXIT_OK


COMMANDS = {
    "simulate": (_resolve_simulate, _execute_simulate),
    "fluid": (_resolve_fluid, _execute_fluid),
    "compare": (_resolve_compare, _execute_compare),
    "example": (_resolve_example, _execute_example),
}


def _seeds_of(command: str, inputs: dict[str, Any]) -> list:
    if command == "simulate":
        return [inputs["config"]["seed"]]
    if command == "compare":
        plan = inputs["plan"]
        base = plan["seed"]
        n_list = plan["config"]["N_list"]
        reps = plan.get("replications", 20)
        # entropy triples fed to SeedSequence, one per replication
        return [[base, N, r] for N in n_list for r in range(reps)]
    return []


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edf-fluid", description="EDF-b queue with reneging: simulation and fluid limits."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_config: bool = True):
        if with_config:
            p.add_argument("--config", help="JSON run configuration")
            p.add_argument("--set", action="append", metavar="K=V",
                           help="override a config key (repeatable, dotted keys allowed)")
            p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--grid", type=int, help="number of grid points or steps")

    p = sub.add_parser("simulate", help="one simulation run")
    common(p)
    p.add_argument("--N", type=int, help="scale parameter (default: first of N_list)")

    p = sub.add_parser("fluid", help="fluid limit curves")
    common(p)

    p = sub.add_parser("compare", help="multi-N convergence experiment")
    p.add_argument("--plan", help="JSON experiment plan")
    p.add_argument("--set", action="append", metavar="K=V", help="override a plan key")
    p.add_argument("--seed", type=int, help="base seed of the experiment")
    p.add_argument("--workers", type=int, help="worker processes")
    common(p, with_config=False)

    p = sub.add_parser("example", help="closed-form example curves")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--horizon", type=float, default=10.0)
    common(p, with_config=False)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest", help="manifest.json of an earlier run")
    p.add_argument("--out", help="output directory (default: the manifest's own)")
    return parser


def _guarded(fn, *a, resolving: bool = False) -> tuple[int, Any]:
    config_errors = (ConfigError, AssumptionViolation, RegimeError)
    if resolving:
        # argument range checks such as ExampleParams raise ValueError
        config_errors += (ValueError,)
    try:
        return EXIT_OK, fn(*a)
    except config_errors as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except EdfFluidError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME, None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "rerun":
        try:
            manifest = json.loads(Path(args.manifest).read_text())
            command, inputs = manifest["command"], manifest["inputs"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            print(f"error: unreadable manifest {args.manifest}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if command not in COMMANDS:
            print(f"error: unknown command {command!r} in manifest", file=sys.stderr)
            return EXIT_CONFIG
        out = Path(args.out or manifest["output_dir"])
    else:
        command = args.command
        code, inputs = _guarded(COMMANDS[command][0], args, resolving=True)
        if code:
            return code
        out = Path(args.out)
    _write_manifest(out, command, inputs, _seeds_of(command, inputs))
    code, result = _guarded(COMMANDS[command][1], inputs, out)
    return code or result


if __name__ == "__main__":
    sys.exit(main())
