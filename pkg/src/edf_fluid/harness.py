"""Multi-N, multi-seed convergence experiments against the fluid solution.

A plan file is JSON:

    {
      "config": {...} | "config_path": "run.json",
      "N_list": [50, 200, 800],
      "replications": 20,
      "seed": 2024,
      "kappa": null,
      "workers": 1,
      "trend": {"metrics": ["err_Q", "err_R"], "ratio": 0.5, "max_inversion": 0.2},
      "diagnostics": {
        "frontier_bound": {"epsilon": 0.1, "min_fraction": 0.95},
        "cf_mass": {"max_mean": 0.05},
        "first_empty": {"tolerance": 0.2}
      }
    }

Every threshold above is a calibration choice, not a property of the model.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .distributions import y_star
from .errors import ConfigError
from .fluid import FluidSolution, problem_from_config, solve
from .measures import fmt, kolmogorov_distance
from .model import Regime, RunConfig, apply_overrides, config_from_dict
from .simulator import OutputGrid, SimTrace, simulate

METRICS = ("err_Q", "err_R", "err_F", "err_M")
QUANTILES = (0.1, 0.5, 0.9)
DEFAULT_TREND = {"metrics": ["err_Q", "err_R"], "ratio": 0.5, "max_inversion": 0.2}
PLAN_KEYS = {"config", "config_path", "N_list", "replications", "seed", "kappa", "workers",
             "trend", "diagnostics", "overrides"}


@dataclass(frozen=True)
class ExperimentPlan:
    config: RunConfig
    N_list: tuple[int, ...]
    replications: int = 20
    seed: int = 0
    kappa: float | None = None
    workers: int = 1
    trend: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_TREND))
    diagnostics: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        n = list(self.N_list)
        if len(n) < 3 or any(b <= a for a, b in zip(n, n[1:])):
            raise ConfigError("plan N_list must be strictly increasing with at least 3 entries")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        unknown = set(self.trend.get("metrics", [])) - set(METRICS)
        if unknown:
            raise ConfigError(f"unknown trend metrics: {sorted(unknown)}")

    def seeds(self) -> list[tuple[int, int]]:
        return [(N, rep) for N in self.N_list for rep in range(self.replications)]


def plan_from_dict(data: dict[str, Any], base_dir: str | Path = ".") -> ExperimentPlan:
    unknown = set(data) - PLAN_KEYS
    if unknown:
        raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
    if "config" in data:
        cfg_dict = data["config"]
    elif "config_path" in data:
        path = Path(base_dir) / data["config_path"]
        try:
            cfg_dict = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load plan config {path}: {exc}") from exc
    else:
        raise ConfigError("plan needs 'config' or 'config_path'")
    cfg_dict = apply_overrides(cfg_dict, data.get("overrides"))
    if "N_list" in data:
        cfg_dict = {**cfg_dict, "N_list": data["N_list"]}
    config = config_from_dict(cfg_dict)
    kappa = data.get("kappa", config.kappa)
    trend = {**DEFAULT_TREND, **data.get("trend", {})}
    return ExperimentPlan(
        config=config,
        N_list=config.N_list,
        replications=int(data.get("replications", 20)),
        seed=int(data.get("seed", config.seed)),
        kappa=None if kappa is None else float(kappa),
        workers=int(data.get("workers", 1)),
        trend=trend,
        diagnostics=dict(data.get("diagnostics", {})),
        raw={
            **{k: v for k, v in data.items() if k not in ("config_path", "overrides")},
            "config": config.to_dict(),
            "seed": int(data.get("seed", config.seed)),
        },
    )


def load_plan(path: str | Path, overrides: list[str] | None = None) -> ExperimentPlan:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read plan {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"plan {path} is not valid JSON: {exc}") from exc
    if isinstance(data, dict) and "config_path" in data and "config" not in data:
        # inline the config so that dotted overrides such as config.mu=0.5 reach it
        cfg_path = path.parent / data.pop("config_path")
        try:
            data["config"] = json.loads(cfg_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load plan config {cfg_path}: {exc}") from exc
    return plan_from_dict(apply_overrides(data, overrides), path.parent)


def replication_seed(base: int, N: int, rep: int) -> np.random.SeedSequence:
    """Seed of replication ``rep`` at scale ``N``; independent of run order."""
    return np.random.SeedSequence([int(base), int(N), int(rep)])


def fluid_for(plan: ExperimentPlan) -> FluidSolution:
    """The single fluid solution every replication is compared against."""
    law = plan.config.patience_law
    if not (law.is_continuous and law.strictly_increasing):
        raise ConfigError(
            f"patience law {law.kind!r} is outside the fluid model; refusing to compare"
        )
    prob = problem_from_config(plan.config)
    if plan.config.regime() is Regime.SUBCRITICAL:
        return solve(prob)
    return solve(prob, kappa=plan.kappa)


def replication_metrics(trace: SimTrace, sol: FluidSolution, y_bound: float | None = None) -> dict:
    """Distances of one scaled trace to the fluid solution, on the trace grid.

    ``y_bound`` is y* + epsilon for the frontier diagnostic (supercritical only).
    """
    t = trace.times
    row: dict[str, Any] = {
        "err_Q": float(np.max(np.abs(trace.q - sol.queue_at(t)))),
        "err_R": float(np.max(np.abs(trace.r - sol.reneging_at(t)))),
        "err_F": math.nan,
        "err_M": math.nan,
        "diag_cf_mass": float(np.max(trace.cf_mass)),
        "sup_frontier": float(np.max(trace.frontier)),
        "diag_frontier_bound": math.nan,
        "first_empty_time": math.nan if trace.first_empty_time is None else trace.first_empty_time,
    }
    if sol.frontier is not None:
        window = t >= sol.kappa
        row["err_F"] = float(np.max(np.abs(trace.frontier[window] - sol.frontier_at(t[window]))))
        snaps = trace.queue_snapshots
        row["err_M"] = max(
            (kolmogorov_distance(m, sol.limit_measure(s))
             for s, m in zip(snaps.times, snaps.measures) if s >= sol.kappa),
            default=math.nan,
        )
    if y_bound is not None:
        row["diag_frontier_bound"] = float(row["sup_frontier"] <= y_bound)
    return row


# Worker-process state, set once per process by _init_worker.
_WORKER: dict[str, Any] = {}


def _init_worker(plan: ExperimentPlan, sol: FluidSolution, y_bound: float | None) -> None:
    _WORKER.update(plan=plan, sol=sol, y_bound=y_bound)


def _run_one(task: tuple[int, int]) -> dict:
    plan, sol = _WORKER["plan"], _WORKER["sol"]
    N, rep = task
    cfg = plan.config
    grid = OutputGrid.uniform(cfg.horizon, cfg.output_points, cfg.snapshot_count)
    trace = simulate(cfg, N, replication_seed(plan.seed, N, rep), grid=grid)
    return {"N": N, "rep": rep, **replication_metrics(trace, sol, _WORKER["y_bound"])}


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str


@dataclass
class ConvergenceReport:
    plan: ExperimentPlan
    rows: list[dict]
    t_bar: float | None
    y_star: float | None
    verdicts: list[Verdict] = field(default_factory=list)

    def column(self, N: int, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows if r["N"] == N], dtype=float)

    def means(self, name: str) -> list[float]:
        return [float(np.mean(self.column(N, name))) for N in self.plan.N_list]

    def summary(self) -> dict[str, Any]:
        per_n = {}
        for N in self.plan.N_list:
            entry: dict[str, Any] = {}
            for name in (*METRICS, "diag_cf_mass", "sup_frontier"):
                col = self.column(N, name)
                if np.all(np.isnan(col)):
                    continue
                entry[name] = {
                    "mean": float(np.mean(col)),
                    **{f"q{int(q * 100)}": float(np.quantile(col, q)) for q in QUANTILES},
                }
            fb = self.column(N, "diag_frontier_bound")
            if not np.all(np.isnan(fb)):
                entry["frontier_bound_fraction"] = float(np.mean(fb))
            fe = self.column(N, "first_empty_time")
            entry["queue_emptied"] = int(np.sum(~np.isnan(fe)))
            if np.any(~np.isnan(fe)):
                entry["first_empty_time_mean"] = float(np.nanmean(fe))
            per_n[str(N)] = entry
        return {
            "N_list": list(self.plan.N_list),
            "replications": self.plan.replications,
            "seed": self.plan.seed,
            "regime": self.plan.config.regime().value,
            "t_bar": _json_float(self.t_bar),
            "y_star": _json_float(self.y_star),
            "per_N": per_n,
            "verdicts": [
                {"name": v.name, "pass": v.passed, "detail": v.detail} for v in self.verdicts
            ],
            "all_pass": self.all_pass,
        }

    @property
    def all_pass(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")

    def to_csv(self, path: str | Path) -> None:
        cols = ["N", "rep", *METRICS, "diag_cf_mass", "sup_frontier", "diag_frontier_bound",
                "first_empty_time"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([r["N"], r["rep"], *(fmt(r[c]) for c in cols[2:])])


def _json_float(x: float | None):
    if x is None or not math.isfinite(x):
        return None if x is None else str(x)
    return x


def trend_verdict(
    means: list[float], ratio: float = 0.5, max_inversion: float = 0.2, name: str = "trend"
) -> Verdict:
    """Nonincreasing means up to one small inversion, and a final/first drop to ``ratio``."""
    if len(means) < 3:
        return Verdict(name, False, "need at least 3 N values")
    if any(not math.isfinite(m) for m in means):
        return Verdict(name, False, f"non-finite mean in {means}")
    inversions = [(a, b) for a, b in zip(means, means[1:]) if b > a]
    shown = ", ".join(f"{m:.4g}" for m in means)
    if len(inversions) > 1:
        return Verdict(name, False, f"means ({shown}) have {len(inversions)} inversions")
    for a, b in inversions:
        if b - a >= max_inversion * max(a, b):
            return Verdict(name, False, f"means ({shown}) rise {a:.4g} -> {b:.4g}")
    if not means[-1] <= ratio * means[0]:
        return Verdict(name, False, f"means ({shown}): last exceeds {ratio} x first")
    return Verdict(name, True, f"means ({shown})")


def _evaluate(report: ConvergenceReport) -> list[Verdict]:
    plan = report.plan
    out = []
    trend = plan.trend
    for metric in trend.get("metrics", []):
        means = report.means(metric)
        out.append(trend_verdict(means, trend["ratio"], trend["max_inversion"], metric))
    diag = plan.diagnostics
    n_max = plan.N_list[-1]
    if "frontier_bound" in diag:
        need = float(diag["frontier_bound"].get("min_fraction", 0.95))
        frac = float(np.mean(report.column(n_max, "diag_frontier_bound")))
        out.append(Verdict(
            "frontier_bound", bool(frac >= need),
            f"fraction {frac:.3f} at N={n_max} with y*={report.y_star:.6g} (need >= {need})",
        ))
    if "cf_mass" in diag:
        cap = float(diag["cf_mass"].get("max_mean", 0.05))
        means = report.means("diag_cf_mass")
        mono = all(b <= a for a, b in zip(means, means[1:]))
        shown = ", ".join(f"{m:.4g}" for m in means)
        out.append(Verdict(
            "cf_mass", bool(mono and means[-1] <= cap),
            f"means ({shown}); nonincreasing={mono}; cap {cap}",
        ))
    if "first_empty" in diag:
        tol = float(diag["first_empty"].get("tolerance", 0.2))
        fe = report.column(n_max, "first_empty_time")
        if report.t_bar is None or not math.isfinite(report.t_bar):
            out.append(Verdict("first_empty", False, "fluid queue never empties on [0, T]"))
        elif np.any(np.isnan(fe)):
            missing = int(np.isnan(fe).sum())
            out.append(Verdict("first_empty", False, f"{missing} reps never emptied"))
        else:
            avg = float(np.mean(fe))
            out.append(Verdict(
                "first_empty", bool(abs(avg - report.t_bar) <= tol),
                f"mean first-empty time {avg:.4f} vs T_bar {report.t_bar:.4f} (tol {tol})",
            ))
    return out


def run_experiment(plan: ExperimentPlan) -> ConvergenceReport:
    """Run every (N, replication) pair and evaluate the plan's verdicts.

    Rows are ordered by (N, rep) whatever the completion order.
    """
    sol = fluid_for(plan)
    cfg = plan.config
    ys = y_star(cfg.patience_law, cfg.lam, cfg.mu) if cfg.regime() is Regime.SUPERCRITICAL else None
    eps = float(plan.diagnostics.get("frontier_bound", {}).get("epsilon", 0.1))
    y_bound = None if ys is None else ys + eps
    tasks = plan.seeds()
    if plan.workers > 1:
        with ProcessPoolExecutor(
            plan.workers, initializer=_init_worker, initargs=(plan, sol, y_bound)
        ) as pool:
            rows = list(pool.map(_run_one, tasks))
    else:
        _init_worker(plan, sol, y_bound)
        rows = [_run_one(task) for task in tasks]
    rows.sort(key=lambda r: (r["N"], r["rep"]))
    report = ConvergenceReport(plan, rows, sol.t_bar, ys)
    report.verdicts = _evaluate(report)
    return report
