"""System parameters, initial condition and the JSON run configuration."""

from __future__ import annotations

import copy
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .distributions import Distribution, Exponential, distribution_from_dict, y_star
from .errors import ConfigError
from .measures import FiniteMeasure


class Regime(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


def regime_of(lam: float, mu: float) -> Regime:
    if lam > mu:
        return Regime.SUPERCRITICAL
    if lam == mu:
        return Regime.CRITICAL
    return Regime.SUBCRITICAL


@dataclass(frozen=True)
class SystemParams:
    """Fluid-scale rates; the N-th system runs with rates N*lam and N*mu."""

    lam: float
    mu: float
    N: int
    horizon: float
    seed: int = 0

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ConfigError("lambda and mu must be > 0")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError("N must be an integer >= 1")
        if not self.horizon > 0:
            raise ConfigError("horizon must be > 0")

    def regime(self) -> Regime:
        return regime_of(self.lam, self.mu)


@dataclass(frozen=True)
class InitialCondition:
    """Fluid initial queue measure ``mass * law`` and initial frontier.

    Only continuous laws are accepted so that the cumulative function of the
    initial measure is continuous; the law must put no mass on [0, frontier0].
    """

    mass: float
    law: Distribution | None
    frontier0: float = 0.0

    def __post_init__(self):
        if self.mass < 0 or not math.isfinite(self.mass):
            raise ConfigError("initial mass must be finite and >= 0")
        if self.frontier0 < 0:
            raise ConfigError("frontier0 must be >= 0")
        if self.mass > 0:
            if self.law is None:
                raise ConfigError("initial_measure with positive mass needs a law")
            if not self.law.is_continuous:
                raise ConfigError(
                    f"initial measure law {self.law.kind!r} is not continuous; "
                    "only continuous initial measures are accepted"
                )
            if self.law.cdf(self.frontier0) > 0:
                raise ConfigError("initial measure charges [0, frontier0]")

    @property
    def measure(self) -> FiniteMeasure:
        if self.mass == 0:
            return FiniteMeasure.zero()
        law, mass = self.law, self.mass
        return FiniteMeasure.analytic(
            lambda a: mass * law.tail(a),
            total_mass=mass,
            upper=_effective_upper(law),
        )

    def tail(self, a):
        """Initial tail a -> Q_0(a, inf)."""
        if self.mass == 0:
            return 0.0 * a
        return self.mass * self.law.tail(a)

    def check_frontier(self, lam: float, mu: float, patience: Distribution) -> None:
        if lam > mu:
            ys = y_star(patience, lam, mu)
            if self.frontier0 > ys:
                raise ConfigError(f"frontier0={self.frontier0} exceeds y*={ys}")


def _effective_upper(law: Distribution) -> float:
    """A point beyond which the law's tail is below 1e-13."""
    if math.isfinite(law.y_max):
        return law.y_max
    return law.quantile(1.0 - 1e-13)


REQUIRED_KEYS = ("lambda", "mu", "N_list", "horizon", "patience_law", "initial_measure")
OPTIONAL_KEYS = {
    "seed": 0,
    "arrival_law": {"kind": "exponential", "rate": 1.0},
    "service_law": {"kind": "exponential", "rate": 1.0},
    "frontier0": 0.0,
    "output_points": 512,
    "snapshot_count": 32,
    "fluid_steps": 4096,
    "event_cap": 10_000_000,
    "bypass_updates_frontier": True,
    "kappa": None,
}


@dataclass(frozen=True)
class RunConfig:
    lam: float
    mu: float
    N_list: tuple[int, ...]
    horizon: float
    seed: int
    arrival_law: Distribution
    service_law: Distribution
    patience_law: Distribution
    initial: InitialCondition
    output_points: int = 512
    snapshot_count: int = 32
    fluid_steps: int = 4096
    event_cap: int = 10_000_000
    bypass_updates_frontier: bool = True
    kappa: float | None = None
    raw: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def params(self, N: int | None = None, seed: int | None = None) -> SystemParams:
        return SystemParams(
            lam=self.lam,
            mu=self.mu,
            N=self.N_list[0] if N is None else N,
            horizon=self.horizon,
            seed=self.seed if seed is None else seed,
        )

    def regime(self) -> Regime:
        return regime_of(self.lam, self.mu)

    def to_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self.raw)


def apply_overrides(data: dict[str, Any], overrides: list[str] | None) -> dict[str, Any]:
    """Apply ``key=value`` overrides; values parse as JSON, else stay strings.

    Dotted keys reach into nested objects, e.g. ``patience_law.rate=2``.
    """
    data = copy.deepcopy(data)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return data


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    """Validate a parsed config mapping. Unknown keys are errors."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigError(f"missing required config key: {key}")
    resolved = {**copy.deepcopy(OPTIONAL_KEYS), **copy.deepcopy(data)}

    try:
        lam = float(resolved["lambda"])
        mu = float(resolved["mu"])
        horizon = float(resolved["horizon"])
        n_list = tuple(int(n) for n in resolved["N_list"])
        seed = int(resolved["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric config value: {exc}") from exc
    if not n_list:
        raise ConfigError("N_list must be non-empty")

    init = resolved["initial_measure"]
    if not isinstance(init, dict) or "mass" not in init:
        raise ConfigError("initial_measure must be an object with 'mass' (and 'law' if mass > 0)")
    extra = set(init) - {"mass", "law"}
    if extra:
        raise ConfigError(f"unknown initial_measure keys: {sorted(extra)}")
    init_law = distribution_from_dict(init["law"]) if init.get("law") is not None else None
    initial = InitialCondition(float(init["mass"]), init_law, float(resolved["frontier0"]))

    patience = distribution_from_dict(resolved["patience_law"])
    arrival = distribution_from_dict(resolved["arrival_law"])
    service = distribution_from_dict(resolved["service_law"])
    for name, law in (("arrival_law", arrival), ("service_law", service)):
        if not 0 < law.mean() < math.inf:
            raise ConfigError(f"{name} must have a finite positive mean")
    # range checks live on SystemParams
    SystemParams(lam, mu, n_list[0], horizon, seed)
    initial.check_frontier(lam, mu, patience)

    kappa = resolved["kappa"]
    return RunConfig(
        lam=lam,
        mu=mu,
        N_list=n_list,
        horizon=horizon,
        seed=seed,
        arrival_law=arrival,
        service_law=service,
        patience_law=patience,
        initial=initial,
        output_points=int(resolved["output_points"]),
        snapshot_count=int(resolved["snapshot_count"]),
        fluid_steps=int(resolved["fluid_steps"]),
        event_cap=int(resolved["event_cap"]),
        bypass_updates_frontier=bool(resolved["bypass_updates_frontier"]),
        kappa=None if kappa is None else float(kappa),
        raw=resolved,
    )


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(apply_overrides(data, overrides))


def example_config(mu: float, theta: float, lam: float = 1.0, **extra) -> dict[str, Any]:
    """Config mapping for the exponential-patience example family.

    Initial measure e^{-x} (unit mass), patience G(x) = 1 - e^{-theta x}.
    """
    data = {
        "lambda": lam,
        "mu": mu,
        "N_list": [50, 200, 800],
        "horizon": 5.0,
        "seed": 2024,
        "patience_law": Exponential(theta).to_dict(),
        "initial_measure": {"mass": 1.0, "law": Exponential(1.0).to_dict()},
        "frontier0": 0.0,
    }
    data.update(extra)
    return data
