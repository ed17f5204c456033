from __future__ import annotations

import json

import pytest

from edf_fluid.distributions import Deterministic, Exponential, Uniform
from edf_fluid.errors import ConfigError
from edf_fluid.model import (
    InitialCondition,
    Regime,
    SystemParams,
    apply_overrides,
    config_from_dict,
    example_config,
    load_config,
)


def test_regime():
    assert SystemParams(2.0, 1.0, 10, 1.0).regime() is Regime.SUPERCRITICAL
    assert SystemParams(1.0, 1.0, 10, 1.0).regime() is Regime.CRITICAL
    assert SystemParams(0.5, 1.0, 10, 1.0).regime() is Regime.SUBCRITICAL


@pytest.mark.parametrize("args", [(0.0, 1.0, 1, 1.0), (1.0, -1.0, 1, 1.0), (1.0, 1.0, 0, 1.0),
                                  (1.0, 1.0, 1, 0.0)])
def test_params_validation(args):
    with pytest.raises(ConfigError):
        SystemParams(*args)


def test_initial_condition_rejects_atoms_and_mass_below_frontier():
    with pytest.raises(ConfigError):
        InitialCondition(1.0, Deterministic(1.0))
    with pytest.raises(ConfigError):
        InitialCondition(1.0, Exponential(1.0), frontier0=0.5)
    ic = InitialCondition(1.0, Uniform(0.5, 2.0), frontier0=0.5)
    assert ic.measure.total_mass == 1.0


def test_frontier0_above_y_star_rejected():
    data = example_config(1.0, 1.0, lam=2.0)
    data["initial_measure"]["law"] = Uniform(0.8, 2.0).to_dict()
    data["frontier0"] = 0.8
    with pytest.raises(ConfigError, match="y\\*"):
        config_from_dict(data)


def test_missing_key_named():
    data = example_config(0.5, 2.0)
    del data["patience_law"]
    with pytest.raises(ConfigError, match="patience_law"):
        config_from_dict(data)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({**example_config(0.5, 2.0), "lamda": 1.0})


def test_defaults_filled_in():
    cfg = config_from_dict(example_config(0.5, 2.0))
    assert cfg.output_points == 512
    assert cfg.snapshot_count == 32
    assert cfg.fluid_steps == 4096
    assert cfg.arrival_law == Exponential(1.0)
    assert cfg.to_dict()["bypass_updates_frontier"] is True


def test_overrides():
    data = example_config(0.5, 2.0)
    out = apply_overrides(data, ["mu=0.75", "patience_law.rate=3", "N_list=[10,20,40]"])
    assert out["mu"] == 0.75
    assert out["patience_law"]["rate"] == 3
    assert out["N_list"] == [10, 20, 40]
    assert data["mu"] == 0.5
    with pytest.raises(ConfigError):
        apply_overrides(data, ["mu"])


def test_load_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(example_config(0.5, 2.0)))
    cfg = load_config(path, ["seed=7"])
    assert cfg.seed == 7
    assert cfg.regime() is Regime.SUPERCRITICAL
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
