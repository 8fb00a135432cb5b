import json

import pytest

from otpinn.config import ConfigError, config_from_dict, dump_config, load_config, resolve_seed


def test_minimal_config_fills_defaults():
    cfg = config_from_dict({"system": "vdp_rayleigh"})
    assert (cfg.H, cfg.M, cfg.nOT, cfg.optimizer.max_iters) == (48, 200, 10, 10000)
    assert cfg.bounds() == ([-2.0, -2.0], [2.0, 2.0])
    assert cfg.dx_train == 0.25 and cfg.dx_quad == cfg.dx_test == 0.05
    assert cfg.seed is None


def test_presets():
    vdp = config_from_dict({"system": "vdp"})
    assert vdp.bounds() == ([-4.0, -4.0], [4.0, 4.0]) and vdp.dx_train == 0.1
    ou = config_from_dict({"system": "ou1d"})
    assert ou.n == 1 and ou.bounds() == ([-2.0], [2.0])


@pytest.mark.parametrize(
    "data, match",
    [
        ({"nOT": -1}, "nOT"),
        ({"M": 0}, "M"),
        ({"dx_train": 0.01}, "dx_test"),
        ({"colour": "red"}, "unknown config key"),
        ({"optimizer": {"max_iter": 5}}, "unknown optimizer key"),
        ({"optimizer": {"c1": 0.95}}, "optimizer"),
        ({"system": "lorenz"}, "system"),
        ({"system": "custom"}, "drift"),
        ({"drift": ["x2", "-x1"]}, "custom"),
        ({"boundary_mode": "dirichlet"}, "boundary_mode"),
        ({"lower": 3.0}, "lower < upper"),
        ({"seed": -4}, "seed"),
        ({"cost": "manhattan"}, "cost"),
    ],
)
def test_invalid_configs(data, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(data)


def test_custom_system_config():
    cfg = config_from_dict({"system": "custom", "drift": ["x2", "-x1 - x2"], "lower": [-3, -1], "upper": [3, 1]})
    assert cfg.n == 2 and cfg.bounds() == ([-3.0, -1.0], [3.0, 1.0])


def test_round_trip(tmp_path):
    cfg = config_from_dict({"system": "vdp", "M": 50, "seed": 9, "optimizer": {"gtol": 1e-6}})
    path = tmp_path / "c.json"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_json_errors_report_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "M": 5,\n  "nOT": }')
    with pytest.raises(ConfigError, match=r"bad\.json:3:\d+"):
        load_config(path)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    path.write_text(json.dumps([1, 2]))
    with pytest.raises(ConfigError, match="object"):
        load_config(path)


def test_seed_resolution():
    cfg = config_from_dict({"seed": 5})
    assert resolve_seed(cfg) is cfg
    drawn = resolve_seed(config_from_dict({}))
    assert isinstance(drawn.seed, int) and 0 <= drawn.seed < 2**32
