from interfaces.errors import ConfigError
from interfaces.profiles import PROFILES, apply_flags, deep_merge, load_profile, load_yaml
from models.training import TrainConfig
import pytest


@pytest.mark.parametrize("profile", PROFILES)
@pytest.mark.parametrize("family_id", ["constant", "burgers", "fn2d"])
def test_builtin_profiles_build_train_configs(profile, family_id):
    settings = load_profile(profile, family_id)
    assert settings["generate"]["n_signals"] >= 10
    config = TrainConfig.from_dict(settings["train"])
    assert config.rho == 0.2
    assert config.alpha == 0.5


def test_fn2d_profile_uses_periodic_boundary():
    assert load_profile("desk", "fn2d")["generate"]["boundary"] == "periodic"


def test_flat_config_file_overrides_profile(tmp_path):
    path = tmp_path / "override.yaml"
    path.write_text("train:\n  epochs: 3\n  network:\n    d_z: 8\n")
    settings = load_profile("desk", "constant", path)
    assert settings["train"]["epochs"] == 3
    assert settings["train"]["network"]["d_z"] == 8
    assert settings["train"]["network"]["ae_hidden"] == 5


def test_family_keyed_config_file(tmp_path):
    path = tmp_path / "override.json"
    path.write_text('{"burgers": {"generate": {"n_signals": 12}}}')
    assert load_profile("desk", "burgers", path)["generate"]["n_signals"] == 12
    assert load_profile("desk", "constant", path)["generate"]["n_signals"] == 3750


def test_bad_config_files(tmp_path):
    with pytest.raises(ConfigError):
        load_profile("laptop", "constant")
    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("evaluate:\n  split: val\n")
    with pytest.raises(ConfigError):
        load_profile("desk", "constant", unknown)
    broken = tmp_path / "broken.yaml"
    broken.write_text("train: [unclosed\n")
    with pytest.raises(ConfigError):
        load_yaml(broken)
    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("42\n")
    with pytest.raises(ConfigError):
        load_yaml(scalar)
    with pytest.raises(ConfigError):
        load_yaml(tmp_path / "missing.yaml")
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert load_yaml(empty) == {}


def test_deep_merge_and_flags():
    base = {"a": {"b": 1, "c": 2}, "d": 3}
    merged = deep_merge(base, {"a": {"c": 5}})
    assert merged == {"a": {"b": 1, "c": 5}, "d": 3}
    assert base["a"]["c"] == 2
    assert apply_flags({"x": 1, "y": 2}, x=None, y=7, z=0) == {"x": 1, "y": 7, "z": 0}


@pytest.mark.parametrize("family_id", ["constant", "burgers", "fn2d"])
def test_profiles_train_long_enough(family_id):
    desk = TrainConfig.from_dict(load_profile("desk", family_id)["train"])
    assert desk.patience is not None and desk.patience >= 100
    assert desk.patience < desk.epochs
    assert TrainConfig.from_dict(load_profile("paper", family_id)["train"]).patience is None
