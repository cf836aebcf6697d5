import pytest
import yaml

from textpure.config import DEFAULTS, ConfigError, load_config, parse_override


def test_defaults_validate():
    cfg = load_config()
    assert cfg.purify.n == 16 and cfg.adv.alpha == 0.1 and cfg.adv.epsilon == 0.2
    assert cfg.noise.mask_rate == 0.3 and cfg.noise.insert_rate == 0.1
    assert cfg.purify.noise == cfg.noise


def test_yaml_file_and_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"seed": 3, "attack": {"k": 4}, "noise": {"mask_rate": 0.2}}))
    cfg = load_config(path, ["attack.k=6", "purify.n=4", "sweep.n_values=[1, 2]"])
    assert cfg.seed == 3 and cfg.attack.k == 6 and cfg.purify.n == 4
    assert cfg.noise.mask_rate == 0.2 and cfg.sweep["n_values"] == [1, 2]


def test_serialized_config_round_trips(tmp_path):
    cfg = load_config(overrides=["attack.k=5"])
    path = tmp_path / "again.yaml"
    path.write_text(cfg.to_yaml())
    assert load_config(path).tree == cfg.tree


def test_parse_override_types():
    assert parse_override("a.b=0.5") == (["a", "b"], 0.5)
    assert parse_override("x=null") == (["x"], None)
    with pytest.raises(ConfigError):
        parse_override("nokey")


@pytest.mark.parametrize("override,message", [
    ("attack.kk=3", "attack.kk: unknown field"),
    ("noise.mask_rate=1.5", "noise"),
    ("noise.mask_rate=high", "noise.mask_rate: expected a number"),
    ("train.mode=magic", "train.mode"),
    ("train.epochs=two", "train.epochs: expected an integer"),
    ("purify.n=0", "purify"),
    ("model.dim=30", "model.dim"),
    ("adv.steps=0", "adv"),
    ("corpus.train=x.csv", "give both paths"),
    ("sweep.n_values=[0]", "sweep.n_values"),
    ("pretrain.enabled=1", "pretrain.enabled"),
    ("workers=0", "workers"),
    ("noise=3", "noise: expected a mapping"),
])
def test_field_precise_errors(override, message):
    with pytest.raises(ConfigError, match=message):
        load_config(overrides=[override])


def test_top_level_must_be_mapping(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(path)


def test_defaults_are_not_mutated():
    load_config(overrides=["attack.k=1"])
    assert DEFAULTS["attack"]["k"] == 12
