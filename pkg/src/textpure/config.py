"""Experiment configuration: one nested YAML file, dotted-key overrides, eager validation."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .advtrain import AdvTrainConfig
from .attack import AttackConfig
from .models import TrainConfig
from .noise import NoiseSpec
from .purify import PurifyConfig
from .synthetic import SyntheticSpec

MODES = ("plain", "mlm", "joint", "adv")


class ConfigError(ValueError):
    pass


def _defaults() -> dict:
    train = asdict(TrainConfig())
    return {
        "seed": 0,
        "output_dir": "runs/default",
        "workers": 1,
        "corpus": {
            "train": None,
            "test": None,
            "unlabeled": None,
            "format": None,
            "embeddings": None,
            "stopwords": None,
            "num_classes": 2,
            "sample": None,
            "synonym_k_max": 50,
            "synthetic": SyntheticSpec().to_dict(),
        },
        "model": {"dim": 64, "heads": 4, "layers": 2, "ff_dim": 256, "max_len": 64},
        "train": {**train, "mode": "adv"},
        # masked-LM pretraining on unlabeled text; the result is the vanilla mask filler
        # and the initialization of every fine-tuned model
        "pretrain": {"enabled": True, "epochs": 4, "lr": 1e-3},
        "adv": {k: v for k, v in asdict(AdvTrainConfig()).items() if k != "train"},
        "noise": NoiseSpec().to_dict(),
        "purify": {"n": 16, "aggregation": "mean_softmax"},
        "attack": asdict(AttackConfig()),
        "sweep": {"n_values": [1, 4, 16, 32], "k_values": [0, 2, 4, 8, 12]},
    }


DEFAULTS = _defaults()


def _merge(base: dict, update: Mapping, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"{path}: unknown field")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{path}: expected a mapping")
            out[key] = _merge(base[key], value, path + ".")
        else:
            out[key] = value
    return out


def parse_override(item: str) -> tuple[list[str], Any]:
    """``a.b=value`` with the value parsed as YAML (so numbers, lists and null work)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key.path=value")
    key, raw = item.split("=", 1)
    return key.strip().split("."), yaml.safe_load(raw)


def apply_overrides(tree: dict, overrides: Sequence[str]) -> dict:
    for item in overrides:
        keys, value = parse_override(item)
        nested: Any = value
        for k in reversed(keys):
            nested = {k: nested}
        tree = _merge(tree, nested)
    return tree


def _build(cls, section: str, values: Mapping):
    names = {f.name for f in fields(cls)}
    kwargs = {k: v for k, v in values.items() if k in names}
    for f in fields(cls):
        if f.name not in kwargs:
            continue
        v = kwargs[f.name]
        expected = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
        if expected == "bool" and not isinstance(v, bool):
            raise ConfigError(f"{section}.{f.name}: expected a boolean, got {v!r}")
        if expected == "int" and (isinstance(v, bool) or not isinstance(v, int)):
            raise ConfigError(f"{section}.{f.name}: expected an integer, got {v!r}")
        if expected == "float":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{section}.{f.name}: expected a number, got {v!r}")
            kwargs[f.name] = float(v)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


@dataclass
class ExperimentConfig:
    tree: dict
    train: TrainConfig
    adv: AdvTrainConfig
    noise: NoiseSpec
    purify: PurifyConfig
    attack: AttackConfig
    synthetic: SyntheticSpec

    @property
    def seed(self) -> int:
        return self.tree["seed"]

    @property
    def mode(self) -> str:
        return self.tree["train"]["mode"]

    @property
    def output_dir(self) -> Path:
        return Path(self.tree["output_dir"])

    @property
    def corpus(self) -> dict:
        return self.tree["corpus"]

    @property
    def model(self) -> dict:
        return self.tree["model"]

    @property
    def pretrain(self) -> dict:
        return self.tree["pretrain"]

    @property
    def sweep(self) -> dict:
        return self.tree["sweep"]

    @property
    def workers(self) -> int:
        return self.tree["workers"]

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.tree, sort_keys=True)


def validate(tree: dict) -> ExperimentConfig:
    if not isinstance(tree["seed"], int) or isinstance(tree["seed"], bool):
        raise ConfigError("seed: expected an integer")
    if not isinstance(tree["workers"], int) or tree["workers"] < 1:
        raise ConfigError("workers: expected a positive integer")
    if tree["train"]["mode"] not in MODES:
        raise ConfigError(f"train.mode: must be one of {MODES}, got {tree['train']['mode']!r}")
    corpus = tree["corpus"]
    if (corpus["train"] is None) != (corpus["test"] is None):
        raise ConfigError("corpus.train/corpus.test: give both paths or neither (synthetic corpus)")
    if corpus["format"] not in (None, "csv", "jsonl"):
        raise ConfigError(f"corpus.format: must be csv or jsonl, got {corpus['format']!r}")
    if corpus["sample"] is not None and (not isinstance(corpus["sample"], int) or corpus["sample"] < 1):
        raise ConfigError("corpus.sample: expected a positive integer or null")
    if not isinstance(corpus["num_classes"], int) or corpus["num_classes"] < 2:
        raise ConfigError("corpus.num_classes: expected an integer >= 2")
    for key in ("dim", "heads", "layers", "ff_dim", "max_len"):
        v = tree["model"][key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"model.{key}: expected a positive integer, got {v!r}")
    if tree["model"]["dim"] % tree["model"]["heads"]:
        raise ConfigError("model.dim: must be divisible by model.heads")
    pre = tree["pretrain"]
    if not isinstance(pre["enabled"], bool):
        raise ConfigError(f"pretrain.enabled: expected a boolean, got {pre['enabled']!r}")
    if isinstance(pre["epochs"], bool) or not isinstance(pre["epochs"], int) or pre["epochs"] < 1:
        raise ConfigError(f"pretrain.epochs: expected a positive integer, got {pre['epochs']!r}")
    if isinstance(pre["lr"], bool) or not isinstance(pre["lr"], (int, float)) or pre["lr"] <= 0:
        raise ConfigError(f"pretrain.lr: expected a positive number, got {pre['lr']!r}")
    for key in ("n_values", "k_values"):
        vals = tree["sweep"][key]
        if not isinstance(vals, list) or not vals or not all(isinstance(v, int) and v >= 0 for v in vals):
            raise ConfigError(f"sweep.{key}: expected a non-empty list of non-negative integers")
    if 0 in tree["sweep"]["n_values"]:
        raise ConfigError("sweep.n_values: recovery counts must be >= 1")

    train = _build(TrainConfig, "train", tree["train"])
    adv = _build(AdvTrainConfig, "adv", {**tree["adv"], "train": train})
    noise = _build(NoiseSpec, "noise", {**tree["noise"], "max_len": tree["model"]["max_len"]})
    purify = _build(PurifyConfig, "purify", {**tree["purify"], "noise": noise})
    attack = _build(AttackConfig, "attack", tree["attack"])
    synthetic = _build(SyntheticSpec, "corpus.synthetic", tree["corpus"]["synthetic"])
    return ExperimentConfig(tree, train, adv, noise, purify, attack, synthetic)


def load_config(path=None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    tree = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, Mapping):
            raise ConfigError(f"{path}: top level must be a mapping")
        tree = _merge(tree, loaded)
    tree = apply_overrides(tree, overrides)
    return validate(tree)
