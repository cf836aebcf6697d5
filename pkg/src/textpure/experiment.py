"""Glue between a validated config and the library: data, models, victims, reports."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .advtrain import train_adversarial
from .attack import AttackConfig, Candidates
from .config import ExperimentConfig
from .corpus import (LabeledExample, SynonymTable, Vocabulary, build_synonym_table, detokenize,
                     embedding_matrix, load_dataset, load_embeddings, read_raw_dataset, tokenize)
from .evaluate import EvalReport, evaluate_defense
from .models import JointModel, MLMProposer, ModelConfig, load_checkpoint, save_checkpoint, train_joint
from .purify import ModelVictim, PurifyConfig, PurifiedVictim
from .synthetic import write_corpus

logger = logging.getLogger(__name__)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir) -> Path:
    """List every file under ``out_dir`` (except the manifest) with its SHA-256."""
    out_dir = Path(out_dir)
    files = {str(p.relative_to(out_dir)): _sha256(p) for p in sorted(out_dir.rglob("*"))
             if p.is_file() and p.name != "manifest.json"}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps({"files": files}, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


class Experiment:
    """Corpus, vocabulary, synonym table and model bookkeeping for one config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = cfg.output_dir
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "config.yaml").write_text(cfg.to_yaml(), encoding="utf-8")
        self._load_corpus()

    def _load_corpus(self) -> None:
        c = self.cfg.corpus
        if c["train"] is None:
            paths = write_corpus(self.out / "corpus", self.cfg.synthetic)
            train_path, test_path = paths["train"], paths["test"]
            emb_path = c["embeddings"] or paths["embeddings"]
            stop_path = c["stopwords"] or paths["stopwords"]
            unlabeled_path = c["unlabeled"] or paths["unlabeled"]
        else:
            train_path, test_path = Path(c["train"]), Path(c["test"])
            emb_path, stop_path, unlabeled_path = c["embeddings"], c["stopwords"], c["unlabeled"]
        fmt, k = c["format"], c["num_classes"]
        self.vocab = Vocabulary.build(t for t, _ in read_raw_dataset(train_path, fmt))
        max_len = self.cfg.model["max_len"]
        self.train = load_dataset(train_path, self.vocab, k, fmt, max_len)
        self.test = load_dataset(test_path, self.vocab, k, fmt, max_len)
        self.unlabeled = []
        if unlabeled_path is not None:
            lines = Path(unlabeled_path).read_text(encoding="utf-8").splitlines()
            self.unlabeled = [tokenize(line, self.vocab, max_len) for line in lines if line.strip()]
        if c["sample"] is not None and c["sample"] < len(self.test):
            rng = np.random.default_rng([self.cfg.seed, 7])
            idx = sorted(rng.choice(len(self.test), c["sample"], replace=False))
            self.test = [self.test[i] for i in idx]
        stop = set()
        if stop_path is not None:
            stop = {self.vocab.lookup(w) for w in Path(stop_path).read_text(encoding="utf-8").split()}
        self.protected = frozenset(stop | set(self.vocab.punctuation_ids()))
        if emb_path is not None:
            emb = embedding_matrix(load_embeddings(emb_path), self.vocab)
        else:
            from .corpus import train_skipgram

            emb = train_skipgram([e.text for e in self.train], len(self.vocab), seed=self.cfg.seed)
        self.synonyms: SynonymTable = build_synonym_table(emb, c["synonym_k_max"], threshold=-1.0)

    @property
    def model_config(self) -> ModelConfig:
        m = self.cfg.model
        return ModelConfig(len(self.vocab), self.cfg.corpus["num_classes"], m["dim"], m["heads"],
                           m["layers"], m["ff_dim"], m["max_len"])

    def decode(self, ids) -> str:
        return detokenize(ids, self.vocab)

    # -- models --

    def train_model(self, mode: str, checkpoint=None) -> tuple[JointModel, list[dict]]:
        """``mlm`` pretrains the mask filler; the other modes fine-tune from it when pretraining is on."""
        tc = self.cfg.train
        pre = self.cfg.pretrain
        init = None
        examples = self.train
        if mode == "mlm":
            tc = replace(tc, w_c=0.0)
            if pre["enabled"]:
                tc = replace(tc, epochs=pre["epochs"], lr=float(pre["lr"]))
                examples = [LabeledExample(t, 0) for t in self.unlabeled] + list(self.train)
        elif pre["enabled"]:
            init = copy.deepcopy(self.model("mlm"))
        if mode == "plain":
            tc = replace(tc, w_mlm=0.0, masked_cls_loss=False)
        if mode == "adv":
            model, history = train_adversarial(examples, self.model_config, replace(self.cfg.adv, train=tc),
                                               self.cfg.noise, model=init)
        else:
            model, history = train_joint(examples, self.model_config, tc, self.cfg.noise, model=init)
        if checkpoint is not None:
            save_checkpoint(model, checkpoint, self.vocab, seed=tc.seed, extra={"mode": mode})
        return model, history

    def model(self, mode: str) -> JointModel:
        """Train on first use and cache under ``output_dir/models``."""
        path = self.out / "models" / f"{mode}.pt"
        if path.exists():
            return load_checkpoint(path, self.vocab)
        model, history = self.train_model(mode, path)
        write_log(self.out / "models" / f"{mode}_log.csv", history)
        return model

    def load(self, path) -> JointModel:
        return load_checkpoint(path, self.vocab)

    # -- victims and attacks --

    def victim(self, defense: str, model: JointModel, purify: PurifyConfig | None = None,
               mlm_model: JointModel | None = None):
        if defense == "none":
            return ModelVictim(model)
        if defense == "purify":
            purify = purify or self.cfg.purify
            if mlm_model is not None:
                return PurifiedVictim(mlm_model, purify, classifier=model)
            return PurifiedVictim(model, purify)
        raise ValueError(f"unknown defense {defense!r}")

    def candidates(self, proposer_model: JointModel | None = None) -> Candidates:
        return Candidates(self.synonyms, MLMProposer(proposer_model) if proposer_model is not None else None)

    def evaluate(self, victim, attack: AttackConfig | None = None, name: str = "", extra: dict | None = None,
                 proposer_model: JointModel | None = None) -> tuple[EvalReport, list]:
        attack = attack or self.cfg.attack
        if attack.candidate_source == "mlm" and proposer_model is None:
            proposer_model = self.model("mlm")
        config = {"seed": self.cfg.seed, "noise": asdict(self.cfg.noise), "train": asdict(self.cfg.train),
                  "corpus": self.cfg.corpus, **(extra or {})}
        return evaluate_defense(victim, self.test, attack, self.candidates(proposer_model), self.protected,
                                self.synonyms.sentence_similarity, config, name=name,
                                workers=self.cfg.workers)


def write_log(path, history: list[dict]) -> None:
    from .evaluate import write_curve_csv

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_curve_csv(path, history)
