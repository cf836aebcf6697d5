"""Mask-and-recover purification with an ensemble over recoveries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .corpus import LabeledExample, TokenSequence
from .models import JointModel, classify_batch, fill_masks_batch
from .noise import NoiseSpec, noisy_copy

AGGREGATIONS = ("mean_softmax", "mean_logits")


@dataclass(frozen=True)
class PurifyConfig:
    n: int = 16
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    aggregation: str = "mean_softmax"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("recovery count n must be >= 1")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")


@dataclass
class PurifiedPrediction:
    probs: np.ndarray
    label: int
    recoveries: list[TokenSequence]
    noisy: list[TokenSequence]
    per_copy_probs: np.ndarray


def purify(text: Sequence[int], model: JointModel, noise: NoiseSpec, n: int) -> list[TokenSequence]:
    return purify_batch([text], model, noise, n)[0][1]


def purify_batch(texts: Sequence[Sequence[int]], model: JointModel, noise: NoiseSpec,
                 n: int) -> list[tuple[list[TokenSequence], list[TokenSequence]]]:
    """(noisy copies, recoveries) per text; all copies are recovered in one batched pass."""
    noisy = [noisy_copy(t, noise, i) for t in texts for i in range(n)]
    recovered = fill_masks_batch(model, noisy)
    return [(noisy[j * n : (j + 1) * n], recovered[j * n : (j + 1) * n]) for j in range(len(texts))]


def aggregate(copy_logits: np.ndarray, aggregation: str = "mean_softmax") -> np.ndarray:
    """Reduce (..., n_copies, n_classes) logits to class probabilities.

    Each column is sorted before averaging so the result is bitwise independent of copy order.
    """
    logits = torch.as_tensor(copy_logits, dtype=torch.float64)
    mean = lambda t: t.sort(dim=-2).values.mean(-2)
    if aggregation == "mean_logits":
        return mean(logits).softmax(-1).numpy()
    return mean(logits.softmax(-1)).numpy()


def purify_predict_batch(texts: Sequence[Sequence[int]], model: JointModel, cfg: PurifyConfig,
                         classifier: JointModel | None = None) -> list[PurifiedPrediction]:
    """``classifier`` defaults to ``model``; pass a separate one to pair a plain MLM with it."""
    classifier = classifier or model
    pairs = purify_batch(texts, model, cfg.noise, cfg.n)
    flat = [r for _, recs in pairs for r in recs]
    logits = classify_batch(classifier, flat).double().numpy().reshape(len(texts), cfg.n, -1)
    out = []
    for (noisy, recs), lg in zip(pairs, logits):
        probs = aggregate(lg, cfg.aggregation)
        out.append(PurifiedPrediction(probs, int(np.argmax(probs)), recs, noisy,
                                      torch.as_tensor(lg).softmax(-1).numpy()))
    return out


def purify_predict(text: Sequence[int], model: JointModel, cfg: PurifyConfig,
                   classifier: JointModel | None = None) -> PurifiedPrediction:
    return purify_predict_batch([text], model, cfg, classifier)[0]


def sweep_recovery_count(examples: Sequence[LabeledExample], model: JointModel, cfg: PurifyConfig,
                         n_values: Sequence[int], classifier: JointModel | None = None) -> list[dict]:
    """Accuracy of the first-n ensemble for each n, all drawn from one pool of max(n) recoveries."""
    if not n_values:
        raise ValueError("n_values must be non-empty")
    classifier = classifier or model
    pool = max(n_values)
    pairs = purify_batch([e.text for e in examples], model, cfg.noise, pool)
    flat = [r for _, recs in pairs for r in recs]
    logits = classify_batch(classifier, flat).double().numpy().reshape(len(examples), pool, -1)
    labels = np.array([e.label for e in examples])
    rows = []
    for n in n_values:
        probs = aggregate(logits[:, :n], cfg.aggregation)
        rows.append({"n": int(n), "accuracy": float((probs.argmax(-1) == labels).mean())})
    return rows


class ModelVictim:
    """Score-only query interface around a bare classifier."""

    def __init__(self, model: JointModel):
        self._model = model

    def __call__(self, texts: Sequence[Sequence[int]]) -> np.ndarray:
        return classify_batch(self._model, texts).double().softmax(-1).numpy()


class PurifiedVictim:
    """Score-only query interface whose every query runs the full purification ensemble."""

    def __init__(self, model: JointModel, cfg: PurifyConfig, classifier: JointModel | None = None,
                 chunk: int = 64):
        self._model = model
        self._classifier = classifier
        self._cfg = cfg
        self._chunk = chunk

    def __call__(self, texts: Sequence[Sequence[int]]) -> np.ndarray:
        out = []
        for i in range(0, len(texts), self._chunk):
            preds = purify_predict_batch(texts[i : i + self._chunk], self._model, self._cfg, self._classifier)
            out.extend(p.probs for p in preds)
        return np.stack(out) if out else np.zeros((0, 0))


def write_trace(path, texts: Sequence[Sequence[int]], predictions: Sequence[PurifiedPrediction],
                decode=None) -> None:
    """JSONL trace: original, noisy_i, recovered_i, per_copy_probs and S per example."""
    decode = decode or list
    with open(path, "w", encoding="utf-8") as fh:
        for text, pred in zip(texts, predictions):
            record = {
                "original": decode(text),
                "noisy": [decode(t) for t in pred.noisy],
                "recovered": [decode(t) for t in pred.recoveries],
                "per_copy_probs": np.round(pred.per_copy_probs, 6).tolist(),
                "S": np.round(pred.probs, 6).tolist(),
            }
            fh.write(json.dumps(record) + "\n")
