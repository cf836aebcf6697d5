"""Shared-encoder transformer with a classification head and a masked-LM head."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .corpus import MASK, PAD, SPECIAL_IDS, LabeledExample, TokenSequence, Vocabulary
from .noise import NoiseSpec, mask_replace_with_sources

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "textpure-checkpoint-v1"


class NonFiniteLossError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    num_classes: int = 2
    dim: int = 64
    heads: int = 4
    layers: int = 2
    ff_dim: int = 256
    max_len: int = 64
    zero_head: bool = True

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim={self.dim} not divisible by heads={self.heads}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    batch_size: int = 32
    epochs: int = 5
    max_len: int = 64
    w_c: float = 1.0
    w_mlm: float = 1.0
    seed: int = 0
    # False trains F_c on clean text only (plain fine-tuning).
    masked_cls_loss: bool = True
    optimizer: str = "adam"

    def __post_init__(self):
        for name in ("lr", "batch_size", "epochs", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.w_c < 0 or self.w_mlm < 0:
            raise ValueError("loss weights must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class Block(nn.Module):
    def __init__(self, dim, heads, ff_dim):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.ln2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff_dim), nn.GELU(), nn.Linear(ff_dim, dim))

    def forward(self, x, pad_mask):
        b, n, d = x.shape
        h = self.ln1(x)
        q, k, v = self.qkv(h).view(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // self.heads)
        scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        att = scores.softmax(-1) @ v
        x = x + self.proj(att.transpose(1, 2).reshape(b, n, d))
        return x + self.ff(self.ln2(x))


class JointModel(nn.Module):
    """Encoder shared by the classifier ``F_c`` and the mask filler ``F_m``."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.dim, padding_idx=PAD)
        self.pos_emb = nn.Embedding(config.max_len, config.dim)
        self.emb_ln = nn.LayerNorm(config.dim)
        self.blocks = nn.ModuleList(Block(config.dim, config.heads, config.ff_dim) for _ in range(config.layers))
        self.final_ln = nn.LayerNorm(config.dim)
        self.cls_head = nn.Linear(config.dim, config.num_classes)
        self.mlm_head = nn.Linear(config.dim, config.vocab_size)
        nn.init.normal_(self.tok_emb.weight, std=0.1)
        nn.init.normal_(self.pos_emb.weight, std=0.1)
        if config.zero_head:
            nn.init.zeros_(self.cls_head.weight)
            nn.init.zeros_(self.cls_head.bias)

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        """Word-embedding lookup; the site where training perturbations are added."""
        if ids.shape[1] > self.config.max_len:
            raise ValueError(f"sequence length {ids.shape[1]} exceeds max length {self.config.max_len}")
        return self.tok_emb(ids)

    def encode(self, emb: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(emb.shape[1], device=emb.device)
        h = self.emb_ln(emb + self.pos_emb(pos)[None])
        for block in self.blocks:
            h = block(h, pad_mask)
        return self.final_ln(h)

    def heads_from_hidden(self, h, pad_mask):
        keep = (~pad_mask).unsqueeze(-1).to(h.dtype)
        pooled = (h * keep).sum(1) / keep.sum(1).clamp_min(1.0)
        return self.cls_head(pooled), self.mlm_head(h)

    def forward(self, ids: torch.Tensor, delta: torch.Tensor | None = None):
        pad_mask = ids == PAD
        emb = self.embed(ids)
        if delta is not None:
            emb = emb + delta
        return self.heads_from_hidden(self.encode(emb, pad_mask), pad_mask)

    def forward_embedded(self, emb: torch.Tensor, ids: torch.Tensor):
        pad_mask = ids == PAD
        return self.heads_from_hidden(self.encode(emb, pad_mask), pad_mask)


# -- batching and inference ---------------------------------------------------


def pad_batch(seqs: Sequence[Sequence[int]], max_len: int | None = None) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    if max_len is not None and width > max_len:
        raise ValueError(f"sequence length {width} exceeds max length {max_len}")
    out = torch.full((len(seqs), width), PAD, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.as_tensor(s, dtype=torch.long)
    return out


def unpad(row: torch.Tensor) -> TokenSequence:
    return tuple(int(t) for t in row.tolist() if t != PAD)


@torch.no_grad()
def classify_batch(model: JointModel, texts: Sequence[Sequence[int]], batch_size: int = 512) -> torch.Tensor:
    model.eval()
    out = []
    for i in range(0, len(texts), batch_size):
        ids = pad_batch(texts[i : i + batch_size], model.config.max_len)
        out.append(model(ids)[0])
    return torch.cat(out)


def classify_logits(model: JointModel, text: Sequence[int]) -> np.ndarray:
    return classify_batch(model, [text])[0].double().numpy()


def predict_proba(model: JointModel, texts: Sequence[Sequence[int]]) -> np.ndarray:
    return classify_batch(model, texts).double().softmax(-1).numpy()


@torch.no_grad()
def fill_masks_batch(model: JointModel, texts: Sequence[Sequence[int]], batch_size: int = 512) -> list[TokenSequence]:
    """Replace every [MASK] with the MLM argmax over non-special tokens, in one pass."""
    model.eval()
    out: list[TokenSequence] = list(texts)
    todo = [i for i, t in enumerate(texts) if MASK in t]
    special = torch.tensor(sorted(SPECIAL_IDS))
    for start in range(0, len(todo), batch_size):
        chunk = todo[start : start + batch_size]
        ids = pad_batch([texts[i] for i in chunk], model.config.max_len)
        logits = model(ids)[1]
        logits[..., special] = float("-inf")
        filled = torch.where(ids == MASK, logits.argmax(-1), ids)
        for row, i in zip(filled, chunk):
            out[i] = tuple(int(t) for t in row[: len(texts[i])].tolist())
    return out


def fill_masks(model: JointModel, noisy: Sequence[int]) -> TokenSequence:
    return fill_masks_batch(model, [noisy])[0]


@torch.no_grad()
def mlm_top_k(model: JointModel, text: Sequence[int], pos: int, k: int,
              exclude: Sequence[int] = ()) -> list[int]:
    """Top-k MLM predictions at ``pos`` with that position masked."""
    if k <= 0:
        return []
    model.eval()
    masked = list(text)
    masked[pos] = MASK
    logits = model(pad_batch([masked], model.config.max_len))[1][0, pos]
    banned = sorted(set(SPECIAL_IDS) | set(exclude) | {text[pos]})
    logits[banned] = float("-inf")
    k = min(k, int(torch.isfinite(logits).sum()))
    return [int(i) for i in logits.topk(k).indices.tolist()]


class MLMProposer:
    """Candidate generator backed by a masked LM (the attacker's own model)."""

    def __init__(self, model: JointModel):
        self.model = model

    def __call__(self, text: Sequence[int], pos: int, k: int) -> list[int]:
        return mlm_top_k(self.model, text, pos, k)


# -- losses ------------------------------------------------------------------


class LossParts(NamedTuple):
    total: torch.Tensor
    l_c: torch.Tensor
    l_mlm: torch.Tensor


def masked_targets(x_clean: torch.Tensor, x_masked: torch.Tensor) -> torch.Tensor:
    """MLM targets for equal-length inputs: clean id at masked slots, -100 elsewhere."""
    if x_clean.shape != x_masked.shape:
        raise ValueError("pass mlm_targets explicitly when masked and clean lengths differ")
    hit = (x_masked == MASK) & (x_clean != MASK) & (x_clean != PAD)
    return torch.where(hit, x_clean, torch.full_like(x_clean, -100))


def mlm_loss(mlm_logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over positions whose target is not -100; zero if there are none."""
    sel = targets != -100
    if not bool(sel.any()):
        return mlm_logits.sum() * 0.0
    return F.cross_entropy(mlm_logits[sel], targets[sel])


def _as_batch(x, max_len=None):
    if isinstance(x, torch.Tensor):
        return x if x.dim() == 2 else x[None]
    if len(x) and isinstance(x[0], (int, np.integer)):
        x = [x]
    return pad_batch(x, max_len)


def joint_loss(model: JointModel, x_clean, x_masked, y, w_c: float = 1.0, w_mlm: float = 1.0,
               delta: torch.Tensor | None = None, mlm_targets: torch.Tensor | None = None,
               masked_cls_loss: bool = True) -> LossParts:
    """``w_c * (CE(F_c(X'), y) + CE(F_c(X), y)) + w_mlm * CE(F_m(X'), X)`` on masked slots.

    ``delta`` perturbs the word embeddings of ``x_masked`` only.
    """
    x_clean = _as_batch(x_clean, model.config.max_len)
    x_masked = _as_batch(x_masked, model.config.max_len)
    y = torch.as_tensor(y, dtype=torch.long).reshape(-1)
    if mlm_targets is None:
        mlm_targets = masked_targets(x_clean, x_masked)
    cls_noisy, mlm_logits = model(x_masked, delta)
    cls_clean, _ = model(x_clean)
    l_c = F.cross_entropy(cls_clean, y)
    if masked_cls_loss:
        l_c = l_c + F.cross_entropy(cls_noisy, y)
    l_mlm = mlm_loss(mlm_logits, mlm_targets)
    return LossParts(w_c * l_c + w_mlm * l_mlm, l_c, l_mlm)


# -- training ----------------------------------------------------------------


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)


def make_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(model.parameters(), lr=cfg.lr)
    return torch.optim.Adam(model.parameters(), lr=cfg.lr)


def mask_batch(texts: Sequence[Sequence[int]], p: float, rng: np.random.Generator):
    """Replacement-only masking for training; keeps lengths aligned with the clean batch."""
    return [mask_replace_with_sources(t, p, rng)[0] for t in texts]


def iterate_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


@torch.no_grad()
def evaluate_accuracy(model: JointModel, examples: Sequence[LabeledExample]) -> float:
    if not examples:
        return float("nan")
    pred = classify_batch(model, [e.text for e in examples]).argmax(-1)
    return float((pred == torch.tensor([e.label for e in examples])).double().mean())


@dataclass
class EpochStats:
    """Running sums for one epoch of training."""

    l_c: float = 0.0
    l_mlm: float = 0.0
    l_noise: float = 0.0
    grad_norm: float = 0.0
    mlm_hits: int = 0
    mlm_total: int = 0
    batches: int = 0
    extra: dict = field(default_factory=dict)

    def add_mlm(self, mlm_logits, targets):
        sel = targets != -100
        logits = mlm_logits.detach().clone()
        logits[..., sorted(SPECIAL_IDS)] = float("-inf")
        self.mlm_hits += int((logits.argmax(-1)[sel] == targets[sel]).sum())
        self.mlm_total += int(sel.sum())

    def row(self, epoch: int, clean_acc: float) -> dict:
        n = max(self.batches, 1)
        return {
            "epoch": epoch,
            "L_c": self.l_c / n,
            "L_mlm": self.l_mlm / n,
            "L_noise": self.l_noise / n,
            "clean_acc": clean_acc,
            "mlm_acc": self.mlm_hits / self.mlm_total if self.mlm_total else float("nan"),
            "grad_norm": self.grad_norm / n,
        }


def grad_norm(model: nn.Module) -> float:
    sq = sum(float(p.grad.pow(2).sum()) for p in model.parameters() if p.grad is not None)
    return math.sqrt(sq)


def check_finite(loss: torch.Tensor, where: str) -> None:
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {float(loss)} at {where}")


def new_model(model_config: ModelConfig, seed: int) -> JointModel:
    seed_everything(seed)
    return JointModel(model_config)


def train_joint(examples: Sequence[LabeledExample], model_config: ModelConfig, config: TrainConfig,
                noise: NoiseSpec, model: JointModel | None = None,
                checkpoint_path=None, vocab: Vocabulary | None = None) -> tuple[JointModel, list[dict]]:
    """Minibatch training on the joint loss. Returns the model and per-epoch log rows."""
    if not examples:
        raise ValueError("empty training set")
    model = model or new_model(model_config, config.seed)
    opt = make_optimizer(model, config)
    rng = np.random.default_rng([config.seed, 1])
    texts = [e.text for e in examples]
    labels = torch.tensor([e.label for e in examples])
    history = []
    for epoch in range(config.epochs):
        model.train()
        stats = EpochStats()
        for idx in iterate_batches(len(examples), config.batch_size, rng):
            batch = [texts[i] for i in idx]
            x_clean = pad_batch(batch, config.max_len)
            x_masked = pad_batch(mask_batch(batch, noise.mask_rate, rng), config.max_len)
            targets = masked_targets(x_clean, x_masked)
            parts = joint_loss(model, x_clean, x_masked, labels[idx], config.w_c, config.w_mlm,
                               mlm_targets=targets, masked_cls_loss=config.masked_cls_loss)
            check_finite(parts.total, f"epoch {epoch} batch {stats.batches}")
            opt.zero_grad()
            parts.total.backward()
            stats.grad_norm += grad_norm(model)
            opt.step()
            with torch.no_grad():
                stats.add_mlm(model(x_masked)[1], targets)
            stats.l_c += float(parts.l_c.detach())
            stats.l_mlm += float(parts.l_mlm.detach())
            stats.batches += 1
        row = stats.row(epoch, evaluate_accuracy(model, examples))
        logger.info("epoch %d: %s", epoch, row)
        history.append(row)
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, vocab, seed=config.seed)
    return model, history


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(model: JointModel, path, vocab: Vocabulary | None = None, seed: int | None = None,
                    extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_config": asdict(model.config),
        "vocab_hash": vocab.fingerprint() if vocab is not None else None,
        "seed": seed,
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "extra": extra or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path, vocab: Vocabulary | None = None) -> JointModel:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if vocab is not None and payload["vocab_hash"] not in (None, vocab.fingerprint()):
        raise CheckpointError(f"{path}: vocabulary hash mismatch")
    model = JointModel(ModelConfig(**payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    dtype = next(iter(payload["state_dict"].values())).dtype
    model.to(dtype)
    model.eval()
    return model
