"""Adversarial training of the joint model with embedding-space perturbations.

Each batch is masked once, then ``steps + 1`` rounds of normalized gradient
ascent on a perturbation ``delta`` of the masked text's word embeddings are run.
Every round adds the parameter gradient of the classification, masked-LM and
denoising losses; the optimizer step uses the accumulated gradient averaged over
rounds (or the raw sum when ``average_steps`` is off).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .corpus import PAD, LabeledExample, Vocabulary
from .models import (EpochStats, JointModel, ModelConfig, TrainConfig, check_finite, evaluate_accuracy,
                     grad_norm, iterate_batches, make_optimizer, mask_batch, masked_targets, mlm_loss,
                     new_model, pad_batch, save_checkpoint)
from .noise import NoiseSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdvTrainConfig:
    steps: int = 2
    alpha: float = 0.1
    epsilon: float = 0.2
    sigma: float = 1e-2
    train: TrainConfig = field(default_factory=TrainConfig)
    use_noise_loss: bool = True
    # False applies the raw accumulated gradient instead of its per-round mean
    average_steps: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.alpha < 0 or self.epsilon <= 0 or self.sigma < 0:
            raise ValueError("alpha and sigma must be >= 0, epsilon > 0")


def init_perturbation(shape, sigma: float, dim: int, generator: torch.Generator | None = None,
                      dtype=torch.float32) -> torch.Tensor:
    """I.i.d. N(0, sigma^2) entries scaled by 1/sqrt(dim)."""
    if dim <= 0:
        raise ValueError("dim must be positive")
    return torch.randn(shape, generator=generator, dtype=dtype) * (sigma / math.sqrt(dim))


def frobenius_norms(delta: torch.Tensor) -> torch.Tensor:
    return delta.flatten(1).norm(dim=1)


def project_frobenius(delta: torch.Tensor, epsilon: float) -> torch.Tensor:
    """Radially rescale each example's perturbation onto the epsilon ball if it lies outside."""
    norms = frobenius_norms(delta)
    scale = torch.where(norms > epsilon, epsilon / norms.clamp_min(1e-30), torch.ones_like(norms))
    shape = (-1, *([1] * (delta.dim() - 1)))
    out = delta * scale.view(shape)
    # rounding can leave the rescaled norm an ulp above epsilon; shrink until it is not
    for _ in range(8):
        over = frobenius_norms(out) > epsilon
        if not over.any():
            break
        scale = torch.where(over, torch.nextafter(scale, torch.zeros_like(scale)), scale)
        out = delta * scale.view(shape)
    return out


def ascend(delta: torch.Tensor, grad: torch.Tensor, alpha: float, epsilon: float) -> tuple[torch.Tensor, int]:
    """One normalized ascent step plus projection; zero-gradient examples are left unchanged."""
    gnorm = frobenius_norms(grad)
    zero = gnorm == 0
    step = alpha * grad / gnorm.clamp_min(1e-30).view(-1, *([1] * (grad.dim() - 1)))
    step[zero] = 0
    moved = project_frobenius(delta + step, epsilon)
    moved[zero] = delta[zero]
    return moved, int(zero.sum())


def _loss_terms(model, emb_noisy, x_masked, cls_clean, y, mlm_targets, cfg: TrainConfig):
    cls_noisy, mlm_logits = model.forward_embedded(emb_noisy, x_masked)
    l_c = F.cross_entropy(cls_clean, y) + F.cross_entropy(cls_noisy, y)
    l_mlm = mlm_loss(mlm_logits, mlm_targets)
    return cfg.w_c * l_c + cfg.w_mlm * l_mlm, l_c, l_mlm, mlm_logits


def delta_gradient(model: JointModel, x_clean, x_masked, y, base_emb, delta, cfg: TrainConfig,
                   mlm_targets=None) -> torch.Tensor:
    """Gradient of ``w_c*L_c + w_mlm*L_mlm`` with respect to the embedding perturbation."""
    if mlm_targets is None:
        mlm_targets = masked_targets(x_clean, x_masked)
    d = delta.detach().clone().requires_grad_(True)
    cls_clean = model(x_clean)[0]
    loss = _loss_terms(model, base_emb.detach() + d, x_masked, cls_clean, y, mlm_targets, cfg)[0]
    check_finite(loss, "perturbation gradient")
    return torch.autograd.grad(loss, d)[0]


def perturb_step(model: JointModel, x_clean, x_masked, y, base_emb, delta, alpha: float, epsilon: float,
                 cfg: TrainConfig = TrainConfig(), mlm_targets=None) -> torch.Tensor:
    g = delta_gradient(model, x_clean, x_masked, y, base_emb, delta, cfg, mlm_targets)
    new, zeros = ascend(delta, g, alpha, epsilon)
    if zeros:
        logger.info("zero perturbation gradient for %d example(s); delta left unchanged", zeros)
    return new


@dataclass
class StepRecord:
    delta: torch.Tensor
    drift: torch.Tensor
    l_c: float
    l_mlm: float
    l_noise: float


def accumulate_adversarial_gradients(model: JointModel, x_clean, x_masked, y, cfg: AdvTrainConfig,
                                     generator: torch.Generator | None = None,
                                     record: list | None = None) -> dict:
    """Run the perturbation rounds, leaving the summed parameter gradient in ``.grad``."""
    y = torch.as_tensor(y, dtype=torch.long).reshape(-1)
    tc = cfg.train
    dtype = next(model.parameters()).dtype
    targets = masked_targets(x_clean, x_masked)
    noise_targets = torch.where(x_clean != PAD, x_clean, torch.full_like(x_clean, -100))
    keep = (x_masked != PAD).unsqueeze(-1).to(dtype)
    shape = (*x_masked.shape, model.config.dim)
    delta = init_perturbation(shape, cfg.sigma, model.config.dim, generator, dtype) * keep
    drift = torch.zeros(shape, dtype=dtype)
    sums = {"l_c": 0.0, "l_mlm": 0.0, "l_noise": 0.0}
    for t in range(cfg.steps + 1):
        running = model.embed(x_masked) + drift
        g = delta_gradient(model, x_clean, x_masked, y, running, delta, tc, targets)
        delta, zeros = ascend(delta, g, cfg.alpha, cfg.epsilon)
        if zeros:
            logger.info("round %d: zero perturbation gradient for %d example(s)", t, zeros)
        norms = frobenius_norms(delta)
        assert bool((norms <= cfg.epsilon * (1 + 1e-6)).all()), "perturbation left the epsilon ball"
        # the masked input itself moves by delta_t before the parameter gradient is taken
        drift = drift + delta
        cls_clean = model(x_clean)[0]
        main, l_c, l_mlm, mlm_logits = _loss_terms(model, model.embed(x_masked) + drift, x_masked,
                                                   cls_clean, y, targets, tc)
        l_noise = mlm_loss(mlm_logits, noise_targets)
        total = main + (l_noise if cfg.use_noise_loss else 0.0)
        check_finite(total, f"adversarial round {t}")
        total.backward()
        sums["l_c"] += float(l_c.detach())
        sums["l_mlm"] += float(l_mlm.detach())
        sums["l_noise"] += float(l_noise.detach())
        if record is not None:
            record.append(StepRecord(delta.detach().clone(), drift.detach().clone(),
                                     float(l_c.detach()), float(l_mlm.detach()), float(l_noise.detach())))
    rounds = cfg.steps + 1
    return {k: v / rounds for k, v in sums.items()}


def adv_train_batch(model: JointModel, optimizer: torch.optim.Optimizer, x_clean, x_masked, y,
                    cfg: AdvTrainConfig, generator: torch.Generator | None = None) -> dict:
    optimizer.zero_grad()
    losses = accumulate_adversarial_gradients(model, x_clean, x_masked, y, cfg, generator)
    if cfg.average_steps:
        for p in model.parameters():
            if p.grad is not None:
                p.grad.div_(cfg.steps + 1)
    losses["grad_norm"] = grad_norm(model)
    optimizer.step()
    return losses


def train_adversarial(examples: Sequence[LabeledExample], model_config: ModelConfig, cfg: AdvTrainConfig,
                      noise: NoiseSpec, model: JointModel | None = None, checkpoint_path=None,
                      vocab: Vocabulary | None = None) -> tuple[JointModel, list[dict]]:
    if not examples:
        raise ValueError("empty training set")
    tc = cfg.train
    model = model or new_model(model_config, tc.seed)
    opt = make_optimizer(model, tc)
    rng = np.random.default_rng([tc.seed, 1])
    gen = torch.Generator().manual_seed(tc.seed)
    texts = [e.text for e in examples]
    labels = torch.tensor([e.label for e in examples])
    history = []
    for epoch in range(tc.epochs):
        model.train()
        stats = EpochStats()
        for idx in iterate_batches(len(examples), tc.batch_size, rng):
            batch = [texts[i] for i in idx]
            x_clean = pad_batch(batch, tc.max_len)
            x_masked = pad_batch(mask_batch(batch, noise.mask_rate, rng), tc.max_len)
            losses = adv_train_batch(model, opt, x_clean, x_masked, labels[idx], cfg, gen)
            with torch.no_grad():
                stats.add_mlm(model(x_masked)[1], masked_targets(x_clean, x_masked))
            stats.l_c += losses["l_c"]
            stats.l_mlm += losses["l_mlm"]
            stats.l_noise += losses["l_noise"]
            stats.grad_norm += losses["grad_norm"]
            stats.batches += 1
        row = stats.row(epoch, evaluate_accuracy(model, examples))
        logger.info("epoch %d: %s", epoch, row)
        history.append(row)
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, vocab, seed=tc.seed)
    return model, history
