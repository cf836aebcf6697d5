"""Masking noise: replace tokens with [MASK] and insert extra [MASK] tokens."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .corpus import MASK, SPECIAL_IDS, TokenSequence


@dataclass(frozen=True)
class NoiseSpec:
    mask_rate: float = 0.3
    insert_rate: float = 0.1
    enable_insertion: bool = True
    seed: int = 0
    max_len: int = 64
    # draw each copy's masks from (seed, index, input) so an edited input gets fresh masks
    key_on_input: bool = True

    def __post_init__(self):
        for name in ("mask_rate", "insert_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.max_len < 1:
            raise ValueError("max_len must be positive")

    @property
    def effective_insert_rate(self) -> float:
        return self.insert_rate if self.enable_insertion else 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def copy_rng(seed: int, index: int, text: Sequence[int] | None = None) -> np.random.Generator:
    """Independent stream for copy ``index``; never depends on generation order."""
    if text is None:
        return np.random.default_rng([seed, index])
    return np.random.default_rng([seed, index, len(text), *text])


def mask_replace_with_sources(text: Sequence[int], p: float,
                              rng: np.random.Generator) -> tuple[TokenSequence, tuple[int, ...]]:
    draws = rng.random(len(text))
    out = tuple(MASK if (tok not in SPECIAL_IDS and u < p) else tok for tok, u in zip(text, draws))
    return out, tuple(range(len(text)))


def mask_replace(text: Sequence[int], p: float, rng: np.random.Generator) -> TokenSequence:
    return mask_replace_with_sources(text, p, rng)[0]


def mask_insert_with_sources(text: Sequence[int], q: float, rng: np.random.Generator,
                             max_len: int | None = None,
                             sources: Sequence[int] | None = None) -> tuple[TokenSequence, tuple[int, ...]]:
    """Insert masks and report, per output slot, the originating input index (-1 if inserted)."""
    if sources is None:
        sources = range(len(text))
    draws = rng.random(len(text))
    out, src = [], []
    for tok, s, u in zip(text, sources, draws):
        out.append(tok)
        src.append(s)
        if u < q:
            out.append(MASK)
            src.append(-1)
    if max_len is not None and len(out) > max_len:
        out, src = out[:max_len], src[:max_len]
    return tuple(out), tuple(src)


def mask_insert(text: Sequence[int], q: float, rng: np.random.Generator,
                max_len: int | None = None) -> TokenSequence:
    return mask_insert_with_sources(text, q, rng, max_len)[0]


def noisy_copy(text: Sequence[int], spec: NoiseSpec, index: int) -> TokenSequence:
    rng = copy_rng(spec.seed, index, text if spec.key_on_input else None)
    out = mask_replace(text, spec.mask_rate, rng)
    if spec.enable_insertion and spec.insert_rate > 0:
        out = mask_insert(out, spec.insert_rate, rng, spec.max_len)
    return out


def make_noisy_copies(text: Sequence[int], spec: NoiseSpec, n: int) -> list[TokenSequence]:
    if n < 1:
        raise ValueError("need at least one copy")
    return [noisy_copy(text, spec, i) for i in range(n)]
