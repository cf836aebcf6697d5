"""Score-based greedy word-substitution attacks.

The attacker only ever sees a victim as ``texts -> class probabilities``; it
never imports the model code.  Candidate words come from a synonym table or
from any ``(text, pos, k) -> ids`` proposer (e.g. the attacker's own masked LM).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .corpus import SPECIAL_IDS, UNK, LabeledExample, SynonymTable, TokenSequence

CANDIDATE_SOURCES = ("synonym_table", "mlm")


class Victim(Protocol):
    def __call__(self, texts: Sequence[Sequence[int]]) -> np.ndarray: ...


Proposer = Callable[[Sequence[int], int, int], list]


@dataclass(frozen=True)
class AttackConfig:
    k: int = 12
    sim_threshold: float = 0.5
    sentence_sim_threshold: float = 0.7
    max_change_rate: float = 0.4
    candidate_source: str = "synonym_table"
    query_budget: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if not -1.0 <= self.sim_threshold <= 1.0:
            raise ValueError("sim_threshold must be in [-1, 1]")
        if not 0.0 < self.max_change_rate <= 1.0:
            raise ValueError("max_change_rate must be in (0, 1]")
        if self.candidate_source not in CANDIDATE_SOURCES:
            raise ValueError(f"candidate_source must be one of {CANDIDATE_SOURCES}")
        if self.query_budget < 1:
            raise ValueError("query_budget must be positive")


@dataclass
class AttackResult:
    success: bool
    adversarial_text: TokenSequence
    substitutions: list[tuple[int, int, int]]
    queries: int
    change_rate: float
    original_text: TokenSequence = ()
    label: int = -1
    budget_exhausted: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


class BudgetExhausted(Exception):
    pass


class QueryCounter:
    """Wraps a victim, counting every text scored and refusing to exceed the budget."""

    def __init__(self, victim: Victim, budget: int):
        self.victim = victim
        self.budget = budget
        self.queries = 0

    @property
    def remaining(self) -> int:
        return self.budget - self.queries

    def __call__(self, texts: Sequence[Sequence[int]]) -> np.ndarray:
        if len(texts) > self.remaining:
            raise BudgetExhausted
        self.queries += len(texts)
        return np.asarray(self.victim(list(texts)))


class Candidates:
    """Resolves ``AttackConfig.candidate_source`` to a concrete candidate list."""

    def __init__(self, synonyms: SynonymTable | None = None, proposer: Proposer | None = None):
        self.synonyms = synonyms
        self.proposer = proposer

    def __call__(self, word: int, pos: int, text: Sequence[int], cfg: AttackConfig) -> list[int]:
        return get_candidates(word, pos, text, cfg, self.synonyms, self.proposer)


def get_candidates(word: int, pos: int, text: Sequence[int], cfg: AttackConfig,
                   synonyms: SynonymTable | None = None, proposer: Proposer | None = None) -> list[int]:
    if cfg.k == 0:
        return []
    if cfg.candidate_source == "synonym_table":
        if synonyms is None:
            raise ValueError("synonym_table source needs a SynonymTable")
        raw = synonyms.lookup(word, cfg.k, cfg.sim_threshold)
    else:
        if proposer is None:
            raise ValueError("mlm source needs a proposer")
        raw = proposer(text, pos, cfg.k)
    return [c for c in raw if c != word and c not in SPECIAL_IDS][: cfg.k]


def substitutable_positions(text: Sequence[int], protected: frozenset[int] = frozenset()) -> list[int]:
    return [i for i, t in enumerate(text) if t not in SPECIAL_IDS and t not in protected]


def word_importance(victim: Victim, text: Sequence[int], label: int,
                    protected: frozenset[int] = frozenset(),
                    base_prob: float | None = None) -> list[int]:
    """Substitutable positions sorted by the drop in true-class probability when set to [UNK]."""
    positions = substitutable_positions(text, protected)
    if not positions:
        return []
    if base_prob is None:
        base_prob = float(victim([text])[0][label])
    probes = []
    for i in positions:
        probe = list(text)
        probe[i] = UNK
        probes.append(tuple(probe))
    drops = base_prob - np.asarray(victim(probes))[:, label]
    order = np.argsort(-drops, kind="stable")
    return [positions[j] for j in order]


def greedy_attack(victim: Victim, example: LabeledExample, cfg: AttackConfig, candidates: Candidates,
                  protected: frozenset[int] = frozenset(),
                  sentence_sim: Callable[[Sequence[int], Sequence[int]], float] | None = None) -> AttackResult:
    """Textfooler-style greedy search: visit words by importance, keep the most damaging swap."""
    text, label = tuple(example.text), example.label
    counter = QueryCounter(victim, cfg.query_budget)
    current = list(text)
    subs: list[tuple[int, int, int]] = []
    success = exhausted = False

    def result():
        return AttackResult(success, tuple(current), subs, counter.queries,
                            len(subs) / len(text), text, label, exhausted)

    try:
        probs = counter([text])[0]
        if int(np.argmax(probs)) != label:
            raise ValueError("example is not correctly classified by the victim")
        cur_prob = float(probs[label])
        order = word_importance(counter, text, label, protected, base_prob=cur_prob)
        cap = math.floor(cfg.max_change_rate * len(order) + 1e-9)
        for pos in order:
            if len(subs) >= cap:
                break
            cands = candidates(text[pos], pos, text, cfg)
            trials = []
            for c in cands:
                trial = list(current)
                trial[pos] = c
                if sentence_sim is not None and sentence_sim(text, trial) < cfg.sentence_sim_threshold:
                    continue
                trials.append((c, tuple(trial)))
            if not trials:
                continue
            if len(trials) > counter.remaining:
                trials = trials[: counter.remaining]
                exhausted = True
            if not trials:
                break
            scores = counter([t for _, t in trials])
            flipped = [j for j, p in enumerate(scores) if int(np.argmax(p)) != label]
            if flipped:
                j = flipped[0]
            else:
                j = int(np.argmin(scores[:, label]))
                if scores[j, label] >= cur_prob:
                    if exhausted:
                        break
                    continue
            subs.append((pos, text[pos], trials[j][0]))
            current = list(trials[j][1])
            cur_prob = float(scores[j, label])
            if flipped:
                success = True
                break
            if exhausted:
                break
    except BudgetExhausted:
        exhausted = True
    return result()


@dataclass
class AttackSummary:
    attacked: int = 0
    skipped: int = 0
    successes: int = 0
    total_queries: int = 0
    change_rates: list[float] = field(default_factory=list)


def attack_dataset(victim: Victim, examples: Sequence[LabeledExample], cfg: AttackConfig,
                   candidates: Candidates, protected: frozenset[int] = frozenset(),
                   sentence_sim=None, workers: int = 1) -> tuple[list[AttackResult | None], AttackSummary]:
    """Attack every example the victim gets right; misclassified ones map to ``None``.

    With ``workers > 1`` examples are attacked concurrently; results keep input order.
    """
    clean = np.asarray(victim([e.text for e in examples])) if examples else np.zeros((0, 0))
    todo = [ex for ex, probs in zip(examples, clean) if int(np.argmax(probs)) == ex.label]
    run = lambda ex: greedy_attack(victim, ex, cfg, candidates, protected, sentence_sim)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            done = iter(list(pool.map(run, todo)))
    else:
        done = map(run, todo)
    results: list[AttackResult | None] = []
    summary = AttackSummary()
    for ex, probs in zip(examples, clean):
        if int(np.argmax(probs)) != ex.label:
            results.append(None)
            summary.skipped += 1
            continue
        res = next(done)
        results.append(res)
        summary.attacked += 1
        summary.successes += res.success
        summary.total_queries += res.queries
        if res.success:
            summary.change_rates.append(res.change_rate)
    return results, summary


def write_attack_trace(path, results: Sequence[AttackResult | None], decode=None) -> int:
    """One JSONL line per attacked example; returns the line count."""
    decode = decode or list
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            if res is None:
                continue
            fh.write(json.dumps({
                "original": decode(res.original_text),
                "adversarial": decode(res.adversarial_text),
                "substitutions": [list(s) for s in res.substitutions],
                "queries": res.queries,
                "success": res.success,
            }) + "\n")
            n += 1
    return n
