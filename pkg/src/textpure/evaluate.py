"""Original / after-attack accuracy, ablation grids and sweep curves."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .attack import AttackConfig, AttackResult, Candidates, Victim, attack_dataset
from .corpus import LabeledExample

OUTCOMES = ("misclassified", "robust", "attacked")


def fingerprint(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class EvalReport:
    original_accuracy: float
    after_attack_accuracy: float
    attack_success_rate: float
    mean_change_rate: float
    mean_queries: float
    n_examples: int
    outcomes: list[str]
    config: dict = field(default_factory=dict)
    name: str = ""

    @property
    def config_fingerprint(self) -> str:
        return fingerprint(self.config)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["config_fingerprint"] = self.config_fingerprint
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def summarize(results: Sequence[AttackResult | None], config: dict | None = None, name: str = "") -> EvalReport:
    """Fold per-example attack outcomes into a report; ``None`` marks a clean misclassification."""
    n = len(results)
    outcomes = []
    for r in results:
        if r is None:
            outcomes.append("misclassified")
        else:
            outcomes.append("attacked" if r.success else "robust")
    correct = [r for r in results if r is not None]
    wins = [r for r in correct if r.success]
    return EvalReport(
        original_accuracy=len(correct) / n if n else 0.0,
        after_attack_accuracy=outcomes.count("robust") / n if n else 0.0,
        attack_success_rate=len(wins) / len(correct) if correct else 0.0,
        mean_change_rate=float(np.mean([r.change_rate for r in wins])) if wins else 0.0,
        mean_queries=float(np.mean([r.queries for r in correct])) if correct else 0.0,
        n_examples=n,
        outcomes=outcomes,
        config=dict(config or {}),
        name=name,
    )


def evaluate_defense(victim: Victim, examples: Sequence[LabeledExample], cfg: AttackConfig,
                     candidates: Candidates, protected: frozenset[int] = frozenset(),
                     sentence_sim=None, config: dict | None = None, name: str = "",
                     workers: int = 1) -> tuple[EvalReport, list[AttackResult | None]]:
    results, _ = attack_dataset(victim, examples, cfg, candidates, protected, sentence_sim, workers)
    config = {"attack": asdict(cfg), **(config or {})}
    return summarize(results, config, name), results


def ablation_grid(examples: Sequence[LabeledExample], factors: Mapping[str, Sequence],
                  victim_factory: Callable[[dict], Victim], cfg: AttackConfig, candidates: Candidates,
                  protected: frozenset[int] = frozenset(), sentence_sim=None,
                  config: dict | None = None) -> list[tuple[dict, EvalReport]]:
    """One report per combination of factor levels, in row-major order of ``factors``."""
    names = list(factors)
    rows = []
    for levels in itertools.product(*(factors[k] for k in names)):
        setting = dict(zip(names, levels))
        report, _ = evaluate_defense(victim_factory(setting), examples, cfg, candidates, protected,
                                     sentence_sim, {**(config or {}), "factors": setting},
                                     name=row_label(setting))
        rows.append((setting, report))
    return rows


def row_label(setting: Mapping) -> str:
    return ", ".join(f"{k}={v}" for k, v in setting.items())


def candidate_size_sweep(victim: Victim, examples: Sequence[LabeledExample], k_values: Sequence[int],
                         cfg: AttackConfig, candidates: Candidates, protected: frozenset[int] = frozenset(),
                         sentence_sim=None, config: dict | None = None) -> list[dict]:
    curve = []
    for k in k_values:
        kcfg = AttackConfig(**{**asdict(cfg), "k": int(k)})
        report, _ = evaluate_defense(victim, examples, kcfg, candidates, protected, sentence_sim, config)
        curve.append({"k": int(k), "after_attack_accuracy": report.after_attack_accuracy,
                      "original_accuracy": report.original_accuracy})
    return curve


_TABLE_COLUMNS = (
    ("name", "setting"),
    ("original_accuracy", "orig_acc"),
    ("after_attack_accuracy", "after_attack"),
    ("attack_success_rate", "success_rate"),
    ("mean_change_rate", "change_rate"),
    ("mean_queries", "queries"),
)


def format_table(reports: Sequence[EvalReport]) -> str:
    """Aligned plain-text table, one row per report."""
    header = [h for _, h in _TABLE_COLUMNS]
    body = []
    for r in reports:
        row = []
        for attr, _ in _TABLE_COLUMNS:
            v = getattr(r, attr)
            row.append(f"{v:.3f}" if isinstance(v, float) else str(v))
        body.append(row)
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    fmt = lambda row: "  ".join(x.ljust(w) if i == 0 else x.rjust(w) for i, (x, w) in enumerate(zip(row, widths)))
    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in body]) + "\n"


def write_curve_csv(path, rows: Sequence[Mapping]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
