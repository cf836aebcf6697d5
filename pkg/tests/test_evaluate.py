import csv
import json

import numpy as np
import pytest

from test_attack import LinearVictim, label_of, random_sentences, synonyms
from textpure.attack import AttackConfig, AttackResult, Candidates
from textpure.corpus import LabeledExample
from textpure.evaluate import (ablation_grid, candidate_size_sweep, evaluate_defense, fingerprint, format_table,
                               summarize, write_curve_csv)


def result(success):
    return AttackResult(success, (4,), [], 3, 0.5 if success else 0.0)


def test_summarize_buckets_every_example():
    rep = summarize([None, result(True), result(False), result(False)])
    assert rep.outcomes == ["misclassified", "attacked", "robust", "robust"]
    assert rep.original_accuracy == 0.75
    assert rep.after_attack_accuracy == 0.5
    assert rep.attack_success_rate == pytest.approx(1 / 3)
    assert rep.mean_change_rate == 0.5 and rep.mean_queries == 3


def test_all_misclassified_gives_zero():
    rep = summarize([None, None])
    assert rep.original_accuracy == rep.after_attack_accuracy == 0.0


def _setup(seed=3):
    victim = LinearVictim(np.random.default_rng(seed).normal(size=30))
    texts = random_sentences(30, 6, seed)
    examples = [LabeledExample(t, label_of(victim, t) if i % 5 else 1 - label_of(victim, t))
                for i, t in enumerate(texts)]
    return victim, examples, Candidates(synonyms())


def test_k_zero_keeps_original_accuracy():
    victim, examples, cands = _setup()
    rep, _ = evaluate_defense(victim, examples, AttackConfig(k=0), cands)
    assert rep.after_attack_accuracy == rep.original_accuracy == 0.8


def test_report_invariants_and_determinism():
    victim, examples, cands = _setup()
    cfg = AttackConfig(k=4, sim_threshold=-1.0)
    rep, results = evaluate_defense(victim, examples, cfg, cands, config={"seed": 1})
    assert rep.after_attack_accuracy <= rep.original_accuracy
    correct = sum(r is not None for r in results)
    assert rep.attack_success_rate * correct + rep.after_attack_accuracy * len(examples) == pytest.approx(correct)
    again, _ = evaluate_defense(victim, examples, cfg, cands, config={"seed": 1})
    assert rep.to_json() == again.to_json()
    assert json.loads(rep.to_json())["config_fingerprint"] == rep.config_fingerprint


def test_fingerprint_is_order_insensitive():
    assert fingerprint({"a": 1, "b": [1, 2]}) == fingerprint({"b": [1, 2], "a": 1})
    assert fingerprint({"a": 1}) != fingerprint({"a": 2})


def test_ablation_grid_row_count_and_single_cell():
    victim, examples, cands = _setup()
    cfg = AttackConfig(k=2, sim_threshold=-1.0)
    rows = ablation_grid(examples, {"a": [1, 2], "b": ["x", "y", "z"]}, lambda s: victim, cfg, cands)
    assert len(rows) == 6
    assert [s for s, _ in rows][:2] == [{"a": 1, "b": "x"}, {"a": 1, "b": "y"}]
    (setting, only), = ablation_grid(examples, {"a": [1]}, lambda s: victim, cfg, cands)
    direct, _ = evaluate_defense(victim, examples, cfg, cands)
    assert only.after_attack_accuracy == direct.after_attack_accuracy


def test_candidate_sweep_is_monotone_for_nested_lists(tmp_path):
    victim, examples, cands = _setup(4)
    curve = candidate_size_sweep(victim, examples, [0, 2, 4, 8], AttackConfig(sim_threshold=-1.0), cands)
    accs = [c["after_attack_accuracy"] for c in curve]
    assert accs[0] == curve[0]["original_accuracy"]
    assert all(a >= b for a, b in zip(accs, accs[1:]))
    write_curve_csv(tmp_path / "c.csv", curve)
    rows = list(csv.DictReader(open(tmp_path / "c.csv")))
    assert [int(r["k"]) for r in rows] == [0, 2, 4, 8]


def test_format_table_aligns_columns():
    table = format_table([summarize([result(True)], name="a"), summarize([None], name="longer name")])
    lines = table.splitlines()
    assert lines[0].startswith("setting")
    assert len({len(line) for line in lines}) == 1
