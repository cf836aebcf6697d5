import numpy as np
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from test_attack import LinearVictim, synonyms
from textpure.advtrain import frobenius_norms, project_frobenius
from textpure.attack import AttackConfig, AttackResult, Candidates, greedy_attack, substitutable_positions
from textpure.corpus import MASK, SPECIAL_IDS, SPECIAL_TOKENS, LabeledExample, Vocabulary, detokenize, tokenize
from textpure.evaluate import summarize
from textpure.noise import NoiseSpec, mask_insert_with_sources, mask_replace, noisy_copy
from textpure.purify import aggregate

token_ids = st.integers(min_value=0, max_value=40)
texts = st.lists(token_ids, min_size=1, max_size=30).map(tuple)
rates = st.floats(min_value=0.0, max_value=1.0)
seeds = st.integers(min_value=0, max_value=2**32 - 1)
words = st.text(alphabet="abcdefghij", min_size=1, max_size=6)


@given(st.lists(words, min_size=1, max_size=12))
def test_tokenize_detokenize_round_trip(ws):
    vocab = Vocabulary(SPECIAL_TOKENS + tuple(sorted(set(ws))))
    raw = " ".join(ws)
    assert detokenize(tokenize(raw, vocab), vocab) == raw


@given(texts, rates, seeds)
def test_replacement_keeps_length_and_specials(text, p, seed):
    out = mask_replace(text, p, np.random.default_rng(seed))
    assert len(out) == len(text)
    for a, b in zip(text, out):
        assert b == a or (b == MASK and a not in SPECIAL_IDS)


@given(texts, rates, seeds, st.integers(min_value=1, max_value=64))
def test_insertion_only_adds_masks_and_respects_max_len(text, q, seed, max_len):
    out, src = mask_insert_with_sources(text, q, np.random.default_rng(seed), max_len)
    assert len(out) <= max(max_len, 0)
    kept = [tok for tok, s in zip(out, src) if s >= 0]
    assert kept == list(text[: len(kept)])
    assert all(tok == MASK for tok, s in zip(out, src) if s < 0)


@given(texts, rates, rates, seeds, st.integers(min_value=0, max_value=63), st.booleans())
def test_noisy_copy_is_reproducible(text, p, q, seed, index, keyed):
    spec = NoiseSpec(mask_rate=p, insert_rate=q, seed=seed, key_on_input=keyed)
    assert noisy_copy(text, spec, index) == noisy_copy(text, spec, index)


@settings(deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.floats(1e-3, 5.0), seeds, st.floats(1e-3, 10.0))
def test_projection_bounds_and_direction(b, n, eps, seed, scale):
    gen = torch.Generator().manual_seed(seed)
    d = torch.randn(b, n, 3, generator=gen, dtype=torch.float64) * scale
    out = project_frobenius(d, eps)
    pre, post = frobenius_norms(d), frobenius_norms(out)
    assert torch.all(post <= eps * (1 + 1e-12))
    torch.testing.assert_close(post, torch.minimum(pre, torch.tensor(eps, dtype=torch.float64)), rtol=0, atol=1e-9)
    torch.testing.assert_close(project_frobenius(out, eps), out, rtol=0, atol=1e-15)
    cos = (d.flatten(1) * out.flatten(1)).sum(1) / (pre * post)
    torch.testing.assert_close(cos, torch.ones_like(cos))


logit_arrays = st.integers(1, 20).flatmap(
    lambda n: st.lists(st.lists(st.floats(-30, 30), min_size=3, max_size=3), min_size=n, max_size=n))


@given(logit_arrays, st.randoms(use_true_random=False))
def test_aggregate_is_a_permutation_invariant_distribution(logits, rnd):
    arr = np.array(logits)
    s = aggregate(arr)
    assert np.all(s >= 0) and abs(s.sum() - 1) <= 1e-9
    perm = list(range(len(arr)))
    rnd.shuffle(perm)
    np.testing.assert_array_equal(aggregate(arr[perm]), s)


outcome = st.one_of(st.none(), st.booleans().map(lambda ok: AttackResult(ok, (4,), [], 1, 0.0)))


@given(st.lists(outcome, min_size=1, max_size=50))
def test_report_conserves_examples(results):
    rep = summarize(results)
    assert len(rep.outcomes) == len(results)
    assert rep.after_attack_accuracy <= rep.original_accuracy
    counts = {o: rep.outcomes.count(o) for o in ("misclassified", "robust", "attacked")}
    assert sum(counts.values()) == len(results)
    assert rep.after_attack_accuracy == counts["robust"] / len(results)


TABLE = synonyms()


@settings(deadline=None, max_examples=60)
@given(st.lists(st.integers(4, 29), min_size=2, max_size=12).map(tuple), seeds, st.integers(0, 6),
       st.floats(0.1, 1.0))
def test_greedy_attack_invariants(text, seed, k, rate):
    victim = LinearVictim(np.random.default_rng(seed).normal(size=30))
    label = int(np.argmax(victim([text])[0]))
    cfg = AttackConfig(k=k, sim_threshold=-1.0, max_change_rate=rate)
    res = greedy_attack(victim, LabeledExample(text, label), cfg, Candidates(TABLE))
    assert len(res.substitutions) <= int(rate * len(substitutable_positions(text)) + 1e-9)
    assert res.success == (int(np.argmax(victim([res.adversarial_text])[0])) != label)
    assert len(res.adversarial_text) == len(text)
