"""Keyword-driven synthetic sentiment corpus with a matching synonym-embedding fixture.

Sentences are built from short templates whose sentiment slots carry the label
signal; the remaining slots hold neutral distractor words.  By default every
slot shares the label's polarity, so a masked slot can be inferred from the rest
of the sentence.  Every sentiment word has a handful of rare variants
("goodish", "gooder", ...) that sit close to it in the embedding fixture, so a
synonym-substitution attacker can swap a frequent keyword for a variant.

The training split carries an annotation artifact: most variants that occur
there sit in sentences of the opposite polarity, so a classifier learns them as
cues for the wrong class.  The test split and a larger unlabeled split (used
only for masked-LM pretraining) use variants with their own polarity, the way
raw text uses near-synonyms.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .corpus import save_embeddings, write_dataset

POSITIVE = ("good", "great", "fine", "nice", "superb", "lovely", "brilliant", "charming", "excellent", "pleasant")
NEGATIVE = ("bad", "awful", "poor", "dull", "terrible", "boring", "weak", "horrible", "lousy", "bland")
VARIANT_SUFFIXES = ("ish", "ly", "er", "est", "ful", "ous", "ic", "y")
STOPWORDS = ("the", "a", "this", "it", "was", "is", "and", "i", "but", "so", "very", "really", "of", "to", "with")
PUNCTUATION = (",", ".")

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "pl", "gr")
_VOWELS = ("a", "e", "i", "o", "u")


@dataclass(frozen=True)
class SyntheticSpec:
    n_train: int = 2000
    n_test: int = 200
    n_unlabeled: int = 6000
    n_noun_clusters: int = 40
    n_verb_clusters: int = 20
    cluster_size: int = 4
    n_variants: int = 8
    # probability that a sentiment slot uses a rare variant instead of its base word
    variant_rate: float = 0.15
    # probability that a rare variant is drawn from the opposite polarity (spurious cue)
    variant_flip: float = 1.0
    # flip probability in the test split; 0 draws test text like raw text
    test_variant_flip: float = 0.0
    # variant rate in the unlabeled split, where variants keep their polarity
    unlabeled_variant_rate: float = 0.3
    # probability that a sentiment slot takes the minority polarity
    minority_rate: float = 0.0
    min_clauses: int = 4
    max_clauses: int = 6
    # probability of a short clause (one sentiment slot, at most one distractor)
    short_clause_rate: float = 0.6
    emb_dim: int = 32
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _pseudo_words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(int(rng.integers(2, 4))))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


@dataclass
class Lexicon:
    positive: list[str]
    negative: list[str]
    variants: dict[str, list[str]]
    nouns: list[list[str]]
    verbs: list[list[str]]

    def all_words(self) -> list[str]:
        words = list(STOPWORDS) + list(PUNCTUATION) + self.positive + self.negative
        for base in self.positive + self.negative:
            words += self.variants[base]
        for cluster in self.nouns + self.verbs:
            words += cluster
        return words


def build_lexicon(spec: SyntheticSpec) -> Lexicon:
    rng = np.random.default_rng([spec.seed, 0])
    taken = set(STOPWORDS) | set(POSITIVE) | set(NEGATIVE)
    variants = {}
    for base in POSITIVE + NEGATIVE:
        variants[base] = [base + suf for suf in VARIANT_SUFFIXES[: spec.n_variants]]
        taken.update(variants[base])
    flat = _pseudo_words(rng, (spec.n_noun_clusters + spec.n_verb_clusters) * spec.cluster_size, taken)
    clusters = [flat[i : i + spec.cluster_size] for i in range(0, len(flat), spec.cluster_size)]
    return Lexicon(list(POSITIVE), list(NEGATIVE), variants,
                   clusters[: spec.n_noun_clusters], clusters[spec.n_noun_clusters :])


def _sentiment_word(lex: Lexicon, polarity: int, spec: SyntheticSpec, rng) -> str:
    bases = lex.positive if polarity == 1 else lex.negative
    base = bases[int(rng.integers(len(bases)))]
    if rng.random() < spec.variant_rate:
        if rng.random() < spec.variant_flip:
            bases = lex.negative if polarity == 1 else lex.positive
            base = bases[int(rng.integers(len(bases)))]
        return lex.variants[base][int(rng.integers(len(lex.variants[base])))]
    return base


def _clause(lex: Lexicon, slot, rng, short_rate: float = 0.0) -> list[str]:
    noun = lambda: lex.nouns[int(rng.integers(len(lex.nouns)))][int(rng.integers(len(lex.nouns[0])))]
    verb = lambda: lex.verbs[int(rng.integers(len(lex.verbs)))][int(rng.integers(len(lex.verbs[0])))]
    if rng.random() < short_rate:
        kind = int(rng.integers(3))
        if kind == 0:
            return ["it", "was", slot()]
        if kind == 1:
            return ["so", slot()]
        return ["very", slot(), noun()]
    kind = int(rng.integers(5))
    if kind == 0:
        return ["the", noun(), "was", slot()]
    if kind == 1:
        return ["it", "is", "a", slot(), noun()]
    if kind == 2:
        return ["i", verb(), "the", slot(), noun()]
    if kind == 3:
        return ["this", noun(), "is", "very", slot()]
    return ["the", noun(), "of", "the", noun(), "was", "really", slot()]


def generate_sentence(lex: Lexicon, label: int, spec: SyntheticSpec, rng: np.random.Generator) -> str:
    n = int(rng.integers(spec.min_clauses, spec.max_clauses + 1))
    # majority polarity must win the slot vote
    while True:
        polarities = [label if rng.random() >= spec.minority_rate else 1 - label for _ in range(n)]
        if sum(p == label for p in polarities) > n / 2:
            break
    it = iter(polarities)
    words: list[str] = []
    for i in range(n):
        pol = next(it)
        words += _clause(lex, lambda: _sentiment_word(lex, pol, spec, rng), rng, spec.short_clause_rate)
        words.append("," if i < n - 1 else ".")
    return " ".join(words)


def generate_rows(lex: Lexicon, n: int, spec: SyntheticSpec, rng) -> list[tuple[str, int]]:
    return [(generate_sentence(lex, i % 2, spec, rng), i % 2) for i in rng.permutation(n)]


def build_embeddings(lex: Lexicon, spec: SyntheticSpec) -> dict[str, np.ndarray]:
    """Synonym fixture: variants and cluster mates sit near their anchor word."""
    rng = np.random.default_rng([spec.seed, 2])
    dim = spec.emb_dim
    unit = lambda v: v / np.linalg.norm(v)
    vectors: dict[str, np.ndarray] = {}
    for w in STOPWORDS + PUNCTUATION:
        vectors[w] = unit(rng.normal(size=dim))
    for bases in (lex.positive, lex.negative):
        pole = unit(rng.normal(size=dim))
        for base in bases:
            anchor = unit(0.6 * pole + 0.4 * unit(rng.normal(size=dim)))
            vectors[base] = anchor
            for j, var in enumerate(lex.variants[base]):
                # similarity to the base decays with the variant index
                target = 0.92 - 0.04 * j
                noise = unit(rng.normal(size=dim))
                noise = unit(noise - (noise @ anchor) * anchor)
                vectors[var] = target * anchor + np.sqrt(1 - target**2) * noise
    for cluster in lex.nouns + lex.verbs:
        center = unit(rng.normal(size=dim))
        for w in cluster:
            vectors[w] = unit(center + 0.45 * unit(rng.normal(size=dim)))
    return vectors


def write_corpus(out_dir, spec: SyntheticSpec = SyntheticSpec()) -> dict[str, Path]:
    """Write train.csv, test.csv, unlabeled.txt, embeddings.txt and stopwords.txt under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lex = build_lexicon(spec)
    rng = np.random.default_rng([spec.seed, 1])
    train = generate_rows(lex, spec.n_train, spec, rng)
    # every lexicon word occurs at least once in training, so none are UNK at test time
    seen = {w for text, _ in train for w in text.split()}
    polarity = {v: 1 for b in lex.positive for v in lex.variants[b]}
    polarity.update({v: 0 for b in lex.negative for v in lex.variants[b]})
    for w in lex.all_words():
        if w in seen:
            continue
        if w in polarity:
            train.append((f"the {lex.nouns[0][0]} was {w} .", polarity[w]))
        else:
            label = int(rng.integers(2))
            train.append((f"the {w} was {(lex.positive if label else lex.negative)[0]} .", label))
    test = generate_rows(lex, spec.n_test, replace(spec, variant_flip=spec.test_variant_flip), rng)
    raw_spec = replace(spec, variant_rate=spec.unlabeled_variant_rate, variant_flip=0.0)
    unlabeled = [text for text, _ in generate_rows(lex, spec.n_unlabeled, raw_spec, rng)]
    paths = {
        "train": out / "train.csv",
        "test": out / "test.csv",
        "unlabeled": out / "unlabeled.txt",
        "embeddings": out / "embeddings.txt",
        "stopwords": out / "stopwords.txt",
    }
    write_dataset(paths["train"], train)
    write_dataset(paths["test"], test)
    paths["unlabeled"].write_text("\n".join(unlabeled) + "\n", encoding="utf-8")
    save_embeddings(paths["embeddings"], build_embeddings(lex, spec))
    paths["stopwords"].write_text("\n".join(STOPWORDS) + "\n", encoding="utf-8")
    return paths
