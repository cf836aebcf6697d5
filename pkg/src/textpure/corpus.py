"""Vocabulary, tokenization, dataset loading and synonym tables."""

from __future__ import annotations

import csv
import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

PAD, UNK, MASK, CLS = 0, 1, 2, 3
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[MASK]", "[CLS]")
SPECIAL_IDS = frozenset((PAD, UNK, MASK, CLS))

# A token sequence is an immutable tuple of vocabulary ids, no padding.
TokenSequence = tuple

_TOKEN_RE = re.compile(r"\w+(?:'\w+)?|[^\w\s]")
_PUNCT_RE = re.compile(r"^[^\w\s]+$")


class CorpusError(ValueError):
    pass


def split_words(raw: str) -> list[str]:
    return _TOKEN_RE.findall(raw.lower())


def is_punctuation(word: str) -> bool:
    return bool(_PUNCT_RE.match(word))


@dataclass(frozen=True)
class Vocabulary:
    """Dense id <-> surface mapping. Ids 0..3 are PAD, UNK, MASK and CLS."""

    tokens: tuple[str, ...]
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise CorpusError("vocabulary must start with the special tokens")
        index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise CorpusError("duplicate surface forms in vocabulary")
        object.__setattr__(self, "index", index)

    @classmethod
    def build(cls, texts: Iterable[str], min_freq: int = 1) -> "Vocabulary":
        counts = Counter(w for t in texts for w in split_words(t))
        words = sorted(w for w, c in counts.items() if c >= min_freq and w not in SPECIAL_TOKENS)
        return cls(SPECIAL_TOKENS + tuple(words))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(tuple(Path(path).read_text(encoding="utf-8").split("\n")))

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens), encoding="utf-8")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def lookup(self, word: str) -> int:
        return self.index.get(word, UNK)

    def surface(self, idx: int) -> str:
        return self.tokens[idx]

    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def punctuation_ids(self) -> frozenset[int]:
        return frozenset(i for i, t in enumerate(self.tokens) if i not in SPECIAL_IDS and is_punctuation(t))


def tokenize(raw: str, vocab: Vocabulary, max_len: int | None = None) -> TokenSequence:
    words = split_words(raw)
    if not words:
        raise CorpusError("empty input")
    ids = tuple(vocab.lookup(w) for w in words)
    if max_len is not None and len(ids) > max_len:
        raise CorpusError(f"input has {len(ids)} tokens, max length is {max_len}")
    return ids


def detokenize(ids: Sequence[int], vocab: Vocabulary) -> str:
    return " ".join(vocab.surface(i) for i in ids if i != PAD)


@dataclass(frozen=True)
class LabeledExample:
    text: TokenSequence
    label: int


def _read_rows(path: Path, fmt: str) -> list[tuple[object, object]]:
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"text", "label"} <= set(reader.fieldnames):
                raise CorpusError(f"{path}: CSV header must contain text,label")
            for i, row in enumerate(reader):
                rows.append((row.get("text"), row.get("label")))
                if row.get("text") is None or row.get("label") is None:
                    raise CorpusError(f"{path}: malformed row {i}")
        elif fmt == "jsonl":
            for i, line in enumerate(fh):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    rows.append((obj["text"], obj["label"]))
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise CorpusError(f"{path}: malformed row {i}: {exc}") from None
        else:
            raise CorpusError(f"unknown dataset format {fmt!r}")
    return rows


def read_raw_dataset(path, fmt: str | None = None) -> list[tuple[str, int]]:
    """Read (text, label) pairs without tokenizing. Format defaults to the suffix."""
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    out = []
    for i, (text, label) in enumerate(_read_rows(path, fmt)):
        if not isinstance(text, str) or not text.strip():
            raise CorpusError(f"{path}: malformed row {i}: empty text")
        try:
            if isinstance(label, bool) or (isinstance(label, float) and not label.is_integer()):
                raise ValueError
            label = int(label)
        except (TypeError, ValueError):
            raise CorpusError(f"{path}: malformed row {i}: label {label!r} is not an integer") from None
        out.append((text, label))
    return out


def load_dataset(path, vocab: Vocabulary, num_classes: int, fmt: str | None = None,
                 max_len: int | None = None) -> list[LabeledExample]:
    examples = []
    for i, (text, label) in enumerate(read_raw_dataset(path, fmt)):
        if not 0 <= label < num_classes:
            raise CorpusError(f"{path}: row {i}: unknown label {label} (num_classes={num_classes})")
        try:
            ids = tokenize(text, vocab, max_len)
        except CorpusError as exc:
            raise CorpusError(f"{path}: row {i}: {exc}") from None
        examples.append(LabeledExample(ids, label))
    return examples


def write_dataset(path, rows: Sequence[tuple[str, int]], fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    with path.open("w", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            writer = csv.writer(fh)
            writer.writerow(["text", "label"])
            writer.writerows(rows)
        elif fmt == "jsonl":
            for text, label in rows:
                fh.write(json.dumps({"text": text, "label": int(label)}) + "\n")
        else:
            raise CorpusError(f"unknown dataset format {fmt!r}")


# -- embeddings and synonym tables -------------------------------------------


def load_embeddings(path) -> dict[str, np.ndarray]:
    """Read a whitespace-separated ``word v1 v2 ...`` file."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            parts = line.split()
            if not parts:
                continue
            vec = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
            if dim is None:
                dim = vec.size
            if vec.size != dim or dim == 0:
                raise CorpusError(f"{path}: line {lineno} has {vec.size} dims, expected {dim}")
            vectors[parts[0]] = vec
    return vectors


def save_embeddings(path, vectors: Mapping[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, vec in vectors.items():
            fh.write(word + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")


def embedding_matrix(vectors: Mapping[str, np.ndarray], vocab: Vocabulary) -> np.ndarray:
    """Rows aligned with vocabulary ids; missing words (and specials) get zero rows."""
    dim = len(next(iter(vectors.values())))
    mat = np.zeros((len(vocab), dim))
    for i, tok in enumerate(vocab.tokens):
        if i not in SPECIAL_IDS and tok in vectors:
            mat[i] = vectors[tok]
    return mat


@dataclass(frozen=True)
class SynonymTable:
    """Per-id neighbor ids and cosine similarities, in descending similarity."""

    neighbors: tuple[tuple[int, ...], ...]
    similarities: tuple[tuple[float, ...], ...]
    unit_vectors: np.ndarray = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.neighbors)

    def lookup(self, idx: int, k: int, threshold: float = -1.0) -> list[int]:
        out = []
        for n, s in zip(self.neighbors[idx], self.similarities[idx]):
            if len(out) >= k or s < threshold:
                break
            out.append(n)
        return out

    def sentence_similarity(self, a: Sequence[int], b: Sequence[int]) -> float:
        """Cosine between mean word vectors; stands in for a sentence encoder."""
        va = self.unit_vectors[list(a)].mean(axis=0)
        vb = self.unit_vectors[list(b)].mean(axis=0)
        na, nb = np.linalg.norm(va), np.linalg.norm(vb)
        if na == 0 or nb == 0:
            return 1.0 if list(a) == list(b) else 0.0
        return float(va @ vb / (na * nb))


def build_synonym_table(embeddings: np.ndarray, k_max: int, threshold: float = 0.5,
                        exclude: Iterable[int] = SPECIAL_IDS) -> SynonymTable:
    """Top-``k_max`` cosine neighbors per row with similarity >= ``threshold``.

    Rows listed in ``exclude`` (and all-zero rows) neither get nor serve as neighbors.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(emb, axis=1)
    unit = np.divide(emb, norms[:, None], out=np.zeros_like(emb), where=norms[:, None] > 0)
    sims = np.clip(unit @ unit.T, -1.0, 1.0)
    invalid = norms == 0
    invalid[list(exclude)] = True
    sims[:, invalid] = -np.inf
    np.fill_diagonal(sims, -np.inf)

    neighbors, similarities = [], []
    for i in range(len(emb)):
        if invalid[i] or k_max <= 0:
            neighbors.append(())
            similarities.append(())
            continue
        row = sims[i]
        # stable sort keeps lower ids first among equal similarities
        order = np.argsort(-row, kind="stable")[:k_max]
        keep = [j for j in order if row[j] >= threshold]
        neighbors.append(tuple(int(j) for j in keep))
        similarities.append(tuple(float(row[j]) for j in keep))
    return SynonymTable(tuple(neighbors), tuple(similarities), unit)


def train_skipgram(texts: Sequence[Sequence[int]], vocab_size: int, dim: int = 32, window: int = 2,
                   negatives: int = 5, epochs: int = 5, lr: float = 0.05, seed: int = 0) -> np.ndarray:
    """Skip-gram with negative sampling; fallback when no embedding fixture is supplied."""
    rng = np.random.default_rng(seed)
    w_in = (rng.random((vocab_size, dim)) - 0.5) / dim
    w_out = np.zeros((vocab_size, dim))
    counts = np.bincount([t for s in texts for t in s], minlength=vocab_size).astype(np.float64)
    counts[list(SPECIAL_IDS)] = 0
    noise = counts**0.75
    noise /= noise.sum()
    pairs = [(s[i], s[j]) for s in texts for i in range(len(s))
             for j in range(max(0, i - window), min(len(s), i + window + 1)) if i != j]
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    sigmoid = lambda x: 1.0 / (1.0 + np.exp(-x))
    for _ in range(epochs):
        for center, context in pairs[rng.permutation(len(pairs))]:
            targets = np.concatenate(([context], rng.choice(vocab_size, negatives, p=noise)))
            labels = np.zeros(negatives + 1)
            labels[0] = 1.0
            v = w_in[center]
            u = w_out[targets]
            g = (sigmoid(u @ v) - labels) * lr
            w_in[center] -= g @ u
            w_out[targets] -= np.outer(g, v)
    w_in[list(SPECIAL_IDS)] = 0.0
    return w_in
