import json

import numpy as np
import pytest

from textpure.corpus import (MASK, PAD, SPECIAL_IDS, UNK, CorpusError, Vocabulary, build_synonym_table,
                             detokenize, embedding_matrix, load_dataset, load_embeddings, read_raw_dataset,
                             save_embeddings, tokenize, train_skipgram, write_dataset)


def test_vocabulary_starts_with_specials_and_sorts_words():
    v = Vocabulary.build(["B a", "a c ."])
    assert v.tokens[:4] == ("[PAD]", "[UNK]", "[MASK]", "[CLS]")
    assert v.tokens[4:] == (".", "a", "b", "c")


def test_vocabulary_round_trip(tmp_path, vocab):
    vocab.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt") == vocab
    assert Vocabulary.load(tmp_path / "v.txt").fingerprint() == vocab.fingerprint()


def test_tokenize_maps_oov_to_unk_and_splits_punctuation(vocab):
    ids = tokenize("The movie was zany, very good.", vocab)
    assert detokenize(ids, vocab) == "the movie was [UNK] , very good ."
    assert ids[3] == UNK


def test_tokenize_is_deterministic(vocab):
    assert tokenize("good plot", vocab) == tokenize("good plot", vocab)


def test_tokenize_rejects_empty_and_overlong(vocab):
    with pytest.raises(CorpusError, match="empty"):
        tokenize("   ", vocab)
    with pytest.raises(CorpusError, match="max length"):
        tokenize("good " * 10, vocab, max_len=5)


def test_punctuation_ids(vocab):
    assert {vocab.surface(i) for i in vocab.punctuation_ids()} == {",", "."}


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_dataset_round_trip(tmp_path, vocab, fmt):
    path = tmp_path / f"d.{fmt}"
    write_dataset(path, [("good movie", 1), ("bad plot", 0)])
    data = load_dataset(path, vocab, num_classes=2)
    assert [e.label for e in data] == [1, 0]
    assert detokenize(data[0].text, vocab) == "good movie"


def test_unknown_label_is_rejected_with_row(tmp_path, vocab):
    path = tmp_path / "d.csv"
    write_dataset(path, [("good", 1), ("bad", 3)])
    with pytest.raises(CorpusError, match="row 1: unknown label 3"):
        load_dataset(path, vocab, num_classes=2)


def test_malformed_jsonl_row(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps({"text": "good", "label": 1}) + "\n" + json.dumps({"txt": "x"}) + "\n")
    with pytest.raises(CorpusError, match="malformed row 1"):
        read_raw_dataset(path)


def test_non_integer_label(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("text,label\ngood,pos\n")
    with pytest.raises(CorpusError, match="not an integer"):
        read_raw_dataset(path)


def test_embeddings_round_trip(tmp_path, vocab):
    vecs = {"good": np.array([1.0, 0.0]), "great": np.array([0.8, 0.6])}
    save_embeddings(tmp_path / "e.txt", vecs)
    loaded = load_embeddings(tmp_path / "e.txt")
    np.testing.assert_allclose(loaded["great"], [0.8, 0.6])
    mat = embedding_matrix(loaded, vocab)
    assert mat.shape == (len(vocab), 2)
    assert not mat[list(SPECIAL_IDS)].any()


def test_ragged_embeddings_rejected(tmp_path):
    (tmp_path / "e.txt").write_text("a 1 2\nb 1\n")
    with pytest.raises(CorpusError, match="line 1"):
        load_embeddings(tmp_path / "e.txt")


def test_synonym_table_orders_by_cosine_and_excludes_self_and_specials():
    emb = np.array([
        [1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0],  # specials, even though non-zero
        [1.0, 0.0],
        [0.9, 0.1],
        [0.0, 1.0],
        [0.7, 0.7],
    ])
    table = build_synonym_table(emb, k_max=3, threshold=0.5)
    assert table.neighbors[4] == (5, 7)
    assert table.neighbors[MASK] == ()
    assert all(PAD not in n for n in table.neighbors)
    sims = table.similarities[4]
    assert list(sims) == sorted(sims, reverse=True)
    assert table.lookup(4, k=1) == [5]
    assert table.lookup(4, k=5, threshold=0.9) == [5]


def test_synonym_ties_break_toward_lower_id():
    emb = np.zeros((8, 2))
    emb[4:] = [1.0, 0.0]
    table = build_synonym_table(emb, k_max=3, threshold=0.0)
    assert table.neighbors[6] == (4, 5, 7)


def test_sentence_similarity_identity_and_range():
    rng = np.random.default_rng(0)
    table = build_synonym_table(rng.normal(size=(10, 4)), k_max=2)
    a, b = (4, 5, 6), (4, 9, 6)
    assert table.sentence_similarity(a, a) == pytest.approx(1.0)
    assert -1.0 <= table.sentence_similarity(a, b) <= 1.0


def test_skipgram_groups_words_sharing_contexts():
    # 4 and 5 share every context, 6 and 7 share another
    texts = [(8, 4, 9), (8, 5, 9), (10, 6, 11), (10, 7, 11)] * 40
    emb = train_skipgram(texts, vocab_size=12, dim=8, epochs=8, seed=0)
    table = build_synonym_table(emb, k_max=1, threshold=-1.0)
    assert table.neighbors[4] == (5,)
    assert table.neighbors[6] == (7,)
