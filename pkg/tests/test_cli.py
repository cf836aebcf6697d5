import json

import pytest

from textpure.cli import ABLATION_FACTORS, main

TINY = [
    "corpus.synthetic.n_train=60", "corpus.synthetic.n_test=6", "corpus.synthetic.n_unlabeled=40",
    "model.dim=8", "model.heads=2", "model.layers=1", "model.ff_dim=16",
    "train.epochs=1", "pretrain.epochs=1", "purify.n=2", "attack.k=2",
    "sweep.n_values=[1,2]", "sweep.k_values=[0,2]",
]


def run(out, *args):
    argv = list(args) + ["--output-dir", str(out)]
    for item in TINY:
        argv += ["--set", item]
    return main(argv)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    for mode in ("mlm", "plain", "joint", "adv"):
        assert run(out, "train", "--mode", mode) == 0
    return out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())["files"]


def test_train_writes_checkpoints_and_manifest(trained):
    files = manifest(trained)
    for mode in ("mlm", "plain", "joint", "adv"):
        assert f"models/{mode}.pt" in files
    assert "config.yaml" in files


def test_attack_reports_both_defenses(trained, capsys):
    code = run(trained, "attack", "--checkpoint", str(trained / "models" / "adv.pt"),
               "--defense", "none", "--defense", "purify")
    assert code == 0
    reports = json.loads((trained / "attack_report.json").read_text())
    assert [r["name"] for r in reports] == ["none", "purify"]
    for r in reports:
        assert r["n_examples"] == 6
        assert r["after_attack_accuracy"] <= r["original_accuracy"]
    assert "after_attack" in capsys.readouterr().out
    assert "attack_report.json" in manifest(trained)


def test_ablate_row_count(trained):
    assert run(trained, "ablate") == 0
    rows = json.loads((trained / "ablation.json").read_text())
    n = 1
    for levels in ABLATION_FACTORS.values():
        n *= len(levels)
    assert len(rows) == n + 1
    assert rows[-1]["name"] == "no defense"


@pytest.mark.parametrize("over, header", [("n", "n,"), ("k", "defense,k,")])
def test_sweep_writes_curve(trained, over, header):
    assert run(trained, "sweep", "--over", over) == 0
    text = (trained / f"sweep_{over}.csv").read_text()
    assert text.startswith(header)


def test_k0_sweep_point_equals_clean_accuracy(trained):
    assert run(trained, "sweep", "--over", "k") == 0
    lines = (trained / "sweep_k.csv").read_text().splitlines()[1:]
    for line in lines:
        defense, k, orig, after = line.split(",")
        if k == "0":
            assert after == orig


def test_purify_inspect_dumps_trace(trained):
    code = run(trained, "purify-inspect", "--checkpoint", str(trained / "models" / "joint.pt"), "--limit", "3")
    assert code == 0
    lines = (trained / "purify_trace.jsonl").read_text().splitlines()
    assert len(lines) == 3


def test_make_corpus(tmp_path):
    assert run(tmp_path / "o", "make-corpus", "--out", str(tmp_path / "c")) == 0
    for name in ("train.csv", "test.csv", "unlabeled.txt", "embeddings.txt", "stopwords.txt"):
        assert any(p.name == name for p in (tmp_path / "c").iterdir())


@pytest.mark.parametrize("args", [
    ["train", "--set", "train.lr=-1"],
    ["train", "--set", "nonexistent=3"],
    ["attack", "--checkpoint", "missing.pt"],
])
def test_validation_errors_exit_nonzero(tmp_path, capsys, args):
    assert main(args + ["--output-dir", str(tmp_path)]) != 0
    assert "error:" in capsys.readouterr().err
