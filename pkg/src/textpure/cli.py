"""Command-line entry point: ``textpure {make-corpus,train,attack,ablate,sweep,purify-inspect}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .attack import write_attack_trace
from .config import ConfigError, load_config
from .evaluate import format_table, write_curve_csv
from .experiment import Experiment, write_log, write_manifest
from .models import CheckpointError, NonFiniteLossError
from .purify import PurifyConfig, purify_predict_batch, write_trace
from .synthetic import write_corpus

logger = logging.getLogger("textpure")

# classifier level -> (classifier mode, mask-filler mode)
CLASSIFIERS = {
    "vanilla": ("plain", "mlm"),
    "combined": ("joint", "joint"),
    "adversarial": ("adv", "adv"),
}
ABLATION_FACTORS = {
    "classifier": list(CLASSIFIERS),
    "multi_recovery": [True, False],
    "mask_insertion": [True, False],
}


def _config(args):
    overrides = list(args.set or [])
    if getattr(args, "output_dir", None):
        overrides.append(f"output_dir={args.output_dir}")
    return load_config(args.config, overrides)


def _write_report(out: Path, stem: str, reports) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    (out / f"{stem}.txt").write_text(format_table(reports), encoding="utf-8")


def cmd_make_corpus(args) -> None:
    cfg = _config(args)
    paths = write_corpus(Path(args.out), cfg.synthetic)
    for name, path in paths.items():
        print(f"{name}: {path}")


def cmd_train(args) -> None:
    cfg = _config(args)
    mode = args.mode or cfg.mode
    exp = Experiment(cfg)
    ckpt = cfg.output_dir / "models" / f"{mode}.pt"
    _, history = exp.train_model(mode, ckpt)
    write_log(cfg.output_dir / "models" / f"{mode}_log.csv", history)
    write_manifest(cfg.output_dir)
    print(f"checkpoint: {ckpt}")


def purify_config(cfg, n=None, insertion=None) -> PurifyConfig:
    noise = cfg.noise if insertion is None else replace(cfg.noise, enable_insertion=insertion)
    return replace(cfg.purify, n=n or cfg.purify.n, noise=noise)


def cmd_attack(args) -> None:
    cfg = _config(args)
    exp = Experiment(cfg)
    attack = cfg.attack if args.k is None else replace(cfg.attack, k=args.k)
    model = exp.load(args.checkpoint)
    mlm = exp.load(args.mlm_checkpoint) if args.mlm_checkpoint else None
    defenses = args.defense or ["none"]
    reports = []
    for defense in defenses:
        victim = exp.victim(defense, model, purify_config(cfg), mlm)
        report, results = exp.evaluate(victim, attack, name=defense, extra={"defense": defense,
                                                                           "checkpoint": str(args.checkpoint)})
        n = write_attack_trace(cfg.output_dir / f"trace_{defense}.jsonl", results, exp.decode)
        logger.info("%s: %d attacked examples traced", defense, n)
        reports.append(report)
    _write_report(cfg.output_dir, "attack_report", reports)
    write_manifest(cfg.output_dir)
    sys.stdout.write(format_table(reports))


def ablation_rows(exp: Experiment, cfg, factors=None):
    """Ablation grid plus the undefended baseline, as EvalReports."""
    factors = factors or ABLATION_FACTORS
    reports = []
    from itertools import product

    names = list(factors)
    for levels in product(*(factors[k] for k in names)):
        setting = dict(zip(names, levels))
        clf_mode, mlm_mode = CLASSIFIERS[setting["classifier"]]
        n = cfg.purify.n if setting.get("multi_recovery", True) else 1
        pc = purify_config(cfg, n=n, insertion=setting.get("mask_insertion", True))
        clf = exp.model(clf_mode)
        mlm = exp.model(mlm_mode) if mlm_mode != clf_mode else None
        victim = exp.victim("purify", clf, pc, mlm)
        label = "purify, " + ", ".join(f"{k}={v}" for k, v in setting.items())
        report, _ = exp.evaluate(victim, name=label, extra={"factors": setting})
        reports.append(report)
    base, _ = exp.evaluate(exp.victim("none", exp.model("plain")), name="no defense",
                           extra={"factors": {"defense": "none"}})
    reports.append(base)
    return reports


def cmd_ablate(args) -> None:
    cfg = _config(args)
    exp = Experiment(cfg)
    factors = dict(ABLATION_FACTORS)
    if args.quick:
        factors = {"classifier": list(CLASSIFIERS), "multi_recovery": [True], "mask_insertion": [True]}
    reports = ablation_rows(exp, cfg, factors)
    _write_report(cfg.output_dir, "ablation", reports)
    write_manifest(cfg.output_dir)
    sys.stdout.write(format_table(reports))


def cmd_sweep(args) -> None:
    cfg = _config(args)
    exp = Experiment(cfg)
    clf_mode, mlm_mode = CLASSIFIERS[args.classifier]
    clf = exp.model(clf_mode)
    mlm = exp.model(mlm_mode) if mlm_mode != clf_mode else None
    rows = []
    if args.over == "n":
        for n in cfg.sweep["n_values"]:
            victim = exp.victim("purify", clf, purify_config(cfg, n=n), mlm)
            report, _ = exp.evaluate(victim, name=f"n={n}", extra={"n": n})
            rows.append({"n": n, "original_accuracy": report.original_accuracy,
                         "after_attack_accuracy": report.after_attack_accuracy})
    else:
        for defense in ("none", "purify"):
            victim = exp.victim(defense, clf, purify_config(cfg), mlm)
            for k in cfg.sweep["k_values"]:
                report, _ = exp.evaluate(victim, replace(cfg.attack, k=k), name=f"{defense} k={k}",
                                         extra={"defense": defense})
                rows.append({"defense": defense, "k": k, "original_accuracy": report.original_accuracy,
                             "after_attack_accuracy": report.after_attack_accuracy})
    path = cfg.output_dir / f"sweep_{args.over}.csv"
    write_curve_csv(path, rows)
    write_manifest(cfg.output_dir)
    sys.stdout.write(path.read_text(encoding="utf-8"))


def cmd_purify_inspect(args) -> None:
    cfg = _config(args)
    exp = Experiment(cfg)
    model = exp.load(args.checkpoint)
    mlm = exp.load(args.mlm_checkpoint) if args.mlm_checkpoint else None
    texts = [e.text for e in exp.test[: args.limit]]
    if mlm is None:
        preds = purify_predict_batch(texts, model, cfg.purify)
    else:
        preds = purify_predict_batch(texts, mlm, cfg.purify, classifier=model)
    path = cfg.output_dir / "purify_trace.jsonl"
    write_trace(path, texts, preds, exp.decode)
    write_manifest(cfg.output_dir)
    print(f"trace: {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textpure", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="YAML experiment config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")
        p.add_argument("--output-dir", help="shorthand for --set output_dir=...")
        p.add_argument("--workers", type=int, help="parallel example-level attacks")
        return p

    p = common(sub.add_parser("make-corpus", help="write the bundled synthetic corpus"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_corpus)

    p = common(sub.add_parser("train", help="train a plain, mlm, joint or adv model"))
    p.add_argument("--mode", choices=["plain", "mlm", "joint", "adv"])
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("attack", help="attack a checkpoint, raw or purified"))
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--mlm-checkpoint", type=Path, help="separate mask filler for purification")
    p.add_argument("--defense", action="append", choices=["none", "purify"])
    p.add_argument("--k", type=int, help="candidate list size")
    p.set_defaults(func=cmd_attack)

    p = common(sub.add_parser("ablate", help="classifier x multi-recovery x insertion grid"))
    p.add_argument("--quick", action="store_true", help="only the full-purification row per classifier")
    p.set_defaults(func=cmd_ablate)

    p = common(sub.add_parser("sweep", help="recovery-count or candidate-size curve"))
    p.add_argument("--over", choices=["n", "k"], default="n")
    p.add_argument("--classifier", choices=list(CLASSIFIERS), default="adversarial")
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("purify-inspect", help="dump noisy copies and recoveries"))
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--mlm-checkpoint", type=Path)
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(func=cmd_purify_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", None):
        args.set = (args.set or []) + [f"workers={args.workers}"]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, CheckpointError, NonFiniteLossError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
