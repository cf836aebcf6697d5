"""Shared reduced-scale config for the demo scripts."""

from textpure.config import load_config

# full training corpus, 40 test sentences; models are cached under runs/ and shared by the demos
SMALL = ["corpus.synthetic.n_test=40"]


def demo_config(*extra):
    return load_config(None, [f"output_dir=runs/demo", *SMALL, *extra])
