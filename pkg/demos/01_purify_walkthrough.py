"""Follow one test sentence through masking, recovery and ensemble voting.

Run from the repository root:  python3 demos/01_purify_walkthrough.py
"""

import numpy as np

from _common import demo_config
from textpure.experiment import Experiment
from textpure.purify import purify_predict

cfg = demo_config("purify.n=6")
exp = Experiment(cfg)
print(f"vocabulary: {len(exp.vocab)} words, {len(exp.train)} train / {len(exp.test)} test examples")

# The joint model is both the mask filler and the classifier.
model = exp.model("joint")
example = exp.test[0]
print(f"\ninput (label {example.label}):\n  {exp.decode(example.text)}")

pred = purify_predict(example.text, model, cfg.purify)
for i, (noisy, rec, probs) in enumerate(zip(pred.noisy, pred.recoveries, pred.per_copy_probs)):
    print(f"\ncopy {i}: p(positive) = {probs[1]:.3f}")
    print(f"  masked    {exp.decode(noisy)}")
    print(f"  recovered {exp.decode(rec)}")

print(f"\nensemble S = {np.round(pred.probs, 3).tolist()}, prediction {pred.label}")
