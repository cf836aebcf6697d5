"""How much does the ensemble size N matter?  Clean accuracy for several N from one pool.

Run from the repository root:  python3 demos/03_recovery_count.py
"""

from _common import demo_config
from textpure.experiment import Experiment
from textpure.purify import sweep_recovery_count

cfg = demo_config()
exp = Experiment(cfg)
model = exp.model("adv")

rows = sweep_recovery_count(exp.test, model, cfg.purify, [1, 2, 4, 8, 16, 32])
print("clean accuracy of the first-N ensemble (all N share one pool of recoveries)")
for row in rows:
    print(f"  N={row['n']:<3d} {row['accuracy']:.3f}")
