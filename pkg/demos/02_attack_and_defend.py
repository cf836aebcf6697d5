"""Attack an undefended classifier, then the same attack against purified victims.

Run from the repository root:  python3 demos/02_attack_and_defend.py
The printed table compares after-attack accuracy with and without purification.
"""

from _common import demo_config
from textpure.cli import purify_config
from textpure.evaluate import format_table
from textpure.experiment import Experiment

cfg = demo_config("attack.k=8")
exp = Experiment(cfg)

plain, joint, adv = exp.model("plain"), exp.model("joint"), exp.model("adv")
victims = {
    "no defense": exp.victim("none", plain),
    "purify, combined classifier": exp.victim("purify", joint, purify_config(cfg)),
    "purify, adversarial classifier": exp.victim("purify", adv, purify_config(cfg)),
}

reports = []
for name, victim in victims.items():
    report, results = exp.evaluate(victim, name=name)
    reports.append(report)
    flipped = next((r for r in results if r is not None and r.success), None)
    if flipped is not None:
        print(f"{name}: example flip after {len(flipped.substitutions)} substitution(s)")
        print(f"  before {exp.decode(flipped.original_text)}")
        print(f"  after  {exp.decode(flipped.adversarial_text)}")

print()
print(format_table(reports))
