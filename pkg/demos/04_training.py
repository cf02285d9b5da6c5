"""A short training run: unitary learner vs model B on a channel target.

Uses fewer seeds and epochs than the bundled recipes so it finishes in about
a minute.  `vmbqc train --recipe fig5` runs the full comparison.
"""

import numpy as np

from vmbqc.experiments import fig5_recipe, run_experiment

desc = fig5_recipe()
desc["learners"]["roster"] = ["U", "B"]
desc["training"].update(epochs=60, seeds=3)
report = run_experiment(desc)

for tag, curve in report["curves"].items():
    marks = "  ".join(f"{curve.mean[e]:.2e}" for e in (0, 10, 30, 59))
    print(f"{tag}: mean loss at epochs 0/10/30/59: {marks}")
for tag, traces in report["traces"].items():
    ps = [t.final_p for t in traces if t.final_p is not None]
    if ps:
        print(f"{tag}: learned p = {np.round(ps, 3).tolist()}")
