"""The restricted channel models and what a correction probability does.

Builds models A-D on a small lattice, shows how many sites each leaves
partially adapted, and how far the output law moves from the unitary one as
p drops from 1.
"""

import numpy as np

from vmbqc.models import ModelSpec, exact_channel_distribution, make_restricted, sample_model
from vmbqc.statevector import ClusterGeometry, total_variation

geom = ClusterGeometry(5, 3)
angles = np.random.default_rng(3).uniform(0, 2 * np.pi, geom.shape)
unitary = exact_channel_distribution(ModelSpec.unitary(geom, angles))

print("model  sites   TV to unitary at p = 1.0 / 0.75 / 0.5 / 0.0")
for tag in "ABCD":
    tvs = []
    for p in (1.0, 0.75, 0.5, 0.0):
        model = make_restricted(tag, geom, angles, p)
        tvs.append(total_variation(exact_channel_distribution(model), unitary))
    print(f"  {tag}    {model.schedule.num_masked:>3}    " + "  ".join(f"{t:.4f}" for t in tvs))

# Sampling draws one byproduct pattern per shot.
model = make_restricted("C", geom, angles, 0.5)
samples = sample_model(model, 20_000, np.random.default_rng(1))
print(f"\nmodel C, p=0.5: TV(empirical 20k shots, exact) = {total_variation(samples.empirical(), exact_channel_distribution(model)):.4f}")
print("first few samples:", samples.bitstrings()[:5])
