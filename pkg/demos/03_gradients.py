"""Gradients of the MMD loss: parameter shift for angles, forced-site
differences for correction probabilities, and a finite-difference check."""

import numpy as np

from vmbqc.mmd import full_gradient, grad_p_fd, loss
from vmbqc.models import exact_channel_distribution, make_restricted
from vmbqc.statevector import ClusterGeometry

rng = np.random.default_rng(7)
geom = ClusterGeometry(3, 2)
model = make_restricted("B", geom, rng.uniform(0, 2 * np.pi, geom.shape), 0.6)
target = exact_channel_distribution(make_restricted("A", geom, rng.uniform(0, 2 * np.pi, geom.shape), 0.8))

rep = full_gradient(model, target)
print(rep.to_text())

h = 1e-4
fd = np.array([
    [(loss(model.shifted((i, j), h), target) - loss(model.shifted((i, j), -h), target)) / (2 * h) for j in range(2)]
    for i in range(3)
])
print(f"max |parameter shift - central difference| = {np.abs(fd - rep.dtheta).max():.1e}")
for eps in (4e-3, 2e-3, 1e-3):
    print(f"eps={eps:.0e}: |FD - analytic| for p = {abs(grad_p_fd(model, target, eps) - rep.dp):.2e}")
