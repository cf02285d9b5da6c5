"""Where does an uncorrected measurement outcome go?

A single Z byproduct on qubit 3 of the first layer (N=5, D=3) is pushed
through the Clifford layers.  Each layer it reaches flips the sign of the
rotation angles it overlaps in X, and what is left at the end is a Pauli
string on the output qubits.
"""

import numpy as np

from vmbqc.models import run_flipped, run_unitary
from vmbqc.pauli import format_table, lightcone, propagate, propagation_table
from vmbqc.statevector import ClusterGeometry, apply_pauli, exact_probabilities

geom = ClusterGeometry(5, 3)
s = np.zeros(geom.shape, dtype=int)
s[2, 0] = 1

print(format_table(propagation_table(s, geom)))

flips, terminal = propagate(s, geom)
print("\nflipped angles (1-based):", [(int(q) + 1, int(l) + 1) for q, l in np.argwhere(flips)])
print("terminal string:", terminal.label())

cone = sorted((q + 1, l + 1) for q, l in lightcone((2, 0), geom))
print("forward lightcone:", cone)

# Undoing the terminal string leaves a byproduct-free circuit with flipped angles.
angles = np.random.default_rng(0).uniform(0, 2 * np.pi, geom.shape)
a = exact_probabilities(apply_pauli(run_unitary(angles, s, geom), terminal))
b = exact_probabilities(run_flipped(angles, flips, geom))
print(f"\nmax |P(s) U(theta, s) - U(theta with flips)| over outcomes: {np.abs(a - b).max():.1e}")
