"""Dense-matrix reference implementations, written independently of the
package: every operator is an explicit 2^N x 2^N matrix built with np.kron.

Qubit q is bit q of the basis index, so in a Kronecker product qubit 0 is
the rightmost factor.
"""

import itertools

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def on_qubit(op, q, n):
    mats = [op if k == q else I2 for k in reversed(range(n))]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def cz(a, b, n):
    d = np.ones(2**n, dtype=complex)
    for x in range(2**n):
        if (x >> a) & 1 and (x >> b) & 1:
            d[x] = -1
    return np.diag(d)


def t_c(n):
    m = np.eye(2**n, dtype=complex)
    for i in range(n):
        m = cz(i, (i + 1) % n, n) @ m
    for q in range(n):
        m = on_qubit(H, q, n) @ m
    return m


def rz(theta, q, n):
    # exp(i theta Z)
    return on_qubit(np.diag([np.exp(1j * theta), np.exp(-1j * theta)]), q, n)


def pauli_matrix(n, x_sites=(), z_sites=()):
    m = np.eye(2**n, dtype=complex)
    for q in z_sites:
        m = on_qubit(Z, q, n) @ m
    for q in x_sites:
        m = on_qubit(X, q, n) @ m
    return m


def plus_state(n):
    return np.ones(2**n, dtype=complex) / np.sqrt(2**n)


def circuit_state(angles, s=None):
    """Layers of rotations, then Z byproducts, then T_c, on |+>^N."""
    angles = np.asarray(angles, dtype=float)
    n, d = angles.shape
    s = np.zeros((n, d), dtype=int) if s is None else np.asarray(s)
    psi = plus_state(n)
    tc = t_c(n)
    for j in range(d):
        for q in range(n):
            psi = rz(angles[q, j], q, n) @ psi
        for q in range(n):
            if s[q, j]:
                psi = on_qubit(Z, q, n) @ psi
        psi = tc @ psi
    return psi


def born(psi):
    p = np.abs(psi) ** 2
    return p / p.sum()


def channel_distribution(angles, probs):
    """Brute-force sum over every byproduct matrix of weight times Born vector."""
    angles = np.asarray(angles, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n, d = angles.shape
    sites = [(q, j) for q in range(n) for j in range(d) if probs[q, j] < 1]
    out = np.zeros(2**n)
    for bits in itertools.product((0, 1), repeat=len(sites)):
        s = np.zeros((n, d), dtype=int)
        w = 1.0
        for b, (q, j) in zip(bits, sites):
            s[q, j] = b
            w *= (1 - probs[q, j]) / 2 if b else (1 + probs[q, j]) / 2
        out += w * born(circuit_state(angles, s))
    return out


def hamming(a, b):
    return bin(a ^ b).count("1")


def kernel(a, b, bandwidths=(0.25, 1.0, 4.0)):
    h = hamming(a, b)
    return np.mean([np.exp(-h / (2 * s)) for s in bandwidths])


def mmd_double_sum(q, y, bandwidths=(0.25, 1.0, 4.0)):
    """Squared MMD between two distributions by an explicit double loop."""
    n = len(q)
    total = 0.0
    for a in range(n):
        for b in range(n):
            k = kernel(a, b, bandwidths)
            total += (q[a] * q[b] - 2 * q[a] * y[b] + y[a] * y[b]) * k
    return total
