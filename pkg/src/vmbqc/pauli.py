"""Byproduct bookkeeping: Pauli strings pushed through the ring Clifford layer.

Pauli strings are tracked as ``(x_mask, z_mask)`` integer bitmasks with the
phase dropped.  All consumers (angle flips, the terminal correction and Born
probabilities of a pure trajectory) are insensitive to it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class PauliString:
    width: int
    x_mask: int = 0
    z_mask: int = 0

    def __post_init__(self):
        full = (1 << self.width) - 1
        if self.x_mask & ~full or self.z_mask & ~full or self.x_mask < 0 or self.z_mask < 0:
            raise ConfigError(f"mask does not fit in {self.width} qubits")

    @classmethod
    def from_sites(cls, width: int, x=(), z=()) -> "PauliString":
        xm = zm = 0
        for q in x:
            xm ^= 1 << q
        for q in z:
            zm ^= 1 << q
        return cls(width, xm, zm)

    @classmethod
    def identity(cls, width: int) -> "PauliString":
        return cls(width)

    def __mul__(self, other: "PauliString") -> "PauliString":
        if other.width != self.width:
            raise ConfigError("Pauli strings of different widths")
        return PauliString(self.width, self.x_mask ^ other.x_mask, self.z_mask ^ other.z_mask)

    @property
    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    @property
    def x_sites(self) -> list[int]:
        return [q for q in range(self.width) if self.x_mask >> q & 1]

    @property
    def z_sites(self) -> list[int]:
        return [q for q in range(self.width) if self.z_mask >> q & 1]

    def label(self) -> str:
        """One character per qubit, qubit 0 first, e.g. ``'XZXZX'``."""
        chars = []
        for q in range(self.width):
            x, z = self.x_mask >> q & 1, self.z_mask >> q & 1
            chars.append("IXZY"[x + 2 * z])
        return "".join(chars)

    def __str__(self) -> str:
        return self.label()


def _rotl(mask: int, width: int) -> int:
    full = (1 << width) - 1
    return ((mask << 1) | (mask >> (width - 1))) & full


def _rotr(mask: int, width: int) -> int:
    full = (1 << width) - 1
    return ((mask >> 1) | ((mask & 1) << (width - 1))) & full


def conjugate_through_layer(p: PauliString, width: int | None = None) -> PauliString:
    """Return ``T_c p T_c^dagger`` modulo phase.

    The CZ ring maps ``X_q`` to ``Z_{q-1} X_q Z_{q+1}`` and fixes every ``Z``;
    the Hadamard layer then swaps the X and Z parts.
    """
    if width is not None and width != p.width:
        raise ConfigError(f"Pauli string has width {p.width}, expected {width}")
    n = p.width
    z = p.z_mask ^ _rotl(p.x_mask, n) ^ _rotr(p.x_mask, n)
    return PauliString(n, z, p.x_mask)


def _as_byproducts(byproducts, geometry=None) -> np.ndarray:
    s = np.asarray(byproducts)
    if s.ndim != 2:
        raise ConfigError("byproduct matrix must be 2-D (width x depth)")
    if geometry is not None and s.shape != geometry.shape:
        raise ConfigError(f"byproduct matrix has shape {s.shape}, geometry {geometry.shape}")
    if not np.isin(s, (0, 1)).all():
        raise ConfigError("byproduct entries must be 0 or 1")
    return s.astype(bool)


def propagation_table(byproducts, geometry=None) -> list[dict]:
    """Layer-by-layer record of the running byproduct string.

    Row ``j`` holds the string as it enters rotation layer ``j`` (which sets
    the angle flips of that layer), then the string after layer ``j``'s
    byproducts are injected and the whole thing is pushed through ``T_c``.
    """
    s = _as_byproducts(byproducts, geometry)
    width, depth = s.shape
    running = PauliString.identity(width)
    rows = []
    for j in range(depth):
        flips = running.x_sites
        injected = PauliString.from_sites(width, z=np.flatnonzero(s[:, j]))
        entering = running
        running = conjugate_through_layer(running * injected)
        rows.append({"layer": j, "entering": entering, "flips": flips, "after": running})
    return rows


def propagate(byproducts, geometry=None) -> tuple[np.ndarray, PauliString]:
    """Push every Z byproduct to the end of the circuit.

    Returns the ``(width, depth)`` boolean flip mask (``True`` where the
    rotation angle changes sign) and the terminal Pauli string left after the
    last ``T_c``.
    """
    s = _as_byproducts(byproducts, geometry)
    flips = np.zeros(s.shape, dtype=bool)
    rows = propagation_table(s)
    for row in rows:
        flips[row["flips"], row["layer"]] = True
    final = rows[-1]["after"] if rows else PauliString.identity(s.shape[0])
    return flips, final


def ring_distance(a: int, b: int, width: int) -> int:
    d = abs(a - b) % width
    return min(d, width - d)


def lightcone(position: tuple[int, int], geometry) -> set[tuple[int, int]]:
    """Sites ``(qubit, layer)`` in later layers that a byproduct at ``position`` can reach.

    Support grows by one ring neighbour per layer, so layer ``l + k`` is
    covered within ring distance ``k`` of the source qubit.
    """
    q, layer = position
    if not geometry.contains(q, layer):
        raise ConfigError(f"position {position} outside a {geometry.width}x{geometry.depth} lattice")
    cone = set()
    for j in range(layer + 1, geometry.depth):
        k = j - layer
        for i in range(geometry.width):
            if ring_distance(i, q, geometry.width) <= k:
                cone.add((i, j))
    return cone


def format_table(rows: list[dict], one_based: bool = True) -> str:
    """Fixed-width text rendering of :func:`propagation_table`.

    ``x_mask``/``z_mask`` list the qubits of the string after that layer's T_c.
    """
    off = 1 if one_based else 0

    def sites(qs):
        return ",".join(str(q + off) for q in qs) or "-"

    out = [f"{'layer':>5}  {'entering':<12} {'flips':<12} {'after T_c':<12} {'x_mask':<14} {'z_mask':<14}"]
    for row in rows:
        after = row["after"]
        out.append(
            f"{row['layer'] + off:>5}  {row['entering'].label():<12} {sites(row['flips']):<12} "
            f"{after.label():<12} {sites(after.x_sites):<14} {sites(after.z_sites):<14}"
        )
    return "\n".join(out)
