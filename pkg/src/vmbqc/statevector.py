"""Dense statevector kernels for the ring CQCA circuit.

Amplitudes live in a flat complex array of length ``2**N``.  Qubit ``q``
(0-based) is bit ``q`` of the basis index, so qubit 0 is the least
significant bit.  When a basis index is rendered as a bitstring, qubit 0 is
the leftmost character.

Every kernel accepts an arbitrary number of leading batch axes, which is how
the model layer pushes many byproduct trajectories through one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import CapacityError, ConfigError
from .pauli import PauliString

MAX_WIDTH = 14
MIN_WIDTH = 3


@dataclass(frozen=True)
class ClusterGeometry:
    """Cluster width ``N`` (qubits on the periodic ring) and measured depth ``D``."""

    width: int
    depth: int
    max_width: int = field(default=MAX_WIDTH, compare=False, repr=False)

    def __post_init__(self):
        if int(self.width) != self.width or int(self.depth) != self.depth:
            raise ConfigError("width and depth must be integers")
        if self.width < MIN_WIDTH:
            # N=2 puts CZ(1,2) on the ring twice, which cancels.
            raise ConfigError(f"width must be >= {MIN_WIDTH}, got {self.width}")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.width > self.max_width:
            raise CapacityError(
                f"width {self.width} exceeds the dense simulation cap of {self.max_width} qubits"
            )

    @property
    def dim(self) -> int:
        return 1 << self.width

    @property
    def shape(self) -> tuple[int, int]:
        return (self.width, self.depth)

    def contains(self, qubit: int, layer: int) -> bool:
        return 0 <= qubit < self.width and 0 <= layer < self.depth


@lru_cache(maxsize=None)
def basis_bits(width: int) -> np.ndarray:
    """``(2**width, width)`` int8 table, entry ``[x, q]`` is bit ``q`` of ``x``."""
    x = np.arange(1 << width)
    bits = (x[:, None] >> np.arange(width)[None, :]) & 1
    bits = bits.astype(np.int8)
    bits.flags.writeable = False
    return bits


@lru_cache(maxsize=None)
def z_eigenvalues(width: int) -> np.ndarray:
    """``(2**width, width)`` table of Z eigenvalues ``(-1)**bit``."""
    out = (1 - 2 * basis_bits(width)).astype(np.float64)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def cz_ring_signs(width: int) -> np.ndarray:
    bits = basis_bits(width).astype(np.int64)
    parity = (bits * np.roll(bits, -1, axis=1)).sum(axis=1) & 1
    out = (1 - 2 * parity).astype(np.float64)
    out.flags.writeable = False
    return out


def _check_state(state: np.ndarray) -> int:
    dim = state.shape[-1]
    width = dim.bit_length() - 1
    if dim != 1 << width:
        raise ConfigError(f"state length {dim} is not a power of two")
    return width


def init_plus_state(geometry: ClusterGeometry) -> np.ndarray:
    return np.full(geometry.dim, 2.0 ** (-geometry.width / 2), dtype=np.complex128)


def apply_z_rotation(state: np.ndarray, qubit: int, angle: float) -> np.ndarray:
    """Apply ``exp(i*angle*Z)`` to ``qubit``."""
    width = _check_state(state)
    if not 0 <= qubit < width:
        raise ConfigError(f"qubit {qubit} out of range for width {width}")
    phases = np.exp(1j * angle * z_eigenvalues(width)[:, qubit])
    return state * phases


def rotation_phases(angles: np.ndarray, width: int) -> np.ndarray:
    """Diagonal of ``prod_q exp(i*angles[..., q]*Z_q)``, shape ``(..., 2**width)``."""
    angles = np.asarray(angles, dtype=np.float64)
    return np.exp(1j * (angles @ z_eigenvalues(width).T))


def apply_cz_ring(state: np.ndarray) -> np.ndarray:
    width = _check_state(state)
    return state * cz_ring_signs(width)


def apply_hadamards(state: np.ndarray) -> np.ndarray:
    """Hadamard on every qubit (fast Walsh-Hadamard transform)."""
    width = _check_state(state)
    lead = state.shape[:-1]
    out = np.array(state, dtype=np.complex128, copy=True).reshape(-1, 1 << width)
    for q in range(width):
        view = out.reshape(out.shape[0], -1, 2, 1 << q)
        a = view[:, :, 0, :].copy()
        b = view[:, :, 1, :]
        view[:, :, 0, :] = a + b
        view[:, :, 1, :] = a - b
    out *= 2.0 ** (-width / 2)
    return out.reshape(*lead, 1 << width)


def apply_clifford_layer(
    state: np.ndarray, geometry: ClusterGeometry | None = None, adjoint: bool = False
) -> np.ndarray:
    """Apply ``T_c`` (CZ on every ring edge, then H on every qubit) or its adjoint."""
    width = _check_state(state)
    if geometry is not None and geometry.width != width:
        raise ConfigError(f"state has {width} qubits, geometry has {geometry.width}")
    if adjoint:
        return apply_cz_ring(apply_hadamards(state))
    return apply_hadamards(apply_cz_ring(state))


def apply_pauli(state: np.ndarray, pauli: PauliString) -> np.ndarray:
    """Apply ``X^x_mask Z^z_mask`` (global phase dropped)."""
    width = _check_state(state)
    if pauli.width != width:
        raise ConfigError(f"Pauli string has width {pauli.width}, state has {width}")
    x = np.arange(1 << width)
    signs = 1 - 2 * (np.bitwise_count(x & pauli.z_mask).astype(np.int64) & 1)
    out = state * signs
    return out[..., x ^ pauli.x_mask]


def exact_probabilities(state: np.ndarray) -> np.ndarray:
    probs = np.abs(state) ** 2
    # absorb rounding so downstream sampling sees an exactly normalised vector
    return probs / probs.sum(axis=-1, keepdims=True)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def sample_indices(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws: one uniform per shot, so a seed fixes the sample exactly."""
    if shots < 1:
        raise ConfigError("shots must be >= 1")
    cdf = np.cumsum(probs)
    u = rng.random(shots) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(probs) - 1)


def sample_bitstrings(state: np.ndarray, shots: int, rng: np.random.Generator) -> "SampleSet":
    width = _check_state(state)
    return SampleSet(width, sample_indices(exact_probabilities(state), shots, rng))


def index_to_bitstring(index: int, width: int) -> str:
    return "".join("1" if (index >> q) & 1 else "0" for q in range(width))


def bitstring_to_index(bits: str) -> int:
    if not bits or set(bits) - {"0", "1"}:
        raise ConfigError(f"not a bitstring: {bits!r}")
    return sum(1 << q for q, c in enumerate(bits) if c == "1")


@dataclass
class SampleSet:
    """Measured bitstrings, stored as basis indices (qubit 0 = least significant bit)."""

    width: int
    outcomes: np.ndarray

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=np.int64).reshape(-1)
        if self.outcomes.size and (
            self.outcomes.min() < 0 or self.outcomes.max() >= 1 << self.width
        ):
            raise ConfigError(f"outcome out of range for width {self.width}")

    def __len__(self) -> int:
        return self.outcomes.size

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SampleSet)
            and self.width == other.width
            and np.array_equal(self.outcomes, other.outcomes)
        )

    def counts(self) -> np.ndarray:
        return np.bincount(self.outcomes, minlength=1 << self.width)

    def empirical(self) -> np.ndarray:
        if not len(self):
            raise ConfigError("empty sample set")
        return self.counts() / len(self)

    def bitstrings(self) -> list[str]:
        return [index_to_bitstring(int(x), self.width) for x in self.outcomes]

    @classmethod
    def from_bitstrings(cls, strings, multiplicities=None) -> "SampleSet":
        strings = list(strings)
        if not strings:
            raise ConfigError("empty sample set")
        width = len(strings[0])
        if any(len(s) != width for s in strings):
            raise ConfigError("bitstrings have unequal lengths")
        idx = np.array([bitstring_to_index(s) for s in strings], dtype=np.int64)
        if multiplicities is not None:
            idx = np.repeat(idx, np.asarray(multiplicities, dtype=np.int64))
        return cls(width, idx)

    def save(self, path, seed: int | None = None) -> None:
        header = f"# width={self.width} shots={len(self)}"
        if seed is not None:
            header += f" seed={seed}"
        lines = [header] + self.bitstrings()
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SampleSet":
        text = Path(path).read_text().splitlines()
        meta = {}
        rows = []
        for line in text:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    meta[key] = val
                continue
            rows.append(line)
        out = cls.from_bitstrings(rows)
        if "width" in meta and int(meta["width"]) != out.width:
            raise ConfigError(f"{path}: header width {meta['width']} != data width {out.width}")
        if "shots" in meta and int(meta["shots"]) != len(out):
            raise ConfigError(f"{path}: header shots {meta['shots']} != {len(out)} rows")
        return out
