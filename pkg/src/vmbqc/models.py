"""VMBQC model family: the unitary CQCA circuit, its byproduct channels and
the single-probability restrictions A-D.

Channels are never stored as density matrices.  A channel is a mixture of
pure trajectories, one per byproduct matrix ``s``; sampling draws ``s`` per
shot and exact evaluation enumerates every ``s`` on the masked sites.

Array conventions: angle, mask, probability and byproduct grids all have
shape ``(width, depth)`` and are indexed ``[qubit, layer]`` from 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import CapacityError, ConfigError
from .pauli import PauliString, propagate
from .statevector import (
    ClusterGeometry,
    SampleSet,
    apply_hadamards,
    apply_pauli,
    basis_bits,
    cz_ring_signs,
    exact_probabilities,
    init_plus_state,
    rotation_phases,
)

TWO_PI = 2.0 * math.pi
VARIANTS = ("unitary", "plain", "distilled")
RESTRICTED = ("A", "B", "C", "D")
ENUMERATION_CAP = 16

_CHUNK_ELEMENTS = 1 << 22


def canonical_angles(values, shape=None) -> np.ndarray:
    """Validate an angle grid and wrap it into ``[0, 2*pi)``."""
    a = np.array(values, dtype=np.float64)
    if shape is not None and a.shape != tuple(shape):
        raise ConfigError(f"angle grid has shape {a.shape}, expected {tuple(shape)}")
    if not np.isfinite(a).all():
        raise ConfigError("angle grid contains non-finite values")
    a = np.mod(a, TWO_PI)
    a[a >= TWO_PI] = 0.0
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CorrectionSchedule:
    """Which sites are partially adapted, and with what correction probability.

    ``probabilities`` is the effective per-site grid: unmasked sites hold 1.
    In shared mode every masked site carries the same trainable ``p``.
    """

    mask: np.ndarray
    probabilities: np.ndarray
    shared: bool = True

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if mask.ndim != 2 or probs.shape != mask.shape:
            raise ConfigError("mask and probability grid must be matching 2-D arrays")
        if not np.isfinite(probs).all() or (probs < 0).any() or (probs > 1).any():
            raise ConfigError("correction probabilities must lie in [0, 1]")
        probs = np.where(mask, probs, 1.0)
        if self.shared and mask.any() and np.ptp(probs[mask]) != 0:
            raise ConfigError("shared schedule with unequal probabilities")
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "probabilities", _frozen(probs))

    @classmethod
    def empty(cls, shape) -> "CorrectionSchedule":
        return cls(np.zeros(shape, dtype=bool), np.ones(shape))

    @classmethod
    def with_shared_p(cls, mask, p: float) -> "CorrectionSchedule":
        mask = np.asarray(mask, dtype=bool)
        return cls(mask, np.where(mask, float(p), 1.0), shared=True)

    @classmethod
    def per_site(cls, probabilities, mask=None) -> "CorrectionSchedule":
        probs = np.asarray(probabilities, dtype=np.float64)
        if mask is None:
            mask = np.ones(probs.shape, dtype=bool)
        return cls(mask, probs, shared=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def num_masked(self) -> int:
        return int(self.mask.sum())

    @property
    def sites(self) -> list[tuple[int, int]]:
        """Masked sites in row-major order; this order fixes RNG consumption."""
        return [tuple(int(v) for v in s) for s in np.argwhere(self.mask)]

    @property
    def p(self) -> float:
        if not self.shared:
            raise ConfigError("per-site schedule has no single p")
        if not self.mask.any():
            return 1.0
        return float(self.probabilities[self.mask][0])

    def replace_p(self, p: float) -> "CorrectionSchedule":
        if not self.shared:
            raise ConfigError("per-site schedule has no single p")
        return CorrectionSchedule.with_shared_p(self.mask, p)

    def force_site(self, site: tuple[int, int], value: float) -> "CorrectionSchedule":
        """Copy with one masked site's probability overridden (per-site mode)."""
        if not self.mask[site]:
            raise ConfigError(f"site {site} is not partially adapted")
        probs = np.array(self.probabilities)
        probs[site] = value
        return CorrectionSchedule(self.mask, probs, shared=False)

    def flip_probabilities(self) -> np.ndarray:
        """Per masked site, the chance of an uncorrected ``-1`` outcome, ``(1-p)/2``."""
        return (1.0 - self.probabilities[self.mask]) / 2.0


@dataclass(frozen=True, eq=False)
class ModelSpec:
    geometry: ClusterGeometry
    angles: np.ndarray
    schedule: CorrectionSchedule
    variant: str = "plain"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "angles", _frozen(canonical_angles(self.angles, self.geometry.shape)))
        if self.schedule.shape != self.geometry.shape:
            raise ConfigError(
                f"schedule shape {self.schedule.shape} does not match geometry {self.geometry.shape}"
            )
        if (self.variant == "unitary") != (self.schedule.num_masked == 0):
            raise ConfigError("the unitary variant is exactly the model with an empty mask")

    @classmethod
    def unitary(cls, geometry: ClusterGeometry, angles) -> "ModelSpec":
        return cls(geometry, angles, CorrectionSchedule.empty(geometry.shape), "unitary")

    @property
    def distilled(self) -> bool:
        return self.variant == "distilled"

    def with_angles(self, angles) -> "ModelSpec":
        return replace(self, angles=angles)

    def with_schedule(self, schedule: CorrectionSchedule) -> "ModelSpec":
        return replace(self, schedule=schedule)

    def with_p(self, p: float) -> "ModelSpec":
        return replace(self, schedule=self.schedule.replace_p(p))

    def shifted(self, site: tuple[int, int], delta: float) -> "ModelSpec":
        angles = np.array(self.angles)
        angles[site] += delta
        return self.with_angles(angles)

    def to_dict(self) -> dict:
        return {
            "width": self.geometry.width,
            "depth": self.geometry.depth,
            "variant": self.variant,
            "angles": self.angles.tolist(),
            "mask": self.schedule.mask.astype(int).tolist(),
            "probabilities": self.schedule.probabilities.tolist(),
            "shared": self.schedule.shared,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        try:
            geometry = ClusterGeometry(int(d["width"]), int(d["depth"]))
            schedule = CorrectionSchedule(
                np.array(d["mask"], dtype=bool),
                np.array(d["probabilities"], dtype=np.float64),
                shared=bool(d.get("shared", True)),
            )
            return cls(geometry, np.array(d["angles"], dtype=np.float64), schedule, d["variant"])
        except KeyError as exc:
            raise ConfigError(f"model document is missing key {exc}") from None

    def save(self, path, seed: int | None = None) -> None:
        doc = self.to_dict()
        if seed is not None:
            doc["seed"] = seed
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ModelSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# byproducts

def sample_byproducts(schedule: CorrectionSchedule, rng: np.random.Generator, shots: int | None = None):
    """Draw byproduct matrices; one uniform per masked site per shot.

    Returns a ``(width, depth)`` array, or ``(shots, width, depth)`` when
    ``shots`` is given.
    """
    n = 1 if shots is None else shots
    out = np.zeros((n,) + schedule.shape, dtype=np.int8)
    k = schedule.num_masked
    if k:
        draws = rng.random((n, k)) < schedule.flip_probabilities()
        out[:, schedule.mask] = draws
    return out[0] if shots is None else out


def byproduct_weight(s, schedule: CorrectionSchedule) -> float:
    s = np.asarray(s)
    if s.shape != schedule.shape:
        raise ConfigError(f"byproduct matrix has shape {s.shape}, schedule {schedule.shape}")
    if (s.astype(bool) & ~schedule.mask).any():
        raise ConfigError("byproduct outside the partially adapted sites")
    bits = s[schedule.mask].astype(bool)
    p = schedule.probabilities[schedule.mask]
    return float(np.prod(np.where(bits, (1.0 - p) / 2.0, (1.0 + p) / 2.0)))


def enumerate_byproducts(schedule: CorrectionSchedule, cap: int = ENUMERATION_CAP):
    """Every byproduct matrix supported on the mask, with its probability weight."""
    k = schedule.num_masked
    if k > cap:
        raise CapacityError(
            f"{k} partially adapted sites exceed the enumeration cap of {cap}; use sampling instead"
        )
    codes = np.arange(1 << k)
    bits = ((codes[:, None] >> np.arange(k)[None, :]) & 1).astype(np.int8)
    patterns = np.zeros((1 << k,) + schedule.shape, dtype=np.int8)
    patterns[:, schedule.mask] = bits
    p = schedule.probabilities[schedule.mask]
    weights = np.prod(np.where(bits == 1, (1.0 - p) / 2.0, (1.0 + p) / 2.0), axis=1)
    return patterns, weights


# --------------------------------------------------------------------------
# trajectories

def propagate_batch(s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised byproduct propagation for a ``(B, width, depth)`` stack.

    Returns flip masks ``(B, width, depth)`` and the terminal ``x``/``z``
    masks as integer arrays of length ``B``.  Agrees with
    :func:`vmbqc.pauli.propagate` entry by entry.
    """
    s = np.asarray(s, dtype=np.int64)
    batch, width, depth = s.shape
    weights = 1 << np.arange(width, dtype=np.int64)
    full = (1 << width) - 1
    x = np.zeros(batch, dtype=np.int64)
    z = np.zeros(batch, dtype=np.int64)
    flips = np.zeros(s.shape, dtype=bool)
    for j in range(depth):
        flips[:, :, j] = (x[:, None] >> np.arange(width)[None, :]) & 1
        z = z ^ (s[:, :, j] @ weights)
        rotl = ((x << 1) | (x >> (width - 1))) & full
        rotr = ((x >> 1) | ((x & 1) << (width - 1))) & full
        x, z = z ^ rotl ^ rotr, x
    return flips, x, z


def _evolve(angles: np.ndarray, signs_source: np.ndarray | None, width: int) -> np.ndarray:
    """Core loop.  ``angles`` is ``(B, width, depth)`` or ``(width, depth)``;
    ``signs_source`` optionally holds ``(B, width, depth)`` Z byproducts."""
    angles = np.asarray(angles, dtype=np.float64)
    batched = angles.ndim == 3 or signs_source is not None
    if angles.ndim == 2:
        angles = angles[None]
    depth = angles.shape[-1]
    batch = angles.shape[0] if signs_source is None else max(angles.shape[0], signs_source.shape[0])
    state = np.broadcast_to(
        np.full(1 << width, 2.0 ** (-width / 2), dtype=np.complex128), (batch, 1 << width)
    ).copy()
    bits = basis_bits(width).astype(np.int64)
    cz = cz_ring_signs(width)
    for j in range(depth):
        layer = rotation_phases(angles[:, :, j], width)
        if signs_source is not None:
            parity = (signs_source[:, :, j].astype(np.int64) @ bits.T) & 1
            layer = layer * (1 - 2 * parity)
        state = apply_hadamards(state * layer * cz)
    return state if batched else state[0]


def run_unitary(angles, s, geometry: ClusterGeometry) -> np.ndarray:
    """Final state of ``U_c(angles, s)`` applied to ``|+>^N``.

    Layer by layer: rotations ``exp(i*theta*Z)``, then ``Z`` on every site with
    ``s == 1``, then ``T_c``.
    """
    angles = canonical_angles(angles, geometry.shape)
    s = np.asarray(s)
    if s.shape != geometry.shape:
        raise ConfigError(f"byproduct matrix has shape {s.shape}, geometry {geometry.shape}")
    return _evolve(angles, s[None], geometry.width)[0]


def run_flipped(angles, flips, geometry: ClusterGeometry) -> np.ndarray:
    """Byproduct-free circuit with the angles at ``flips`` negated."""
    angles = canonical_angles(angles, geometry.shape)
    signed = np.where(np.asarray(flips, dtype=bool), -angles, angles)
    return _evolve(signed, None, geometry.width)


def run_distilled_unitary(angles, s, geometry: ClusterGeometry, via: str = "flips") -> np.ndarray:
    """State after ``P(s) U_c(angles, s)``, where ``P(s)`` is the propagated terminal string.

    ``via="flips"`` runs the equivalent byproduct-free circuit with flipped
    angles; ``via="pauli"`` applies the terminal string explicitly.  The two
    agree up to a global phase.
    """
    flips, terminal = propagate(s, geometry)
    if via == "flips":
        return run_flipped(angles, flips, geometry)
    if via == "pauli":
        return apply_pauli(run_unitary(angles, s, geometry), terminal)
    raise ConfigError(f"unknown route {via!r}")


def trajectory_probabilities(model: ModelSpec, patterns: np.ndarray) -> np.ndarray:
    """Born probabilities of each trajectory in a ``(B, width, depth)`` stack."""
    width = model.geometry.width
    out = np.empty((len(patterns), 1 << width))
    step = max(1, _CHUNK_ELEMENTS >> width)
    for lo in range(0, len(patterns), step):
        chunk = patterns[lo : lo + step]
        if model.distilled:
            flips, _, _ = propagate_batch(chunk)
            angles = np.where(flips, -model.angles[None], model.angles[None])
            states = _evolve(angles, None, width)
        else:
            states = _evolve(model.angles, chunk, width)
        out[lo : lo + step] = exact_probabilities(states)
    return out


def exact_channel_distribution(model: ModelSpec, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Exact output distribution: sum over supported ``s`` of weight times Born vector."""
    if model.schedule.num_masked == 0:
        return exact_probabilities(_evolve(model.angles, None, model.geometry.width))
    patterns, weights = enumerate_byproducts(model.schedule, cap)
    keep = weights > 0
    patterns, weights = patterns[keep], weights[keep]
    probs = trajectory_probabilities(model, patterns)
    dist = weights @ probs
    return dist / dist.sum()


def _unique_patterns(model: ModelSpec, shots: int, rng: np.random.Generator):
    """Per-shot byproduct draws grouped into distinct trajectories."""
    sched = model.schedule
    k = sched.num_masked
    if k == 0:
        return np.zeros((1,) + sched.shape, dtype=np.int8), np.zeros(shots, dtype=np.int64)
    draws = rng.random((shots, k)) < sched.flip_probabilities()
    if k <= 62:
        codes = draws.astype(np.int64) @ (1 << np.arange(k, dtype=np.int64))
        uniq, inverse = np.unique(codes, return_inverse=True)
        bits = ((uniq[:, None] >> np.arange(k)[None, :]) & 1).astype(np.int8)
    else:
        bits, inverse = np.unique(draws.astype(np.int8), axis=0, return_inverse=True)
    patterns = np.zeros((len(bits),) + sched.shape, dtype=np.int8)
    patterns[:, sched.mask] = bits
    return patterns, inverse.reshape(-1)


def sample_model(model: ModelSpec, shots: int, rng: np.random.Generator) -> SampleSet:
    """Draw ``shots`` independent outputs of the model.

    Each shot draws its own byproduct matrix and then one bitstring from that
    trajectory.  Trajectories that coincide are simulated once.  For the
    unitary variant no byproduct randomness is consumed, so the result equals
    :func:`vmbqc.statevector.sample_bitstrings` on the same generator.
    """
    if shots < 1:
        raise ConfigError("shots must be >= 1")
    patterns, inverse = _unique_patterns(model, shots, rng)
    probs = trajectory_probabilities(model, patterns)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(shots)
    out = np.empty(shots, dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(patterns) + 1))
    for g in range(len(patterns)):
        idx = order[bounds[g] : bounds[g + 1]]
        out[idx] = np.searchsorted(cdf[g], u[idx] * cdf[g, -1], side="right")
    np.minimum(out, model.geometry.dim - 1, out=out)
    return SampleSet(model.geometry.width, out)


def sample_counts(model: ModelSpec, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Histogram of ``shots`` model outputs; same law as :func:`sample_model`, cheaper."""
    if shots < 1:
        raise ConfigError("shots must be >= 1")
    patterns, inverse = _unique_patterns(model, shots, rng)
    probs = trajectory_probabilities(model, patterns)
    n = np.bincount(inverse, minlength=len(patterns))
    return rng.multinomial(n, probs).sum(axis=0)


# --------------------------------------------------------------------------
# model construction

def central_qubit(width: int) -> int:
    """0-based index of qubit ``ceil(N/2)`` in 1-based numbering."""
    return math.ceil(width / 2) - 1


def restricted_mask(tag: str, geometry: ClusterGeometry, site: tuple[int, int] | None = None) -> np.ndarray:
    mask = np.zeros(geometry.shape, dtype=bool)
    q = central_qubit(geometry.width)
    if tag == "A":
        mask[:] = True
    elif tag == "B":
        mask[:, 0] = True
    elif tag == "C":
        mask[q if site is None else site[0], :] = True
    elif tag == "D":
        site = (q, 0) if site is None else tuple(site)
        if not geometry.contains(*site):
            raise ConfigError(f"site {site} outside a {geometry.width}x{geometry.depth} lattice")
        mask[site] = True
    else:
        raise ConfigError(f"unknown restricted variant {tag!r}; expected one of {RESTRICTED}")
    return mask


def make_restricted(
    tag: str,
    geometry: ClusterGeometry,
    angles,
    p: float,
    distilled: bool = False,
    site: tuple[int, int] | None = None,
) -> ModelSpec:
    """Single-probability model: A all sites, B first layer, C one qubit in
    every layer, D one site.  ``site`` moves the C column / D site."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"p must lie in [0, 1], got {p}")
    mask = restricted_mask(tag, geometry, site)
    schedule = CorrectionSchedule.with_shared_p(mask, p)
    return ModelSpec(geometry, angles, schedule, "distilled" if distilled else "plain")


def placement_model(
    geometry: ClusterGeometry, angles, sites, p: float, distilled: bool = True
) -> ModelSpec:
    """Shared-``p`` model with partially adapted qubits exactly at ``sites``."""
    mask = np.zeros(geometry.shape, dtype=bool)
    for site in sites:
        if not geometry.contains(*site):
            raise ConfigError(f"site {site} outside a {geometry.width}x{geometry.depth} lattice")
        mask[tuple(site)] = True
    if not mask.any():
        return ModelSpec.unitary(geometry, angles)
    return ModelSpec(
        geometry, angles, CorrectionSchedule.with_shared_p(mask, p), "distilled" if distilled else "plain"
    )


def random_angles(geometry: ClusterGeometry, rng: np.random.Generator, low=0.0, high=TWO_PI) -> np.ndarray:
    return rng.uniform(low, high, size=geometry.shape)


def random_target(
    geometry: ClusterGeometry,
    rng: np.random.Generator,
    theta_range=(0.0, TWO_PI),
    p_range=(0.9, 1.0),
) -> ModelSpec:
    """Plain channel with independent per-site correction probabilities.

    Only used to generate data; per-site probabilities are never trained.
    """
    lo, hi = p_range
    if not 0.0 <= lo <= hi <= 1.0:
        raise ConfigError(f"invalid correction probability range {p_range}")
    if not theta_range[0] <= theta_range[1]:
        raise ConfigError(f"invalid angle range {theta_range}")
    angles = rng.uniform(*theta_range, size=geometry.shape)
    probs = rng.uniform(lo, hi, size=geometry.shape)
    if lo == hi == 1.0:
        return ModelSpec.unitary(geometry, angles)
    return ModelSpec(geometry, angles, CorrectionSchedule.per_site(probs), "plain")


def unitary_limit(model: ModelSpec) -> ModelSpec:
    return ModelSpec.unitary(model.geometry, model.angles)
