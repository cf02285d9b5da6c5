"""MMD loss on bitstrings and the gradient estimators used in training.

Every estimator works in two modes.  With ``shots=None`` all model
expectations are taken over exact channel distributions, which is what the
finite-difference checks compare against.  With an integer ``shots`` each
model distribution is replaced by the empirical histogram of that many
fresh samples.  Targets may be given either as a :class:`SampleSet` or as a
probability vector.

Expectations ``E_{x~a, y~b} K(x, y)`` are evaluated as ``a @ G @ b`` over the
``2**N`` basis, which makes sample-based losses full V-statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError
from .models import ModelSpec, exact_channel_distribution, sample_counts, sample_model
from .statevector import SampleSet, bitstring_to_index

# exp(i*theta*Z) has eigenvalue gap 2, so the exact two-term shift is pi/4.
SHIFT = math.pi / 4
DENSE_GRAM_MAX_WIDTH = 10


@dataclass(frozen=True)
class KernelConfig:
    """Uniform mixture of Gaussian kernels on bit vectors.

    ``K(x, y) = mean_k exp(-h(x, y) / (2 sigma_k))`` with ``h`` the Hamming
    distance, so ``K(x, x) = 1``.
    """

    bandwidths: tuple = (0.25, 1.0, 4.0)

    def __post_init__(self):
        bw = tuple(float(s) for s in np.atleast_1d(self.bandwidths))
        if not bw or any(not (s > 0 and math.isfinite(s)) for s in bw):
            raise ConfigError(f"bandwidths must be positive and finite, got {self.bandwidths}")
        object.__setattr__(self, "bandwidths", bw)

    def of_distance(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=np.float64)
        sig = np.asarray(self.bandwidths)
        return np.exp(-h[..., None] / (2.0 * sig)).mean(axis=-1)

    def gram(self, width: int) -> np.ndarray:
        return _gram(self.bandwidths, width)


@lru_cache(maxsize=16)
def _gram(bandwidths: tuple, width: int) -> np.ndarray:
    if width > DENSE_GRAM_MAX_WIDTH:
        raise ConfigError(f"dense Gram matrix not built above {DENSE_GRAM_MAX_WIDTH} qubits")
    x = np.arange(1 << width)
    h = np.bitwise_count(x[:, None] ^ x[None, :])
    g = KernelConfig(bandwidths).of_distance(h)
    g.flags.writeable = False
    return g


def _bits(x) -> int:
    if isinstance(x, str):
        return bitstring_to_index(x)
    return sum(int(b) << q for q, b in enumerate(x))


def kernel_eval(x, y, cfg: KernelConfig = KernelConfig()) -> float:
    """Kernel between two bitstrings (``'0101'`` strings or 0/1 sequences)."""
    if len(x) != len(y):
        raise ConfigError(f"bitstrings of different lengths {len(x)} and {len(y)}")
    h = int(np.bitwise_count(_bits(x) ^ _bits(y)))
    return float(cfg.of_distance(h))


def kernel_expectation(a: np.ndarray, b: np.ndarray, cfg: KernelConfig) -> float:
    """``sum_{x,y} a[x] b[y] K(x, y)`` for weight vectors over the basis."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"distributions over different bases: {a.shape} vs {b.shape}")
    width = a.shape[-1].bit_length() - 1
    if width <= DENSE_GRAM_MAX_WIDTH:
        return float(a @ cfg.gram(width) @ b)
    ia, ib = np.flatnonzero(a), np.flatnonzero(b)
    total = 0.0
    for lo in range(0, len(ia), 1024):
        rows = ia[lo : lo + 1024]
        k = cfg.of_distance(np.bitwise_count(rows[:, None] ^ ib[None, :]))
        total += float(a[rows] @ k @ b[ib])
    return total


def as_distribution(target, width: int | None = None) -> np.ndarray:
    if isinstance(target, SampleSet):
        dist = target.empirical()
    else:
        dist = np.asarray(target, dtype=np.float64)
    if width is not None and dist.shape[-1] != 1 << width:
        raise ConfigError(f"target is over {dist.shape[-1]} outcomes, model has {1 << width}")
    return dist


def mmd_exact(q, y, cfg: KernelConfig = KernelConfig()) -> float:
    """MMD between two probability vectors with every expectation summed exactly."""
    q = np.asarray(q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if q.shape != y.shape:
        raise ConfigError(f"width mismatch: {q.shape} vs {y.shape}")
    d = q - y
    # the difference form avoids cancellation between three O(1) terms
    return kernel_expectation(d, d, cfg)


def mmd_from_samples(xs: SampleSet, ys: SampleSet, cfg: KernelConfig = KernelConfig(), unbiased: bool = False) -> float:
    """Sample MMD.  The default V-statistic keeps the diagonal pairs, so two
    identical sample sets give exactly zero; ``unbiased=True`` drops them
    from the within-set terms."""
    if not len(xs) or not len(ys):
        raise ConfigError("empty sample set")
    if xs.width != ys.width:
        raise ConfigError(f"width mismatch: {xs.width} vs {ys.width}")
    if not unbiased:
        return mmd_exact(xs.empirical(), ys.empirical(), cfg)
    cx, cy = xs.counts().astype(float), ys.counts().astype(float)
    n, m = len(xs), len(ys)
    if n < 2 or m < 2:
        raise ConfigError("unbiased estimate needs at least two samples per set")
    kxx = (kernel_expectation(cx, cx, cfg) - n) / (n * (n - 1))
    kyy = (kernel_expectation(cy, cy, cfg) - m) / (m * (m - 1))
    kxy = kernel_expectation(cx, cy, cfg) / (n * m)
    return kxx - 2 * kxy + kyy


# --------------------------------------------------------------------------
# gradients

@dataclass
class GradientReport:
    dtheta: np.ndarray
    dp: float | np.ndarray | None
    method: str
    p_method: str | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.dtheta).all() or (self.dp is not None and not np.isfinite(self.dp).all()):
            from .errors import NumericalError

            raise NumericalError(f"non-finite gradient ({self.method})")

    def rows(self, one_based: bool = True) -> list[tuple]:
        off = 1 if one_based else 0
        out = [
            (f"theta[{i + off},{j + off}]", self.method, float(v))
            for (i, j), v in np.ndenumerate(self.dtheta)
        ]
        if self.dp is not None:
            if np.ndim(self.dp) == 0:
                out.append(("p", self.p_method or self.method, float(self.dp)))
            else:
                for (i, j), v in np.ndenumerate(self.dp):
                    out.append((f"p[{i + off},{j + off}]", self.p_method or self.method, float(v)))
        return out

    def to_text(self) -> str:
        lines = [f"{'site':<14} {'method':<18} value"]
        lines += [f"{s:<14} {m:<18} {v!r}" for s, m, v in self.rows()]
        return "\n".join(lines) + "\n"


def model_distribution(model: ModelSpec, shots: int | None, rng: np.random.Generator | None) -> np.ndarray:
    """Exact output distribution, or the empirical one from ``shots`` samples."""
    if shots is None:
        return exact_channel_distribution(model)
    if rng is None:
        raise ConfigError("sampling mode needs a random generator")
    return sample_counts(model, shots, rng) / shots


def _rngs(rng: np.random.Generator | None, n: int):
    if rng is None:
        return [None] * n
    return rng.spawn(n)


def loss(model: ModelSpec, target, cfg: KernelConfig = KernelConfig(), shots: int | None = None, rng=None) -> float:
    y = as_distribution(target, model.geometry.width)
    return mmd_exact(model_distribution(model, shots, rng), y, cfg)


def grad_theta_shift(
    model: ModelSpec,
    target,
    site: tuple[int, int],
    cfg: KernelConfig = KernelConfig(),
    shots: int | None = None,
    rng: np.random.Generator | None = None,
    model_dist: np.ndarray | None = None,
) -> float:
    """Parameter-shift derivative of the loss in one angle.

    ``dL/dtheta = 2 (E[K(x+, y)] - E[K(x-, y)])_{y~q} - 2 (same)_{y~target}``
    where ``x+-`` come from the model with that angle shifted by ``+-pi/4``.
    """
    if not model.geometry.contains(*site):
        raise ConfigError(f"site {site} outside the lattice")
    y = as_distribution(target, model.geometry.width)
    r_q, r_plus, r_minus = _rngs(rng, 3)
    q = model_distribution(model, shots, r_q) if model_dist is None else model_dist
    diff = model_distribution(model.shifted(site, SHIFT), shots, r_plus) - model_distribution(
        model.shifted(site, -SHIFT), shots, r_minus
    )
    return 2.0 * (kernel_expectation(diff, q, cfg) - kernel_expectation(diff, y, cfg))


def grad_p_analytic(
    model: ModelSpec,
    target,
    site: tuple[int, int],
    cfg: KernelConfig = KernelConfig(),
    shots: int | None = None,
    rng: np.random.Generator | None = None,
    model_dist: np.ndarray | None = None,
) -> float:
    """Derivative in one site's correction probability.

    The output law is affine in that probability, interpolating between the
    model with the site always corrected (``p=1``) and never corrected
    (``p=0``); the derivative is the MMD gradient along that difference.
    """
    site = tuple(site)
    if not model.geometry.contains(*site) or not model.schedule.mask[site]:
        raise ConfigError(f"site {site} is not partially adapted")
    y = as_distribution(target, model.geometry.width)
    r_q, r_one, r_zero = _rngs(rng, 3)
    q = model_distribution(model, shots, r_q) if model_dist is None else model_dist
    forced_one = model.with_schedule(model.schedule.force_site(site, 1.0))
    forced_zero = model.with_schedule(model.schedule.force_site(site, 0.0))
    diff = model_distribution(forced_one, shots, r_one) - model_distribution(forced_zero, shots, r_zero)
    return 2.0 * (kernel_expectation(diff, q, cfg) - kernel_expectation(diff, y, cfg))


def grad_p_sites(
    model: ModelSpec,
    target,
    cfg: KernelConfig = KernelConfig(),
    shots: int | None = None,
    rng: np.random.Generator | None = None,
    model_dist: np.ndarray | None = None,
) -> np.ndarray:
    """Per-site partials ``dL/dp_ij`` on the mask (zero elsewhere).

    In sampling mode the model's own samples are drawn first from ``rng`` and
    site ``k`` (row-major over the mask) then uses the ``k``-th spawned child.
    """
    sites = model.schedule.sites
    if model_dist is None:
        model_dist = model_distribution(model, shots, rng)
    out = np.zeros(model.geometry.shape)
    for site, r in zip(sites, _rngs(rng, len(sites))):
        out[site] = grad_p_analytic(model, target, site, cfg, shots, r, model_dist=model_dist)
    return out


def grad_p_shared(
    model: ModelSpec,
    target,
    cfg: KernelConfig = KernelConfig(),
    shots: int | None = None,
    rng: np.random.Generator | None = None,
    model_dist: np.ndarray | None = None,
) -> float:
    """Chain rule for a shared ``p``: sum of the per-site partials over the mask."""
    if not model.schedule.shared:
        raise ConfigError("shared-p gradient requested for a per-site schedule")
    return float(grad_p_sites(model, target, cfg, shots, rng, model_dist).sum())


def grad_p_fd(
    model: ModelSpec,
    target,
    epsilon: float,
    cfg: KernelConfig = KernelConfig(),
    shots: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Central difference in the shared ``p``, one-sided where ``p +- eps`` leaves [0, 1].

    In sampling mode both loss evaluations reuse one random stream, so the
    shot-level draws are coupled and most sampling noise cancels.
    """
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    if not model.schedule.shared:
        raise ConfigError("finite difference in p requires a shared-p schedule")
    p = model.schedule.p
    hi, lo = p + epsilon, p - epsilon
    if hi > 1.0 and lo < 0.0:
        raise ConfigError(f"epsilon {epsilon} too large for p in [0, 1]")
    if hi > 1.0:
        hi, span = p, epsilon
    elif lo < 0.0:
        lo, span = p, epsilon
    else:
        span = 2 * epsilon
    y = as_distribution(target, model.geometry.width)
    if shots is None:
        f_hi = mmd_exact(exact_channel_distribution(model.with_p(hi)), y, cfg)
        f_lo = mmd_exact(exact_channel_distribution(model.with_p(lo)), y, cfg)
    else:
        seed = int(rng.integers(2**63))
        f_hi = mmd_exact(sample_model(model.with_p(hi), shots, np.random.default_rng(seed)).empirical(), y, cfg)
        f_lo = mmd_exact(sample_model(model.with_p(lo), shots, np.random.default_rng(seed)).empirical(), y, cfg)
    return (f_hi - f_lo) / span


def full_gradient(
    model: ModelSpec,
    target,
    cfg: KernelConfig = KernelConfig(),
    shots: int | None = None,
    rng: np.random.Generator | None = None,
    model_dist: np.ndarray | None = None,
    p_method: str = "analytic",
    epsilon: float = 1e-2,
) -> GradientReport:
    """All angle derivatives plus the shared-``p`` derivative.

    Shifted models for site ``(i, j)`` use the spawned child stream
    ``i * depth + j``; the p-gradient uses the one after the last site.
    """
    geom = model.geometry
    y = as_distribution(target, geom.width)
    r_q, r_theta, r_p = _rngs(rng, 3)
    q = model_distribution(model, shots, r_q) if model_dist is None else model_dist
    resid = q - y
    gres = resid @ cfg.gram(geom.width) if geom.width <= DENSE_GRAM_MAX_WIDTH else None
    dtheta = np.zeros(geom.shape)
    site_rngs = _rngs(r_theta, geom.width * geom.depth)
    for (i, j), r in zip(np.ndindex(*geom.shape), site_rngs):
        r_plus, r_minus = _rngs(r, 2)
        diff = model_distribution(model.shifted((i, j), SHIFT), shots, r_plus) - model_distribution(
            model.shifted((i, j), -SHIFT), shots, r_minus
        )
        if gres is not None:
            dtheta[i, j] = 2.0 * float(diff @ gres)
        else:
            dtheta[i, j] = 2.0 * kernel_expectation(diff, resid, cfg)
    dp = None
    if model.schedule.num_masked:
        if p_method == "analytic":
            dp = grad_p_shared(model, y, cfg, shots, r_p, model_dist=q)
        elif p_method in ("fd", "finite-difference"):
            p_method = "finite-difference"
            dp = grad_p_fd(model, y, epsilon, cfg, shots, r_p)
        else:
            raise ConfigError(f"unknown p-gradient method {p_method!r}")
    return GradientReport(dtheta, dp, "parameter-shift", p_method if dp is not None else None)
