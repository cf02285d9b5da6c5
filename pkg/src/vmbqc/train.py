"""Adagrad training of VMBQC learners against a fixed target sample, plus the
summary statistics used to compare learners (learning curves, box plots).

Randomness is keyed, never shared: a run with seed ``k`` draws its initial
parameters from ``SeedSequence(base, spawn_key=(k, 0))`` and epoch ``e``
from ``spawn_key=(k, 1, e)``.  A trace therefore depends only on
``(base, k)``, not on how many other runs exist or the order they run in.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .mmd import KernelConfig, as_distribution, full_gradient, mmd_exact
from .models import TWO_PI, ModelSpec, sample_counts

ADAGRAD_DELTA = 1e-8
ANALYTIC_P_MAX_SITES = 8


@dataclass
class TrainingConfig:
    lr_theta: float = 0.1
    lr_p: float = 0.2
    epochs: int = 200
    shots_per_epoch: int = 8000
    seeds: int = 10
    epsilon: float = 1e-2
    p_init_range: tuple = (0.85, 1.0)
    theta_init_range: tuple = (0.0, TWO_PI)
    p_method: str = "auto"
    bandwidths: tuple = (0.25, 1.0, 4.0)
    snapshot_every: int = 10

    def __post_init__(self):
        self.p_init_range = tuple(float(v) for v in self.p_init_range)
        self.theta_init_range = tuple(float(v) for v in self.theta_init_range)
        self.bandwidths = tuple(float(v) for v in self.bandwidths)
        for name in ("lr_theta", "lr_p", "epsilon"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("epochs", "shots_per_epoch", "seeds", "snapshot_every"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        lo, hi = self.p_init_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError(f"p_init_range {self.p_init_range} must lie inside [0, 1]")
        if not self.theta_init_range[0] <= self.theta_init_range[1]:
            raise ConfigError(f"invalid theta_init_range {self.theta_init_range}")
        if self.p_method not in ("auto", "analytic", "fd"):
            raise ConfigError(f"unknown p_method {self.p_method!r}")

    @property
    def kernel(self) -> KernelConfig:
        return KernelConfig(self.bandwidths)

    def p_method_for(self, model: ModelSpec) -> str:
        if self.p_method != "auto":
            return self.p_method
        return "analytic" if model.schedule.num_masked <= ANALYTIC_P_MAX_SITES else "fd"

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainingTrace:
    learner: str
    seed: int
    losses: np.ndarray
    p_values: np.ndarray
    final_angles: np.ndarray
    final_p: float | None
    snapshots: dict = field(default_factory=dict)
    wall_clock: np.ndarray | None = None
    flags: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1])

    @property
    def min_loss(self) -> float:
        return float(self.losses.min())

    def to_csv(self) -> str:
        lines = ["epoch,loss,p"]
        for e, (l, p) in enumerate(zip(self.losses, self.p_values)):
            lines.append(f"{e},{float(l)!r},{float(p)!r}")
        return "\n".join(lines) + "\n"


def adagrad_step(params, grads, accumulators, rate, delta: float = ADAGRAD_DELTA, bounds=None):
    """One Adagrad update; returns ``(new_params, new_accumulators)``.

    ``bounds=(lo, hi)`` clamps the updated parameters.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    accumulators = np.asarray(accumulators, dtype=np.float64)
    if params.shape != grads.shape or params.shape != accumulators.shape:
        raise ConfigError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, accumulators {accumulators.shape}"
        )
    acc = accumulators + grads**2
    new = params - rate * grads / np.sqrt(acc + delta)
    if bounds is not None:
        new = np.clip(new, *bounds)
    return new, acc


def _generator(base_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=key))


def initialize(model: ModelSpec, cfg: TrainingConfig, base_seed: int, seed: int) -> ModelSpec:
    """Random starting point: angles from ``theta_init_range``, shared p from ``p_init_range``.

    Angles are drawn before p, so learners sharing a seed start from the same
    angles whatever their mask.
    """
    rng = _generator(base_seed, seed, 0)
    angles = rng.uniform(*cfg.theta_init_range, size=model.geometry.shape)
    p = rng.uniform(*cfg.p_init_range)
    out = model.with_angles(angles)
    if model.schedule.num_masked:
        out = out.with_p(p)
    return out


def train_model(
    model: ModelSpec,
    target,
    cfg: TrainingConfig,
    base_seed: int = 0,
    seed: int = 0,
    learner: str = "",
    init: bool = True,
) -> TrainingTrace:
    """Train ``model`` (angles and, if it has a mask, the shared p) against ``target``.

    Each epoch samples the model once, records the MMD of that sample to the
    target, estimates the gradient from fresh samples of the shifted models
    and takes one Adagrad step.
    """
    y = as_distribution(target)
    if y.shape[-1] != model.geometry.dim:
        raise ConfigError(f"target width does not match learner width {model.geometry.width}")
    if model.schedule.num_masked and not model.schedule.shared:
        raise ConfigError("only shared-p learners are trainable")
    if init:
        model = initialize(model, cfg, base_seed, seed)
    kernel = cfg.kernel
    p_method = cfg.p_method_for(model)
    trainable_p = model.schedule.num_masked > 0

    angles = np.array(model.angles)
    p = model.schedule.p if trainable_p else None
    acc_theta = np.zeros_like(angles)
    acc_p = np.zeros(())
    losses = np.empty(cfg.epochs)
    p_values = np.full(cfg.epochs, np.nan if p is None else 0.0)
    wall = np.empty(cfg.epochs)
    snapshots = {}
    flags = []

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        rng = _generator(base_seed, seed, 1, epoch)
        r_q, r_grad = rng.spawn(2)
        q = sample_counts(model, cfg.shots_per_epoch, r_q) / cfg.shots_per_epoch
        loss = mmd_exact(q, y, kernel)
        if not math.isfinite(loss):
            raise NumericalError(f"{learner or 'learner'} seed {seed}: non-finite loss at epoch {epoch}")
        losses[epoch] = loss
        if trainable_p:
            p_values[epoch] = p
        grad = full_gradient(
            model, y, kernel, cfg.shots_per_epoch, r_grad, model_dist=q, p_method=p_method, epsilon=cfg.epsilon
        )
        angles, acc_theta = adagrad_step(angles, grad.dtheta, acc_theta, cfg.lr_theta)
        angles = np.mod(angles, TWO_PI)
        model = model.with_angles(angles)
        angles = np.array(model.angles)
        if trainable_p:
            raw, acc_p = adagrad_step(p, grad.dp, acc_p, cfg.lr_p)
            if raw > 1.5 or raw < -0.5:
                flags.append(f"epoch {epoch}: p step left [0,1] by more than 0.5 ({float(raw)!r})")
            p = float(np.clip(raw, 0.0, 1.0))
            model = model.with_p(p)
        if (epoch + 1) % cfg.snapshot_every == 0 or epoch + 1 == cfg.epochs:
            snapshots[epoch] = (np.array(angles), p)
        wall[epoch] = time.perf_counter() - t0

    return TrainingTrace(learner, seed, losses, p_values, angles, p, snapshots, wall, flags)


# --------------------------------------------------------------------------
# statistics

@dataclass
class CurveStats:
    mean: np.ndarray
    std: np.ndarray

    def to_csv(self) -> str:
        lines = ["epoch,mean_loss,std_loss"]
        for e, (m, s) in enumerate(zip(self.mean, self.std)):
            lines.append(f"{e},{float(m)!r},{float(s)!r}")
        return "\n".join(lines) + "\n"


def learning_curve(traces: list[TrainingTrace]) -> CurveStats:
    """Mean and sample standard deviation over runs, epoch by epoch."""
    losses = np.stack([t.losses for t in traces])
    std = losses.std(axis=0, ddof=1) if len(traces) > 1 else np.zeros(losses.shape[1])
    return CurveStats(losses.mean(axis=0), std)


@dataclass
class BoxSummary:
    q1: float
    median: float
    q3: float
    iqr: float
    lwe: float
    uwe: float
    outliers: list
    n: int

    def as_row(self) -> dict:
        return {
            "Q1": self.q1,
            "median": self.median,
            "Q3": self.q3,
            "LWE": self.lwe,
            "UWE": self.uwe,
            "outliers": self.outliers,
        }


def box_summary(values) -> BoxSummary:
    """Box-plot statistics with linearly interpolated quartiles.

    Whiskers end at the most extreme observations within 1.5 IQR of the
    quartiles; anything beyond is an outlier.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ConfigError("box summary of an empty sample")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo) & (v <= hi)]
    outliers = [float(x) for x in v[(v < lo) | (v > hi)]]
    return BoxSummary(float(q1), float(med), float(q3), float(iqr), float(inside.min()), float(inside.max()), outliers, int(v.size))


def noise_floor(distribution: np.ndarray, shots: int, cfg: KernelConfig, trials: int = 20, seed: int = 0) -> float:
    """Mean MMD between two independent ``shots``-sample draws of one distribution."""
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(trials):
        a = rng.multinomial(shots, distribution) / shots
        b = rng.multinomial(shots, distribution) / shots
        vals.append(mmd_exact(a, b, cfg))
    return float(np.mean(vals))


def pooled_standard_error(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size))
