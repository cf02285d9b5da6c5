"""Distance from a channel's output law to the closest unitary-model output law.

The unitary family is searched exhaustively on a regular angle grid, then the
best grid points are polished with Nelder-Mead.  Only tiny instances are
supported (three angles by default) since the grid is dense in every angle.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .errors import CapacityError
from .mmd import KernelConfig, mmd_exact
from .models import TWO_PI, ModelSpec, _evolve, exact_channel_distribution, make_restricted
from .statevector import ClusterGeometry, exact_probabilities

MAX_GRID_PARAMS = 3
_CHUNK = 1 << 16


def unitary_distributions(thetas: np.ndarray, geometry: ClusterGeometry) -> np.ndarray:
    """Born distributions for a ``(M, width*depth)`` stack of flattened angle grids."""
    thetas = np.asarray(thetas, dtype=np.float64).reshape(-1, *geometry.shape)
    return exact_probabilities(_evolve(thetas, None, geometry.width))


def _tv_rows(dists: np.ndarray, target: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(dists - target).sum(axis=1)


def grid_search(target: np.ndarray, geometry: ClusterGeometry, points: int, keep: int = 8):
    """Best ``keep`` grid points by TV distance, as ``(tv values, thetas)``."""
    n = geometry.width * geometry.depth
    if n > MAX_GRID_PARAMS:
        raise CapacityError(f"grid search over {n} angles exceeds the cap of {MAX_GRID_PARAMS}")
    axis = np.arange(points) * (TWO_PI / points)
    total = points**n
    best_tv = np.full(0, np.inf)
    best_th = np.zeros((0, n))
    for lo in range(0, total, _CHUNK):
        idx = np.arange(lo, min(total, lo + _CHUNK))
        digits = (idx[:, None] // points ** np.arange(n)[None, :]) % points
        thetas = axis[digits]
        tv = _tv_rows(unitary_distributions(thetas, geometry), target)
        cand_tv = np.concatenate([best_tv, tv])
        cand_th = np.concatenate([best_th, thetas])
        order = np.argsort(cand_tv, kind="stable")[:keep]
        best_tv, best_th = cand_tv[order], cand_th[order]
    return best_tv, best_th


def refine(target, geometry, starts, xatol=1e-10, fatol=1e-14):
    """Nelder-Mead on the TV distance from each start; returns the best result and all trajectories."""

    def tv(theta):
        return float(_tv_rows(unitary_distributions(theta[None], geometry), target)[0])

    runs = []
    for x0 in starts:
        res = minimize(tv, np.asarray(x0, dtype=float), method="Nelder-Mead",
                       options={"xatol": xatol, "fatol": fatol, "maxiter": 20000, "maxfev": 40000})
        runs.append({"start": [float(v) for v in x0], "tv_start": tv(np.asarray(x0, dtype=float)),
                     "tv": float(res.fun), "theta": [float(v) for v in np.mod(res.x, TWO_PI)],
                     "iterations": int(res.nit)})
    best = min(runs, key=lambda r: r["tv"])
    return best, runs


def observation_gap(
    channel: ModelSpec,
    points: int = 64,
    keep: int = 8,
    extra_starts=(),
    kernel: KernelConfig = KernelConfig(),
) -> dict:
    """TV gap between ``channel``'s exact law and the best unitary found."""
    target = exact_channel_distribution(channel)
    geom = channel.geometry
    grid_tv, grid_th = grid_search(target, geom, points, keep)
    starts = list(grid_th) + [np.asarray(s, dtype=float) for s in extra_starts]
    best, runs = refine(target, geom, starts)
    best_dist = unitary_distributions(np.array(best["theta"])[None], geom)[0]
    return {
        "grid_points": points,
        "grid_best_tv": float(grid_tv[0]),
        "gap_tv": best["tv"],
        "best_theta": best["theta"],
        "mmd_at_best": mmd_exact(best_dist, target, kernel),
        "refinements": runs,
        "channel_distribution": target.tolist(),
        "best_unitary_distribution": best_dist.tolist(),
    }


def gap_study(angles, p: float = 0.5, variant: str = "A", points: int = 64, width: int = 3, depth: int = 1) -> dict:
    """Gap at ``points`` and at twice that resolution (the finer run also starts
    from the coarse optimum, so its gap can only go down)."""
    geom = ClusterGeometry(width, depth)
    model = make_restricted(variant, geom, np.asarray(angles, dtype=float).reshape(geom.shape), p)
    coarse = observation_gap(model, points)
    fine = observation_gap(model, 2 * points, extra_starts=[coarse["best_theta"]])
    gap_c, gap_f = coarse["gap_tv"], fine["gap_tv"]
    rel = abs(gap_f - gap_c) / gap_c if gap_c > 0 else 0.0
    return {
        "width": width,
        "depth": depth,
        "variant": variant,
        "p": p,
        "angles": model.angles.tolist(),
        "coarse": coarse,
        "fine": fine,
        "gap": gap_f,
        "relative_change": rel,
    }
