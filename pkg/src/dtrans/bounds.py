"""Order-statistic gaps and the cost of the quantile coupling between them."""

from dataclasses import dataclass
import warnings

import numpy as np
from scipy.integrate import quad

from .rng import map_replicas, stream

__all__ = [
    "GapModel",
    "uniform_gaps",
    "linear_density_gaps",
    "truncated_exponential_gaps",
    "builtin_gap_models",
    "gaps_from_points",
    "coupled_cost_terms",
    "coupled_cost_sample",
    "gap_cost_experiment",
]


def _bisect_inverse(cdf, u, tol=1e-12):
    u = np.asarray(u, dtype=np.float64)
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class GapModel:
    """Distribution on ``[0, 1]`` with a density bounded away from 0."""

    name: str
    cdf: object
    pdf: object
    inverse: object = None

    def quantile(self, u):
        if self.inverse is not None:
            return self.inverse(np.asarray(u, dtype=np.float64))
        return _bisect_inverse(self.cdf, u)

    def entropy_bound(self):
        """``int_0^1 f log f``, the limit of the mean coupled cost."""
        value, _ = quad(lambda x: self.pdf(x) * np.log(self.pdf(x)), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
        return float(value)


def uniform_gaps():
    return GapModel("uniform", cdf=lambda x: np.asarray(x, dtype=np.float64), pdf=lambda x: np.ones_like(np.asarray(x, dtype=np.float64)), inverse=lambda u: u)


def linear_density_gaps():
    """Density ``0.5 + x``."""
    return GapModel(
        "linear",
        cdf=lambda x: 0.5 * x + 0.5 * x * x,
        pdf=lambda x: 0.5 + np.asarray(x, dtype=np.float64),
        inverse=lambda u: (-1.0 + np.sqrt(1.0 + 8.0 * u)) / 2.0,
    )


def truncated_exponential_gaps(rate=1.0):
    """Exponential law with the given rate conditioned on ``[0, 1]``."""
    z = -np.expm1(-rate)
    return GapModel(
        f"truncexp:{rate:g}",
        cdf=lambda x: -np.expm1(-rate * np.asarray(x, dtype=np.float64)) / z,
        pdf=lambda x: rate * np.exp(-rate * np.asarray(x, dtype=np.float64)) / z,
        inverse=lambda u: -np.log1p(-u * z) / rate,
    )


def builtin_gap_models():
    models = [uniform_gaps(), linear_density_gaps(), truncated_exponential_gaps(1.0)]
    return {m.name: m for m in models}


def gaps_from_points(u, jitter=1e-12):
    """Spacings of sorted points in ``(0, 1)`` including both boundary gaps.

    Duplicate points are separated by ``jitter`` with a warning.
    """
    u = np.sort(np.asarray(u, dtype=np.float64), axis=-1)
    if np.any(u <= 0) or np.any(u >= 1):
        raise ValueError("points must lie strictly inside (0, 1)")
    d = np.diff(u, axis=-1)
    if np.any(d <= 0):
        warnings.warn("duplicate points perturbed", RuntimeWarning, stacklevel=2)
        bump = np.cumsum(np.concatenate([np.zeros(u.shape[:-1] + (1,)), (d <= 0) * jitter], axis=-1), axis=-1)
        u = u + bump
    zeros = np.zeros(u.shape[:-1] + (1,))
    ones = np.ones(u.shape[:-1] + (1,))
    return np.diff(np.concatenate([zeros, u, ones], axis=-1), axis=-1)


def coupled_cost_terms(model, u):
    """``(cost, term1, term2)`` for uniform points ``u`` and their quantiles.

    With ratios ``x_i = dG_i / dU_i`` of matched gaps, ``term1 = log mean(x)``
    and ``term2 = -mean(log x)``; the cost is their sum.
    """
    u = np.sort(np.asarray(u, dtype=np.float64), axis=-1)
    p = gaps_from_points(u)
    q = gaps_from_points(np.clip(model.quantile(u), 1e-300, 1 - 1e-16))
    log_ratio = np.log(q) - np.log(p)
    m = log_ratio.max(axis=-1, keepdims=True)
    term1 = np.log(np.mean(np.exp(log_ratio - m), axis=-1)) + m[..., 0]
    term2 = -log_ratio.mean(axis=-1)
    return term1 + term2, term1, term2


def coupled_cost_sample(model, n, rng, size=None):
    u = rng.random(((size,) if size else ()) + (n - 1,))
    return coupled_cost_terms(model, u)[0]


def _replica(model, n, seed, replica):
    rng = stream(seed, "gap-cost", n, replica)
    return coupled_cost_terms(model, rng.random(n - 1))


def gap_cost_experiment(model, n_grid, replicas=200, seed=0, threads=None):
    """Mean coupled cost and its two terms for each dimension in ``n_grid``."""
    bound = model.entropy_bound()
    rows = []
    for n in n_grid:
        out = np.array(map_replicas(lambda r: _replica(model, n, seed, r), range(replicas), threads=threads))
        cost, t1, t2 = out[:, 0], out[:, 1], out[:, 2]
        rows.append(
            {
                "n": int(n),
                "replicas": int(replicas),
                "mean_cost": float(cost.mean()),
                "se_cost": float(cost.std(ddof=1) / np.sqrt(replicas)) if replicas > 1 else float("nan"),
                "term1": float(t1.mean()),
                "median_term1": float(np.median(t1)),
                "median_abs_term1": float(np.median(np.abs(t1))),
                "term2": float(t2.mean()),
                "quadrature_bound": bound,
            }
        )
    return {"model": model.name, "quadrature_bound": bound, "rows": rows}
