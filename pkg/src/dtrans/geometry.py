"""Densities along the interpolation and the determinant identities behind them.

Coordinates follow one convention throughout: a point of the simplex is
charted by its first ``n - 1`` coordinates (``drop`` selects a different
coordinate where supported), and every determinant below is taken in that
chart.  Densities of measures on the simplex are expressed with respect to
the reference measure with log-density ``-sum(log p)``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .interpolation import InterpolationSchedule, generator_at, transport_at, weights_at
from .portfolio import chart_gradient, chart_matrix, portfolio_map
from .rng import stream
from .simplex import barycenter, invert, relative_entropy, sample_uniform

__all__ = [
    "DensityModel",
    "uniform_model",
    "truncated_uniform_model",
    "dirichlet_model",
    "u_map",
    "q_of_u",
    "jacobian_det_u",
    "inversion_jacobian",
    "numeric_jacobian",
    "monge_ampere_density",
    "change_of_variables_density",
    "entropy_of_pushforward",
    "entropy_convexity_experiment",
    "lowner_residual",
]


# --------------------------------------------------------------------------
# density models
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Analytic log-density (w.r.t. the reference measure) with a matching sampler."""

    name: str
    n: int
    log_density: object
    sample: object
    exact_entropy: float = float("nan")


def uniform_model(n):
    """Uniform law on the simplex: Lebesgue density ``(n-1)!`` on the chart."""
    const = math.lgamma(n)

    def log_density(p):
        return const + np.sum(np.log(p), axis=-1)

    ent = const + n * (digamma(1.0) - digamma(n))
    return DensityModel(f"uniform:{n}", n, log_density, lambda size, rng: sample_uniform(n, size, rng), float(ent))


def truncated_uniform_model(n, eps):
    """Uniform law on ``{p_i >= eps}``."""
    const = math.lgamma(n) - (n - 1) * math.log(1 - n * eps)

    def log_density(p):
        p = np.asarray(p, dtype=np.float64)
        inside = np.all(p >= eps, axis=-1)
        return np.where(inside, const + np.sum(np.log(p), axis=-1), -np.inf)

    return DensityModel(f"uniform:{n}:eps={eps:g}", n, log_density, lambda size, rng: sample_uniform(n, size, rng, eps))


def dirichlet_model(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.size < 2 or np.any(a <= 0):
        raise ValueError("Dirichlet parameters must be positive")
    const = gammaln(a.sum()) - gammaln(a).sum()

    def log_density(p):
        return const + np.sum(a * np.log(p), axis=-1)

    ent = const + float(np.sum(a * (digamma(a) - digamma(a.sum()))))
    name = "dirichlet:" + ",".join(f"{x:g}" for x in a)
    return DensityModel(name, a.size, log_density, lambda size, rng: rng.dirichlet(a, size=size), ent)


# --------------------------------------------------------------------------
# chart maps and Jacobians
# --------------------------------------------------------------------------


def u_map(g, r):
    """``u = 1 + grad~ / (1 - r~ . grad~)`` in the chart dropping the last coordinate."""
    r = np.asarray(r, dtype=np.float64)
    gt = chart_gradient(g, r)
    denom = 1.0 - np.sum(r[..., :-1] * gt, axis=-1, keepdims=True)
    if np.any(denom <= 0):
        raise FloatingPointError("nonpositive denominator in the u map")
    return 1.0 + gt / denom


def q_of_u(u):
    u = np.asarray(u, dtype=np.float64)
    full = np.concatenate([u, np.ones(u.shape[:-1] + (1,))], axis=-1)
    return full / full.sum(axis=-1, keepdims=True)


def jacobian_det_u(g, r):
    """``|det du/dr~| = (r_n / pi_n)^n det L~``; raises on a singular ``L~``."""
    r = np.asarray(r, dtype=np.float64)
    n = r.shape[-1]
    pi = portfolio_map(g, r)
    det = np.linalg.det(chart_matrix(g, r))
    if np.any(det <= 0):
        raise FloatingPointError("L matrix is singular on the tangent space")
    return (r[..., -1] / pi[..., -1]) ** n * det


def inversion_jacobian(p):
    """Jacobian determinant of ``p~ -> r~`` for ``r = p^-1``: ``prod(r) / prod(p)``."""
    p = np.asarray(p, dtype=np.float64)
    return np.exp(np.sum(np.log(invert(p)) - np.log(p), axis=-1))


def numeric_jacobian(fn, x, rel_step=1e-5, simplex_output=True):
    """Central-difference Jacobian of ``fn`` in the chart dropping the last coordinate.

    With ``simplex_output`` the values of ``fn`` are simplex points and are
    charted the same way; otherwise they are used as returned (e.g. the
    ``u`` map).  The step is scaled by the smallest coordinate of ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    h = rel_step * x.min(axis=-1)
    cols = []
    for k in range(n - 1):
        step = np.zeros(x.shape)
        step[..., k] = h
        step[..., -1] = -h
        up = fn(x + step)
        down = fn(x - step)
        if simplex_output:
            up, down = up[..., :-1], down[..., :-1]
        cols.append((up - down) / (2 * h[..., None]))
    return np.stack(cols, axis=-1)


def _log_det_chart(g_t, r, drop=None):
    sign, logdet = np.linalg.slogdet(chart_matrix(g_t, r, drop))
    if np.any(sign <= 0):
        raise FloatingPointError("L matrix is singular on the tangent space")
    return logdet


def monge_ampere_density(model, g1, t, p, drop=None):
    """``(q, log rho_t(q))`` with ``q = T_t(p)``.

    ``log rho_t(q) = log rho_0(p) + sum log pi - log det L~_t - 2 sum log r``
    where ``r = p^-1`` and ``pi = pi_t(r)``.
    """
    schedule = InterpolationSchedule(g1)
    p = np.asarray(p, dtype=np.float64)
    r = invert(p)
    pi = weights_at(schedule, t, r)
    q = transport_at(schedule, t, p)
    logdet = _log_det_chart(generator_at(schedule, t), r, drop)
    log_rho = model.log_density(p) + np.sum(np.log(pi), axis=-1) - logdet - 2 * np.sum(np.log(r), axis=-1)
    return q, log_rho


def change_of_variables_density(model, g1, t, p, rel_step=1e-5):
    """Same density by a finite-difference Jacobian of ``T_t``; an independent check."""
    schedule = InterpolationSchedule(g1)
    p = np.asarray(p, dtype=np.float64)
    q = transport_at(schedule, t, p)
    J = numeric_jacobian(lambda x: transport_at(schedule, t, x), p, rel_step)
    _, logabsdet = np.linalg.slogdet(J)
    log_rho = model.log_density(p) + np.sum(np.log(q) - np.log(p), axis=-1) - logabsdet
    return q, log_rho


def entropy_of_pushforward(model, g1, t, M, seed=0):
    """Monte Carlo entropy of ``(T_t)_# P0``: mean of ``log rho_t(T_t p)`` over ``p ~ P0``.

    Returns ``(estimate, standard_error)``.
    """
    p = model.sample(M, stream(seed, "entropy", M))
    _, log_rho = monge_ampere_density(model, g1, t, p)
    return float(log_rho.mean()), float(log_rho.std(ddof=1) / np.sqrt(M))


def entropy_convexity_experiment(model, g1, t_grid=None, M=10_000, seed=0):
    """Entropy plus ``n`` times cost along the interpolation, two ways.

    Curve (a) is computed directly: the entropy of ``P_t`` through a numeric
    change of variables plus ``n`` times the Monge cost.  Curve (b) is
    ``-(1/M) sum log det L~_t(r_m)``.  Both use the same samples at every
    time, so (a) - (b) is constant per sample and (b) is convex per sample.
    """
    t_grid = np.linspace(0.0, 1.0, 33) if t_grid is None else np.asarray(t_grid, dtype=np.float64)
    schedule = InterpolationSchedule(g1, t_grid)
    n = model.n
    p = model.sample(M, stream(seed, "entropy-convexity", M))
    r = invert(p)
    e = barycenter(n)
    pi1 = portfolio_map(g1, r)
    a_samples = np.empty((t_grid.size, M))
    b_samples = np.empty((t_grid.size, M))
    for k, t in enumerate(t_grid):
        _, log_rho = change_of_variables_density(model, g1, t, p)
        cost_t = relative_entropy(e, (1 - t) * e + t * pi1)
        a_samples[k] = log_rho + n * cost_t
        b_samples[k] = -_log_det_chart(generator_at(schedule, t), r)
    curve_a = a_samples.mean(axis=1)
    curve_b = b_samples.mean(axis=1)
    per_sample_second = np.diff(b_samples, 2, axis=0)
    diff = curve_a - curve_b
    se = float(np.max(a_samples.std(axis=1, ddof=1)) / np.sqrt(M))
    return {
        "model": model.name,
        "generator": g1.spec,
        "M": M,
        "seed": seed,
        "t_grid": t_grid,
        "curve_a": curve_a,
        "curve_b": curve_b,
        "second_differences_a": np.diff(curve_a, 2),
        "second_differences_b": np.diff(curve_b, 2),
        "min_per_sample_second_difference": float(per_sample_second.min()) if per_sample_second.size else 0.0,
        "difference_range": float(diff.max() - diff.min()),
        "standard_error": se,
    }


def lowner_residual(g1, r, t1, t2, alpha):
    """``L~_t - ((1-alpha) L~_t1 + alpha L~_t2)`` and its closed form.

    With ``t = (1-alpha) t1 + alpha t2`` the residual equals
    ``alpha (1-alpha) d d^T`` where ``d = grad~ phi_t1 - grad~ phi_t2``.
    """
    schedule = InterpolationSchedule(g1)
    t = (1 - alpha) * t1 + alpha * t2
    g_t, g_1, g_2 = (generator_at(schedule, s) for s in (t, t1, t2))
    residual = chart_matrix(g_t, r) - ((1 - alpha) * chart_matrix(g_1, r) + alpha * chart_matrix(g_2, r))
    d = chart_gradient(g_1, r) - chart_gradient(g_2, r)
    predicted = alpha * (1 - alpha) * np.einsum("...i,...j->...ij", d, d)
    return residual, predicted
