"""Exponentially concave generators and the maps they induce.

A generator ``phi`` is evaluated with its Euclidean gradient and Hessian on
the positive orthant.  Everything that matters downstream (portfolio map,
L-divergence, tangent quadratic forms) only sees derivatives along the
simplex, so the choice of extension off the simplex is irrelevant.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .simplex import invert, odot

__all__ = [
    "Generator",
    "PowerGenerator",
    "AffineGenerator",
    "DiversityGenerator",
    "MixtureGenerator",
    "phi0",
    "parse_generator",
    "builtin_generators",
    "portfolio_map",
    "transport_map",
    "transport_map_ratio",
    "dual_source_map",
    "l_divergence",
    "l_divergence_portfolio",
    "l_matrix",
    "chart_matrix",
    "chart_gradient",
    "mcm_check",
    "RegularityReport",
    "estimate_regularity",
]

WEIGHT_CLAMP = 1e-12


class Generator:
    """Base class: subclasses provide ``value``, ``grad`` and ``hess``.

    All three broadcast over leading axes of ``r``: ``value`` drops the last
    axis, ``grad`` keeps it and ``hess`` appends one more.
    """

    spec = "generator"
    # generators whose L matrix is positive definite on tangent vectors
    strictly_concave = True

    def value(self, r):
        raise NotImplementedError

    def grad(self, r):
        raise NotImplementedError

    def hess(self, r):
        raise NotImplementedError

    def __repr__(self):
        return f"Generator({self.spec!r})"


class PowerGenerator(Generator):
    """``(lam / n) * sum(log r)``; ``lam = 1`` is the log geometric mean."""

    def __init__(self, lam=1.0):
        lam = float(lam)
        if not 0.0 < lam <= 1.0:
            raise ValueError(f"power generator needs lam in (0, 1], got {lam}")
        self.lam = lam
        self.spec = "phi0" if lam == 1.0 else f"power:{lam:g}"

    def value(self, r):
        r = np.asarray(r, dtype=np.float64)
        return self.lam * np.log(r).mean(axis=-1)

    def grad(self, r):
        r = np.asarray(r, dtype=np.float64)
        return self.lam / (r.shape[-1] * r)

    def hess(self, r):
        r = np.asarray(r, dtype=np.float64)
        n = r.shape[-1]
        d = -self.lam / (n * r * r)
        return d[..., :, None] * np.eye(n)


class AffineGenerator(Generator):
    """``log(b . r)`` for a positive vector ``b``; its transport map is constant."""

    strictly_concave = False

    def __init__(self, b):
        b = np.asarray(b, dtype=np.float64).ravel()
        if b.size < 2 or np.any(~np.isfinite(b)) or np.any(b <= 0):
            raise ValueError("affine generator needs at least two positive coefficients")
        self.b = b
        self.spec = "affine:" + ",".join(f"{x:g}" for x in b)

    def _check(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.shape[-1] != self.b.size:
            raise ValueError(f"affine generator has dimension {self.b.size}, got {r.shape[-1]}")
        return r

    def value(self, r):
        return np.log(self._check(r) @ self.b)

    def grad(self, r):
        r = self._check(r)
        return self.b / (r @ self.b)[..., None]

    def hess(self, r):
        g = self.grad(r)
        return -g[..., :, None] * g[..., None, :]


class DiversityGenerator(Generator):
    """``(1/a) log sum(r ** a)`` for ``a`` in (0, 1): the diversity-weighted portfolio."""

    def __init__(self, a):
        a = float(a)
        if not 0.0 < a < 1.0:
            raise ValueError(f"diversity generator needs exponent in (0, 1), got {a}")
        self.a = a
        self.spec = f"diversity:{a:g}"

    def value(self, r):
        r = np.asarray(r, dtype=np.float64)
        return np.log(np.sum(r**self.a, axis=-1)) / self.a

    def grad(self, r):
        r = np.asarray(r, dtype=np.float64)
        s = np.sum(r**self.a, axis=-1, keepdims=True)
        return r ** (self.a - 1) / s

    def hess(self, r):
        r = np.asarray(r, dtype=np.float64)
        n = r.shape[-1]
        s = np.sum(r**self.a, axis=-1)[..., None, None]
        g = r ** (self.a - 1)
        diag = (self.a - 1) * r ** (self.a - 2)
        return diag[..., :, None] * np.eye(n) / s - self.a * g[..., :, None] * g[..., None, :] / s**2


class MixtureGenerator(Generator):
    """``(1 - t) * first + t * second``."""

    def __init__(self, t, first, second):
        t = float(t)
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"mixture weight must lie in [0, 1], got {t}")
        self.t, self.first, self.second = t, first, second
        self.strictly_concave = (first.strictly_concave and t < 1) or (second.strictly_concave and t > 0)
        self.spec = f"mix:{t:g},{first.spec},{second.spec}"

    def value(self, r):
        return (1 - self.t) * self.first.value(r) + self.t * self.second.value(r)

    def grad(self, r):
        return (1 - self.t) * self.first.grad(r) + self.t * self.second.grad(r)

    def hess(self, r):
        return (1 - self.t) * self.first.hess(r) + self.t * self.second.hess(r)


def phi0():
    return PowerGenerator(1.0)


_NAMES = ("phi0", "power:", "affine:", "diversity:", "mix:")


def _split_mix(body):
    # "t,gA,gB" where gA may itself contain commas; split at the comma that
    # starts the second generator name.
    t_str, _, rest = body.partition(",")
    cuts = [i for i, ch in enumerate(rest) if ch == "," and rest[i + 1 :].startswith(_NAMES)]
    for i in cuts:
        try:
            return t_str, parse_generator(rest[:i]), parse_generator(rest[i + 1 :])
        except ValueError:
            continue
    raise ValueError(f"cannot parse mixture {body!r}")


def parse_generator(spec):
    """Build a generator from its name string, e.g. ``"power:0.5"``."""
    spec = spec.strip()
    kind, _, body = spec.partition(":")
    try:
        if kind == "phi0" and not body:
            return phi0()
        if kind == "power":
            return PowerGenerator(float(body))
        if kind == "affine":
            return AffineGenerator([float(x) for x in body.split(",")])
        if kind == "diversity":
            return DiversityGenerator(float(body))
        if kind == "mix":
            t_str, a, b = _split_mix(body)
            return MixtureGenerator(float(t_str), a, b)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"invalid generator {spec!r}: {exc}") from None
    raise ValueError(f"unknown generator {spec!r}")


def builtin_generators(n):
    """Representative instance of every generator family in dimension ``n``."""
    b = np.arange(1, n + 1, dtype=np.float64)
    gens = [
        phi0(),
        PowerGenerator(0.5),
        AffineGenerator(b),
        DiversityGenerator(0.5),
        MixtureGenerator(0.5, PowerGenerator(0.5), DiversityGenerator(0.5)),
    ]
    return {g.spec: g for g in gens}


# --------------------------------------------------------------------------
# maps
# --------------------------------------------------------------------------


def _weights(g, r):
    r = np.asarray(r, dtype=np.float64)
    grad = g.grad(r)
    ratio = 1.0 + grad - np.sum(grad * r, axis=-1, keepdims=True)
    return r, ratio


def portfolio_map(g, r):
    """Portfolio weights ``r_i (1 + grad . (e_i - r))``; tiny negatives clamped."""
    r, ratio = _weights(g, r)
    pi = r * ratio
    if np.any(pi < -WEIGHT_CLAMP):
        raise ValueError("portfolio weights are negative; generator is not exponentially concave here")
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum(axis=-1, keepdims=True)


def transport_map(g, p):
    """Monge map ``p ⊙ pi(p^-1)``."""
    return odot(p, portfolio_map(g, invert(p)))


def transport_map_ratio(g, p):
    """Same map through the weight ratios ``pi_i(r) / r_i`` at ``r = p^-1``."""
    _, ratio = _weights(g, invert(p))
    return ratio / ratio.sum(axis=-1, keepdims=True)


def dual_source_map(g, q):
    """``q ⊙ pi(q)^-1``: the source point sent to ``q`` by the dual construction.

    When ``pi`` is generated on target points, pairs ``(dual_source_map(q), q)``
    form an optimal coupling.
    """
    return odot(q, invert(portfolio_map(g, q)))


def l_divergence(g, r, r_prime):
    """``log(1 + grad(r') . (r - r')) - (phi(r) - phi(r'))``."""
    r = np.asarray(r, dtype=np.float64)
    r_prime = np.asarray(r_prime, dtype=np.float64)
    arg = 1.0 + np.sum(g.grad(r_prime) * (r - r_prime), axis=-1)
    if np.any(arg <= 0):
        raise ValueError("L-divergence argument is not positive")
    d = np.log(arg) - (g.value(r) - g.value(r_prime))
    return np.maximum(d, 0.0)


def l_divergence_portfolio(g, r, r_prime):
    """Same divergence written with portfolio weights at ``r'``."""
    r = np.asarray(r, dtype=np.float64)
    r_prime = np.asarray(r_prime, dtype=np.float64)
    pi = portfolio_map(g, r_prime)
    d = np.log(np.sum(pi * r / r_prime, axis=-1)) - (g.value(r) - g.value(r_prime))
    return np.maximum(d, 0.0)


def l_matrix(g, r):
    """``-hess - grad grad^T``; positive semidefinite on tangent vectors."""
    gr = g.grad(r)
    return -g.hess(r) - gr[..., :, None] * gr[..., None, :]


def _chart(n, drop):
    # columns map a reduced tangent coordinate to the full tangent vector
    keep = [i for i in range(n) if i != drop]
    P = np.zeros((n, n - 1))
    P[keep, np.arange(n - 1)] = 1.0
    P[drop, :] = -1.0
    return P


def chart_matrix(g, r, drop=None):
    """``L`` restricted to the chart that drops coordinate ``drop`` (default last)."""
    r = np.asarray(r, dtype=np.float64)
    n = r.shape[-1]
    P = _chart(n, n - 1 if drop is None else drop)
    return P.T @ l_matrix(g, r) @ P


def chart_gradient(g, r, drop=None):
    r = np.asarray(r, dtype=np.float64)
    n = r.shape[-1]
    return g.grad(r) @ _chart(n, n - 1 if drop is None else drop)


def mcm_check(g, cycle):
    """Log of the cyclic product ``prod_s sum_i pi_i(r_s) r_i(s+1) / r_i(s)``.

    Nonnegative for every closed cycle when ``g`` is exponentially concave.
    """
    r = np.asarray(cycle, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] == 0:
        raise ValueError("cycle must be a non-empty list of points")
    pi = portfolio_map(g, r)
    nxt = np.roll(r, -1, axis=0)
    return float(np.sum(np.log(np.sum(pi * nxt / r, axis=1))))


# --------------------------------------------------------------------------
# regularity constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityReport:
    alpha: float
    alpha_prime: float
    c1: float
    c2: float
    c3: float
    m: float
    alpha_bound: float
    alpha_bound_uncorrected: float
    diameter: float
    eps: float
    pairs: int
    degenerate: bool


def _tangent_basis(n):
    # orthonormal basis of {v : sum v = 0}
    q, _ = np.linalg.qr(_chart(n, n - 1))
    return q


def _truncated_sobol(n, eps, count, seed):
    # Sobol points on the unit cube pushed to the truncated simplex via the
    # sorted-uniform-spacings map; low discrepancy is kept, exactness is not needed
    u = qmc.Sobol(d=n - 1, scramble=True, seed=seed).random(count)
    gaps = np.diff(np.concatenate([np.zeros((count, 1)), np.sort(u, axis=1), np.ones((count, 1))], axis=1))
    gaps = np.maximum(gaps, 1e-15)
    gaps /= gaps.sum(axis=1, keepdims=True)
    return eps + (1 - n * eps) * gaps


def estimate_regularity(g, n, eps=0.02, base_points=512, pairs_per_point=8, seed=0, degenerate_tol=1e-8):
    """Empirical constants for ``alpha |q'-q|^2 <= D[q':q] <= alpha' |q'-q|^2``.

    Base points are a scrambled Sobol design on ``{q_i >= eps}``; partners lie
    along random tangent directions at log-uniform distances in
    ``[1e-3, diameter]`` and are kept only inside the truncated set.  The
    sufficient-condition constants are estimated on the same base points and
    combined into ``alpha_bound = C2 / (2 (M + C3 * diameter))``; the
    uncorrected ``C2 / (M + C3)`` is reported alongside.
    """
    if not 0.0 < eps < 1.0 / n:
        raise ValueError("eps must lie in (0, 1/n)")
    rng = np.random.default_rng(seed)
    base_points = 1 << int(np.ceil(np.log2(max(base_points, 2))))
    q = _truncated_sobol(n, eps, base_points, seed)
    diam = np.sqrt(2.0) * (1 - n * eps)

    basis = _tangent_basis(n)
    v = rng.standard_normal((base_points, pairs_per_point, n - 1)) @ basis.T
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    dist = np.exp(rng.uniform(np.log(1e-3), np.log(diam), size=(base_points, pairs_per_point)))
    qb = np.broadcast_to(q[:, None, :], v.shape)
    qp = qb + dist[..., None] * v
    inside = np.all(qp >= eps, axis=-1)
    qb, qp, dist = qb[inside], qp[inside], dist[inside]
    ratio = l_divergence(g, qp, qb) / dist**2
    alpha, alpha_prime = float(ratio.min()), float(ratio.max())

    # constants on tangent directions; Phi = exp(phi)
    H = basis.T @ g.hess(q) @ basis
    Lt = basis.T @ l_matrix(g, q) @ basis
    Phi = np.exp(g.value(q))
    grad_Phi = Phi[:, None] * g.grad(q)
    c1 = float(np.linalg.eigvalsh(-H)[:, -1].max())
    c2 = float((Phi * np.linalg.eigvalsh(Lt)[:, 0]).min())
    c3 = float(np.linalg.norm(grad_Phi @ basis, axis=1).max())
    m = float(Phi.max())
    c2 = max(c2, 0.0)
    alpha_bound_value = c2 / (2.0 * (m + c3 * diam))
    alpha_bound_raw = c2 / (m + c3)
    degenerate = alpha <= degenerate_tol
    return RegularityReport(
        alpha=alpha,
        alpha_prime=alpha_prime,
        c1=c1,
        c2=c2,
        c3=c3,
        m=m,
        alpha_bound=alpha_bound_value,
        alpha_bound_uncorrected=alpha_bound_raw,
        diameter=float(diam),
        eps=float(eps),
        pairs=int(ratio.size),
        degenerate=bool(degenerate),
    )

