"""Arithmetic on the open unit simplex.

Points are plain arrays whose last axis holds the coordinates; every function
broadcasts over leading axes.  :class:`SimplexPoint` is a validated,
immutable wrapper for single points and converts to an array transparently.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "SimplexPoint",
    "as_simplex",
    "barycenter",
    "closure_log",
    "odot",
    "invert",
    "power",
    "cost",
    "cost_exp_coords",
    "relative_entropy",
    "mu0_log_density",
    "exp_coords",
    "from_exp_coords",
    "sample_uniform",
    "sample_mu0_truncated",
]

MIN_COORD = 1e-300


def as_simplex(x):
    """Validate and renormalize an array of simplex points (last axis)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] < 2:
        raise ValueError("simplex points need at least two coordinates")
    if not np.all(np.isfinite(x)) or np.any(x <= MIN_COORD):
        raise ValueError("simplex coordinates must be finite and strictly positive")
    return x / x.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    """A strictly positive probability vector, renormalized on construction."""

    coords: np.ndarray

    def __post_init__(self):
        c = as_simplex(self.coords)
        if c.ndim != 1:
            raise ValueError("SimplexPoint holds a single point")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def n(self):
        return self.coords.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"SimplexPoint({np.array2string(self.coords, precision=6)})"


def barycenter(n):
    return np.full(n, 1.0 / n)


def closure_log(logx):
    """Normalize ``exp(logx)`` along the last axis with a max shift."""
    logx = np.asarray(logx, dtype=np.float64)
    z = np.exp(logx - logx.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def _pair(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"dimension mismatch: {p.shape[-1]} vs {q.shape[-1]}")
    return p, q


def odot(p, q):
    """Group product: coordinatewise multiplication then normalization."""
    p, q = _pair(p, q)
    return closure_log(np.log(p) + np.log(q))


def invert(p):
    """Group inverse: normalized reciprocals."""
    return closure_log(-np.log(np.asarray(p, dtype=np.float64)))


def power(lam, p):
    """``p ** lam`` renormalized, computed in log space."""
    return closure_log(lam * np.log(np.asarray(p, dtype=np.float64)))


def cost(p, q):
    """Transport cost ``log mean(q/p) - mean(log(q/p))``; nonnegative."""
    p, q = _pair(p, q)
    d = np.log(q) - np.log(p)
    n = d.shape[-1]
    out = logsumexp(d, axis=-1) - np.log(n) - d.mean(axis=-1)
    return np.maximum(out, 0.0)


def cost_exp_coords(theta, phi):
    """Cost from exponential coordinates ``theta = -log p``, ``phi = -log q``.

    Invariant under adding a constant to either argument.
    """
    theta, phi = _pair(theta, phi)
    d = theta - phi
    m = d.max(axis=-1, keepdims=True)
    out = np.log(np.mean(np.exp(d - m), axis=-1)) + m[..., 0] - d.mean(axis=-1)
    return np.maximum(out, 0.0)


def relative_entropy(p, q):
    """``sum p log(p/q)``."""
    p, q = _pair(p, q)
    return np.maximum(np.sum(p * (np.log(p) - np.log(q)), axis=-1), 0.0)


def mu0_log_density(p):
    """Log-density of the reference measure w.r.t. Lebesgue on the first n-1 coordinates."""
    return -np.sum(np.log(np.asarray(p, dtype=np.float64)), axis=-1)


def exp_coords(p):
    return -np.log(np.asarray(p, dtype=np.float64))


def from_exp_coords(theta):
    return closure_log(-np.asarray(theta, dtype=np.float64))


def sample_uniform(n, size, rng, eps=0.0):
    """Uniform (Lebesgue) samples on ``{p : p_i >= eps}``.

    The truncated simplex is an affine image of the full one, so a flat
    Dirichlet draw scaled by ``1 - n*eps`` and shifted by ``eps`` is exact.
    """
    if not 0.0 <= eps < 1.0 / n:
        raise ValueError("eps must lie in [0, 1/n)")
    x = rng.dirichlet(np.ones(n), size=size)
    if eps > 0:
        x = eps + (1.0 - n * eps) * x
    return x


def sample_mu0_truncated(n, size, rng, eps):
    """Samples from the reference measure restricted to ``{p_i >= eps}``, normalized.

    In log-ratio coordinates ``y_i = log(p_i / p_n)`` the reference measure is
    Lebesgue, so proposals are uniform on a box containing the truncated set
    and rejected outside it.
    """
    if not 0.0 < eps < 1.0 / n:
        raise ValueError("eps must lie in (0, 1/n)")
    lo, hi = np.log(eps), -np.log(eps)
    out = np.empty((0, n))
    while out.shape[0] < size:
        batch = max(64, 2 * (size - out.shape[0]))
        y = rng.uniform(lo, hi, size=(batch, n - 1))
        p = closure_log(np.concatenate([y, np.zeros((batch, 1))], axis=1))
        out = np.concatenate([out, p[np.all(p >= eps, axis=1)]])
    return out[:size]
