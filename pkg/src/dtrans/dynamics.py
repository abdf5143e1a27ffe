"""Paths on the simplex driven by monotone functions and gamma subordinators.

A monotone path ``f = (f_1..f_n)`` on ``[0, 1]`` with ``f(1) = pi`` moves a
particle from ``p`` to ``p ⊙ pi`` through ``q(t) = p ⊙ ((1-t) e + f(t))``
(``e`` the barycenter).  Paths are sampled on a uniform grid of ``G + 1``
times; the action of a path is the relative entropy of Lebesgue measure with
respect to the measure on ``(0, 1]`` whose distribution function stacks the
``f_i`` on the cells ``((i-1)/n, i/n]``.
"""

from dataclasses import dataclass

import numpy as np

from .portfolio import transport_map
from .rng import map_replicas, stream
from .simplex import barycenter, invert, odot, relative_entropy, sample_uniform

__all__ = [
    "MonotonePath",
    "BridgePath",
    "time_grid",
    "project_measure",
    "lagrangian_action",
    "path_from_weights",
    "optimal_path",
    "sample_gamma_subordinator",
    "sample_dirichlet_process",
    "sample_conditional_bridge",
    "mean_field_bridge",
    "bridge_concentration_experiment",
    "piecewise_uniform_cells",
    "cell_entropy",
    "entropy_restriction_check",
]

DEFAULT_GRID = 256


def time_grid(G=DEFAULT_GRID):
    return np.linspace(0.0, 1.0, G + 1)


@dataclass(frozen=True, eq=False)
class MonotonePath:
    """Grid samples ``f[k, i] = f_i(t_k)`` of a strictly increasing path."""

    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 2 or f.shape[1] < 2:
            raise ValueError("path must be a (G+1, n) array with G >= 1, n >= 2")
        if np.any(np.abs(f[0]) > 1e-15):
            raise ValueError("path must start at 0")
        if np.any(np.diff(f, axis=0) <= 0):
            raise ValueError("path increments must be strictly positive")
        if abs(f[-1].sum() - 1.0) > 1e-12:
            raise ValueError("path must end on the simplex")
        object.__setattr__(self, "f", f)

    @property
    def t(self):
        return np.linspace(0.0, 1.0, self.f.shape[0])

    @property
    def endpoint(self):
        return self.f[-1]


@dataclass(frozen=True, eq=False)
class BridgePath:
    """Particle paths on a time grid; leading axes index particles.

    ``f`` holds the monotone path, ``weights`` the normalized portfolio path
    ``(1-t) e + f(t)`` and ``q`` the simplex trajectory ``p ⊙ weights``.
    """

    t: np.ndarray
    p: np.ndarray
    pi: np.ndarray
    f: np.ndarray
    weights: np.ndarray
    q: np.ndarray
    lam: float = float("inf")


def project_measure(cdf, n, atol=1e-12):
    """Masses of the cells ``((i-1)/n, i/n]`` under a measure on ``(0, 1]``.

    ``cdf`` is a callable distribution function or a pair ``(x, F(x))`` of grid
    values (linearly interpolated).  Returns ``(weights, interior)`` where
    ``interior`` is False when some cell is empty.
    """
    edges = np.linspace(0.0, 1.0, n + 1)
    if callable(cdf):
        F = np.asarray([cdf(x) for x in edges], dtype=np.float64)
    else:
        x, Fx = (np.asarray(a, dtype=np.float64) for a in cdf)
        F = np.interp(edges, x, Fx)
    if F[0] > atol:
        raise ValueError("measure has mass at 0")
    if abs(F[-1] - 1.0) > atol:
        raise ValueError("distribution function must reach 1 at t = 1")
    w = np.diff(F)
    if np.any(w < -atol):
        raise ValueError("distribution function is decreasing")
    w = np.maximum(w, 0.0)
    return w, bool(np.all(w > 0))


def lagrangian_action(f, atol=1e-12):
    """Action of grid-sampled monotone paths (exact for piecewise linear ``f``).

    ``-log n - (1/n) sum_i sum_k dt * log(df_ik / dt)``; any nonpositive
    increment gives ``+inf``.  Broadcasts over leading axes of ``f``.
    """
    f = np.asarray(f.f if isinstance(f, MonotonePath) else f, dtype=np.float64)
    G = f.shape[-2] - 1
    n = f.shape[-1]
    if np.any(np.abs(f[..., -1, :].sum(axis=-1) - 1.0) > atol):
        raise ValueError("path must end on the simplex")
    df = np.diff(f, axis=-2)
    dt = 1.0 / G
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.sum(np.log(df / dt), axis=(-2, -1)) * dt
    out = -np.log(n) - inner / n
    return np.where(np.all(df > 0, axis=(-2, -1)), out, np.inf)


def path_from_weights(p, f, t):
    """Portfolio path and trajectory for monotone ``f`` (shape ``(..., G+1, n)``)."""
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[-1]
    raw = (1.0 - t)[:, None] / n + f
    w = raw / raw.sum(axis=-1, keepdims=True)
    return w, odot(p[..., None, :], w)


def optimal_path(p, q, t=None):
    """Least-action path: ``f(t) = t * (q ⊙ p^-1)``."""
    t = time_grid() if t is None else np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    pi = odot(q, invert(p))
    f = t[:, None] * pi[..., None, :]
    w, traj = path_from_weights(p, f, t)
    traj[..., 0, :] = p
    traj[..., -1, :] = q
    return BridgePath(t=t, p=p, pi=pi, f=f, weights=w, q=traj)


def sample_gamma_subordinator(lam, t, rng, size=()):
    """``gamma(t * lam)`` on the grid ``t`` for a standard gamma subordinator."""
    t = np.asarray(t, dtype=np.float64)
    size = (size,) if np.isscalar(size) else tuple(size)
    shape = lam * np.diff(t)
    inc = rng.standard_gamma(np.broadcast_to(shape, size + shape.shape))
    out = np.zeros(size + t.shape)
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    return out


def sample_dirichlet_process(lam, t, rng, size=()):
    """Distribution function ``gamma(t lam) / gamma(lam)`` on the grid."""
    g = sample_gamma_subordinator(lam, t, rng, size)
    d = g / g[..., -1:]
    d[..., -1] = 1.0
    return d


def sample_conditional_bridge(p, q, lam, t, rng, size=()):
    """Bridges from ``p`` to ``q``: ``f_i(t) = D_i(t) * pi_i`` with independent ``D_i``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n = p.shape[-1]
    t = np.asarray(t, dtype=np.float64)
    pi = odot(q, invert(p))
    size = (size,) if np.isscalar(size) else tuple(size)
    lead = np.broadcast_shapes(size, p.shape[:-1])
    D = sample_dirichlet_process(lam, t, rng, lead + (n,))
    f = np.swapaxes(D, -1, -2) * pi[..., None, :]
    w, traj = path_from_weights(p, f, t)
    traj[..., 0, :] = p
    traj[..., -1, :] = q
    return BridgePath(t=t, p=p, pi=pi, f=f, weights=w, q=traj, lam=float(lam))


def mean_field_bridge(p, q, lam, t):
    """Bridge with every gamma increment replaced by its mean."""
    t = np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    pi = odot(q, invert(p))
    mean_gamma = lam * t
    f = (mean_gamma / mean_gamma[-1])[:, None] * pi[..., None, :]
    w, traj = path_from_weights(p, f, t)
    traj[..., 0, :] = p
    traj[..., -1, :] = q
    return BridgePath(t=t, p=p, pi=pi, f=f, weights=w, q=traj, lam=float(lam))


def _bridge_replica(g, n, lam, G, particles, seed, replica):
    rng = stream(seed, "bridge-endpoints", replica)
    p = sample_uniform(n, particles, rng, 0.02)
    q = transport_map(g, p)
    t = time_grid(G)
    brng = stream(seed, "bridge-paths", replica, int(round(np.log10(lam) * 1000)))
    bridge = sample_conditional_bridge(p, q, lam, t, brng)
    target = optimal_path(p, q, t)
    dev = np.abs(bridge.f / bridge.pi[:, None, :] - t[None, :, None]).max(axis=(1, 2))
    dist = np.linalg.norm(bridge.q - target.q, axis=-1).max(axis=1)
    return {"lambda": float(lam), "seed": seed, "replica": replica, "S": float(dev.mean()), "path_distance": float(dist.mean())}


def bridge_concentration_experiment(g, n, lams, G=DEFAULT_GRID, seeds=20, seed=0, particles=64, threads=None):
    """Sup-deviation of conditional bridges from their deterministic limit.

    Pairs ``(p, T(p))`` come from the Monge map of ``g`` with ``p`` uniform on
    ``{p_i >= 0.02}``.  For each ``lam`` the statistic ``S`` is the mean over
    particles of ``sup_t max_i |f_i(t)/pi_i - t|``; ``path_distance`` is the
    mean sup-distance to the least-action trajectory.
    """
    tasks = [(lam, r) for lam in lams for r in range(seeds)]
    records = map_replicas(lambda a: _bridge_replica(g, n, a[0], G, particles, seed, a[1]), tasks, threads=threads)
    summary = []
    for lam in lams:
        rows = [r for r in records if r["lambda"] == float(lam)]
        summary.append(
            {
                "lambda": float(lam),
                "median_S": float(np.median([r["S"] for r in rows])),
                "mean_path_distance": float(np.mean([r["path_distance"] for r in rows])),
            }
        )
    return records, summary


# --------------------------------------------------------------------------
# entropy on (0, 1] restricted to the n cells
# --------------------------------------------------------------------------


def piecewise_uniform_cells(pi, G):
    """Cell masses of the measure spreading ``pi_i`` uniformly over cell ``i``."""
    pi = np.asarray(pi, dtype=np.float64)
    n = pi.shape[-1]
    if G % n:
        raise ValueError("grid size must be a multiple of n")
    return np.repeat(pi / (G // n), G // n, axis=-1)


def cell_entropy(masses):
    """Relative entropy of Lebesgue w.r.t. a measure given by ``G`` equal-cell masses."""
    m = np.asarray(masses, dtype=np.float64)
    G = m.shape[-1]
    with np.errstate(divide="ignore"):
        return np.sum((np.log(1.0 / G) - np.log(m)) / G, axis=-1)


@dataclass(frozen=True)
class RestrictionReport:
    bound: float
    entropies: np.ndarray
    holds: bool
    gap_min: float


def entropy_restriction_check(pi, candidates, atol=1e-9):
    """Compare ``H(Leb | mu)`` with ``H(e | pi)`` for cell-mass candidates ``mu``.

    Each candidate row holds ``G`` masses on equal cells of ``(0, 1]`` and must
    put mass ``pi_i`` on ``((i-1)/n, i/n]``.
    """
    pi = np.asarray(pi, dtype=np.float64)
    n = pi.shape[-1]
    cand = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    G = cand.shape[-1]
    if G % n:
        raise ValueError("grid size must be a multiple of n")
    blocks = cand.reshape(cand.shape[0], n, G // n).sum(axis=-1)
    if np.abs(blocks - pi).max() > atol:
        raise ValueError("candidate does not match the cell constraint")
    bound = float(relative_entropy(barycenter(n), pi))
    ent = cell_entropy(cand)
    return RestrictionReport(bound=bound, entropies=ent, holds=bool(np.all(ent >= bound - atol)), gap_min=float((ent - bound).min()))
