"""Gamma/Dirichlet transition densities and the permutation-mixture coupling.

A particle at ``p`` jumps to ``p ⊙ D`` with ``D ~ Dirichlet(alpha)``.  Given
source atoms ``p(1..N)`` and target atoms ``q(1..N)``, conditioning the
particle system on the empirical target yields a mixture over permutations
whose log-weights are ``sum_j A[j, sigma(j)]`` with

    A[j, k] = -lam * log(sum_i q_i(k) / p_i(j)).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from . import kernels
from .ot_solver import DiscreteMeasure, matching_distance, solve_assignment, solve_kantorovich
from .portfolio import dual_source_map, estimate_regularity
from .rng import map_replicas, stream
from .simplex import cost, odot, sample_uniform

__all__ = [
    "GammaKernel",
    "MixtureCoupling",
    "log_density_general",
    "log_density_symmetric",
    "sample_transition",
    "ldp_limit_check",
    "reduced_log_weights",
    "build_mixture_exact",
    "build_mixture_marginal",
    "build_mixture",
    "sinkhorn_pairs",
    "coupling_atoms",
    "mixture_convergence_experiment",
    "EXACT_MAX_N",
    "MARGINAL_MAX_N",
]

EXACT_MAX_N = 10
MARGINAL_MAX_N = 16
TIE_JITTER = 1e-12


@dataclass(frozen=True)
class GammaKernel:
    """Dirichlet jump kernel; ``alphas`` default to ``lam / n`` each."""

    lam: float
    n: int
    alphas: tuple = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.n < 2:
            raise ValueError("dimension must be at least 2")
        if self.alphas is None:
            object.__setattr__(self, "alphas", tuple([self.lam / self.n] * self.n))
        a = np.asarray(self.alphas, dtype=np.float64)
        if a.shape != (self.n,) or np.any(a <= 0):
            raise ValueError("alphas must be n positive numbers")

    @property
    def alpha_array(self):
        return np.asarray(self.alphas, dtype=np.float64)


def log_density_general(kernel, p, q):
    """Log-density of ``q = p ⊙ D``, ``D ~ Dirichlet(alphas)``, w.r.t. Lebesgue on n-1 coordinates."""
    a = kernel.alpha_array
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    d = np.log(q) - np.log(p)
    total = a.sum()
    return (
        gammaln(total)
        - gammaln(a).sum()
        - np.log(q).sum(axis=-1)
        + np.sum(a * d, axis=-1)
        - total * logsumexp(d, axis=-1)
    )


def log_density_symmetric(lam, p, q):
    p = np.asarray(p, dtype=np.float64)
    return log_density_general(GammaKernel(lam=float(lam), n=p.shape[-1]), p, q)


def sample_transition(kernel, p, size, rng):
    """Draws of ``p ⊙ D`` with ``D ~ Dirichlet(alphas)``."""
    D = rng.dirichlet(kernel.alpha_array, size=size)
    return odot(np.asarray(p, dtype=np.float64), D)


def ldp_limit_check(lams, p, q):
    """Table of ``-(1/lam) log f_lam(q|p)`` against the cost ``c(p, q)``."""
    lams = np.asarray(lams, dtype=np.float64)
    values = np.array([-log_density_symmetric(lam, p, q) / lam for lam in lams])
    c = float(cost(p, q))
    return {"lambda": lams, "value": values, "cost": c, "deviation": np.abs(values - c)}


# --------------------------------------------------------------------------
# mixture coupling
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixtureCoupling:
    """Permutation mixture between equal-size atom lists.

    ``pairs[i, j]`` is the mass on ``(source[i], target[j])``; rows and columns
    sum to ``1/N``.  In exact mode ``log_weights`` holds the normalized
    log-weight of every permutation in lexicographic order.
    """

    source: np.ndarray
    target: np.ndarray
    lam: float
    mode: str
    pairs: np.ndarray
    log_weights: np.ndarray = field(default=None, repr=False)
    log_normalizer: float = float("nan")
    ties_perturbed: bool = False

    @property
    def N(self):
        return self.source.shape[0]


def _break_ties(x, rng_seed=0):
    # exact duplicate atoms make the permutation law ill-posed; nudge them
    x = np.array(x, dtype=np.float64)
    _, first, counts = np.unique(x, axis=0, return_index=True, return_counts=True)
    if np.all(counts == 1):
        return x, False
    rng = np.random.default_rng(rng_seed)
    seen = set()
    for i in range(x.shape[0]):
        key = x[i].tobytes()
        if key in seen:
            x[i] = x[i] * np.exp(TIE_JITTER * rng.standard_normal(x.shape[1]))
            x[i] /= x[i].sum()
        seen.add(key)
    return x, True


def reduced_log_weights(source, target, lam):
    """``A[j, k] = -lam * log(sum_i q_i(k) / p_i(j))``."""
    p = np.asarray(source, dtype=np.float64)
    q = np.asarray(target, dtype=np.float64)
    return -lam * logsumexp(np.log(q)[None, :, :] - np.log(p)[:, None, :], axis=-1)


def _prepare(source, target, lam):
    p, tie_p = _break_ties(source)
    q, tie_q = _break_ties(target, 1)
    if p.shape != q.shape:
        raise ValueError("source and target must have the same number of atoms and dimension")
    if not lam >= 0:
        raise ValueError("lambda must be nonnegative")
    return p, q, tie_p or tie_q


def build_mixture_exact(source, target, lam):
    """Enumerate all ``N!`` permutations (``N <= 10``)."""
    p, q, ties = _prepare(source, target, lam)
    N = p.shape[0]
    if N > EXACT_MAX_N:
        raise ValueError(f"exact mode supports N <= {EXACT_MAX_N}, got {N}")
    A = reduced_log_weights(p, q, lam)
    scores = kernels.permutation_scores(A)
    log_norm = float(logsumexp(scores))
    pairs = kernels.permutation_pair_marginals(A, log_norm) / N
    return MixtureCoupling(
        source=p,
        target=q,
        lam=float(lam),
        mode="exact",
        pairs=pairs,
        log_weights=scores - log_norm,
        log_normalizer=log_norm,
        ties_perturbed=ties,
    )


def _lse(x, axis):
    m = x.max(axis=axis, keepdims=True)
    return (np.log(np.exp(x - m).sum(axis=axis, keepdims=True)) + m).squeeze(axis)


def _sinkhorn_log(A, iters=5000, tol=1e-11):
    # log-domain scaling of exp(A) towards a doubly stochastic matrix
    f = np.zeros(A.shape[0])
    g = np.zeros(A.shape[1])
    for _ in range(iters):
        f = -_lse(A + g[None, :], 1)
        g = -_lse(A + f[:, None], 0)
        if np.abs(_lse(A + f[:, None] + g[None, :], 1)).max() < tol:
            break
    return f, g


def build_mixture_marginal(source, target, lam):
    """Pair marginals from permanents of all minors (``N <= 16``).

    The weight matrix is first scaled close to doubly stochastic, which keeps
    the permanent away from underflow without changing the pair marginals.
    """
    p, q, ties = _prepare(source, target, lam)
    N = p.shape[0]
    if N > MARGINAL_MAX_N:
        raise ValueError(f"marginal mode supports N <= {MARGINAL_MAX_N}, got {N}")
    A = reduced_log_weights(p, q, lam)
    # any diagonal scaling leaves the pair marginals unchanged, so a rough
    # balance is enough to keep the permanent in range
    f, g = _sinkhorn_log(A, iters=200, tol=1e-3)
    B = np.exp(A + f[:, None] + g[None, :])
    perm, minors = kernels.permanent_minors(B)
    if not perm > 0 or not np.isfinite(perm):
        raise FloatingPointError("permanent underflow")
    P = B * minors / perm
    P = np.maximum(P, 0.0)
    log_norm = float(np.log(perm) - f.sum() - g.sum())
    return MixtureCoupling(
        source=p, target=q, lam=float(lam), mode="marginal", pairs=P / N, log_normalizer=log_norm, ties_perturbed=ties
    )


def build_mixture(source, target, lam, mode="auto"):
    N = np.asarray(source).shape[0]
    if mode == "auto":
        mode = "exact" if N <= 8 else "marginal"
    if mode == "exact":
        return build_mixture_exact(source, target, lam)
    if mode == "marginal":
        return build_mixture_marginal(source, target, lam)
    raise ValueError(f"unknown mixture mode {mode!r}")


def sinkhorn_pairs(source, target, lam):
    """Iterative proportional fitting of ``exp(A)`` to uniform marginals (diagnostic only)."""
    A = reduced_log_weights(source, target, lam)
    f, g = _sinkhorn_log(A)
    return np.exp(A + f[:, None] + g[None, :]) / A.shape[0]


def coupling_atoms(source, target, pairs):
    """Product-space measure ``sum_ij pairs[i, j] delta_(p_i, q_j)``."""
    N, K = pairs.shape
    atoms = np.concatenate(
        [np.repeat(source, K, axis=0), np.tile(target, (N, 1))],
        axis=1,
    )
    w = pairs.ravel()
    return DiscreteMeasure(atoms, w / w.sum())


# --------------------------------------------------------------------------
# convergence experiment
# --------------------------------------------------------------------------


def _w2_sq(measure, reference):
    return solve_kantorovich(measure, reference, "sq_euclidean").value


def _mixture_replica(g, n, N, lam, eps, seed, replica, mode):
    rng = stream(seed, "mixture-convergence", N, replica)
    q_true = sample_uniform(n, N, rng, eps)
    p = dual_source_map(g, q_true)
    q = sample_uniform(n, N, rng, eps)
    mix = build_mixture(p, q, lam, mode)
    reference = DiscreteMeasure(np.concatenate([p, q_true], axis=1))
    w2 = _w2_sq(coupling_atoms(p, q, mix.pairs), reference)
    base = _w2_sq(coupling_atoms(p, q, np.full((N, N), 1.0 / N**2)), reference)
    sink = _w2_sq(coupling_atoms(p, q, sinkhorn_pairs(p, q, lam)), reference)
    # most likely single matching
    perm = solve_assignment(-reduced_log_weights(p, q, lam)).permutation
    hard = np.zeros((N, N))
    hard[np.arange(N), perm] = 1.0 / N
    w2_hard = _w2_sq(coupling_atoms(p, q, hard), reference)
    return {
        "n": n,
        "N": N,
        "lambda": lam,
        "seed": seed,
        "replica": replica,
        "mode": mix.mode,
        "w2_sq": w2,
        "w2_sq_baseline": base,
        "w2_sq_sinkhorn": sink,
        "w2_sq_argmax": w2_hard,
        "w_n": matching_distance(q, q_true),
        "ties_perturbed": mix.ties_perturbed,
    }


def mixture_convergence_experiment(g, n, N_grid, seeds=20, seed=0, eps=0.02, lam="auto", alpha=None, mode="auto", threads=None):
    """Mixture coupling against the true optimal coupling for growing ``N``.

    Targets are uniform on ``{q_i >= eps}``; sources are generated through the
    dual construction so that ``(source_j, target_j)`` is an exact sample of
    the optimal coupling.  ``lam="auto"`` uses ``(4/alpha) N^(2/n)`` with
    ``alpha`` estimated on the same truncated simplex.

    Returns ``(records, summary)`` where ``summary`` holds per-``N`` medians.
    """
    if alpha is None:
        rep = estimate_regularity(g, n, eps=eps, seed=seed)
        if rep.degenerate:
            raise FloatingPointError("generator has alpha = 0; lambda_N is undefined")
        alpha = rep.alpha
    if not alpha > 0:
        raise FloatingPointError("alpha must be positive")
    tasks = []
    for N in N_grid:
        if N > MARGINAL_MAX_N:
            raise ValueError(f"N = {N} exceeds the marginal-mode cap {MARGINAL_MAX_N}")
        lam_N = 4.0 / alpha * N ** (2.0 / n) if lam == "auto" else float(lam)
        tasks.extend((N, lam_N, r) for r in range(seeds))
    records = map_replicas(
        lambda t: _mixture_replica(g, n, t[0], t[1], eps, seed, t[2], mode), tasks, threads=threads
    )
    summary = []
    for N in N_grid:
        rows = [r for r in records if r["N"] == N]
        summary.append(
            {
                "N": N,
                "lambda": rows[0]["lambda"],
                "median_w2_sq": float(np.median([r["w2_sq"] for r in rows])),
                "median_w2_sq_baseline": float(np.median([r["w2_sq_baseline"] for r in rows])),
                "median_w2_sq_sinkhorn": float(np.median([r["w2_sq_sinkhorn"] for r in rows])),
                "median_w_n": float(np.median([r["w_n"] for r in rows])),
            }
        )
    return records, {"alpha": float(alpha), "eps": eps, "rows": summary}

