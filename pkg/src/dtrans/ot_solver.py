"""Exact discrete optimal transport.

Equal-weight square problems go through a shortest-augmenting-path Hungarian
solver; weighted problems through a network simplex on the bipartite graph
(both in :mod:`dtrans.kernels`).  Every solution is returned with dual
potentials and checked by complementary slackness.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from . import kernels
from .simplex import cost as dirichlet_cost

__all__ = [
    "DiscreteMeasure",
    "Coupling",
    "Assignment",
    "MonotonicityReport",
    "cost_matrix",
    "solve_assignment",
    "solve_kantorovich",
    "w2_distance",
    "matching_distance",
    "certify_c_monotone",
]

COST_KINDS = ("dirichlet", "sq_euclidean")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms.  Atoms are rows of ``atoms``; weights default to uniform."""

    atoms: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=np.float64))
        if atoms.shape[0] < 1:
            raise ValueError("a measure needs at least one atom")
        if self.weights is None:
            w = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
        else:
            w = np.asarray(self.weights, dtype=np.float64).ravel()
        if w.shape[0] != atoms.shape[0]:
            raise ValueError("atoms and weights differ in length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.atoms.shape[0]


@dataclass(frozen=True, eq=False)
class Coupling:
    mass: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure
    value: float = float("nan")
    cost_kind: str = "dirichlet"
    duals: tuple = field(default=None, repr=False)

    def triples(self, threshold=0.0):
        """``(i, j, mass)`` for every entry above ``threshold``."""
        i, j = np.nonzero(self.mass > threshold)
        return [(int(a), int(b), float(self.mass[a, b])) for a, b in zip(i, j)]

    def support(self, threshold=1e-12):
        i, j = np.nonzero(self.mass > threshold)
        return i, j


@dataclass(frozen=True)
class Assignment:
    permutation: np.ndarray
    value: float


def cost_matrix(source, target, cost_kind="dirichlet"):
    x = source.atoms if isinstance(source, DiscreteMeasure) else np.atleast_2d(source)
    y = target.atoms if isinstance(target, DiscreteMeasure) else np.atleast_2d(target)
    if cost_kind == "dirichlet":
        return dirichlet_cost(x[:, None, :], y[None, :, :])
    if cost_kind == "sq_euclidean":
        diff = x[:, None, :] - y[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    raise ValueError(f"unknown cost kind {cost_kind!r}; expected one of {COST_KINDS}")


def _lexicographic_refine(C, col, u, v):
    # Every optimal matching lives on the tight edges of an optimal dual, and
    # every perfect matching on them is optimal; walk rows in order and take
    # the smallest tight column that still admits a perfect matching.
    n = C.shape[0]
    tol = 1e-9 * max(1.0, float(np.abs(C).max()))
    tight = (C - u[:, None] - v[None, :]) <= tol
    col = col.copy()
    free_rows = np.ones(n, dtype=bool)
    free_cols = np.ones(n, dtype=bool)
    for i in range(n):
        free_rows[i] = False
        for j in np.flatnonzero(tight[i] & free_cols):
            if j >= col[i]:
                break
            free_cols[j] = False
            sub = tight[np.ix_(free_rows, free_cols)]
            match = maximum_bipartite_matching(csr_matrix(sub.astype(np.int8)), perm_type="column")
            if np.all(match >= 0):
                rows_left = np.flatnonzero(free_rows)
                cols_left = np.flatnonzero(free_cols)
                col[i] = j
                col[rows_left] = cols_left[match]
                break
            free_cols[j] = True
        free_cols[col[i]] = False
    return col


def solve_assignment(cost):
    """Minimum-cost permutation, ties broken towards the lexicographically smallest."""
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("assignment needs a square cost matrix")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    col, u, v = kernels.assignment_duals(C)
    col = _lexicographic_refine(C, np.asarray(col, dtype=np.intp), u, v)
    value = float(C[np.arange(C.shape[0]), col].sum())
    return Assignment(permutation=col, value=value)


def solve_kantorovich(source, target, cost_kind="dirichlet", cost=None):
    """Optimal coupling between two discrete measures.

    Solved exactly by the network simplex method on the bipartite graph, then
    certified: marginals to 1e-10 and complementary slackness of the returned
    potentials to 1e-9 (relative to the largest cost).  A failed certificate
    raises ``RuntimeError``.
    """
    C = cost_matrix(source, target, cost_kind) if cost is None else np.asarray(cost, dtype=np.float64)
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    a, b = source.weights, target.weights
    x, u, v, _ = kernels.transport_simplex(C, a, b)
    if np.abs(x.sum(axis=1) - a).max() > 1e-10 or np.abs(x.sum(axis=0) - b).max() > 1e-10:
        raise RuntimeError("coupling marginals violated")
    scale = max(1.0, float(np.abs(C).max()))
    reduced = C - u[:, None] - v[None, :]
    support = x > 1e-12
    if reduced.min() < -1e-9 * scale or np.abs(reduced[support]).max(initial=0.0) > 1e-9 * scale:
        raise RuntimeError("complementary slackness check failed")
    value = float(np.sum(x * C))
    return Coupling(mass=x, source=source, target=target, value=value, cost_kind=cost_kind, duals=(u, v))


def w2_distance(a, b):
    """Wasserstein-2 distance between discrete measures in Euclidean space."""
    return float(np.sqrt(max(solve_kantorovich(a, b, "sq_euclidean").value, 0.0)))


def matching_distance(x, y):
    """Mean squared distance of the best matching between equal-size point sets."""
    C = cost_matrix(np.atleast_2d(x), np.atleast_2d(y), "sq_euclidean")
    return solve_assignment(C).value / C.shape[0]


@dataclass(frozen=True)
class MonotonicityReport:
    min_value: float
    worst_cycle: tuple
    cycles_checked: int
    support_size: int
    certified: bool


def certify_c_monotone(coupling, cycle_budget=10_000, rng=None, max_length=6, tol=1e-9):
    """Search support cycles for a violation of c-cyclical monotonicity.

    For a cycle of support pairs ``(x_s, y_s)`` the statistic is
    ``sum_s c(x_{s+1}, y_s) - c(x_s, y_s)``; for the Dirichlet cost this is the
    log of the multiplicative cyclic product.  All 2-cycles are checked, then
    ``cycle_budget`` random cycles of length 3 to ``max_length``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    i, j = coupling.support()
    x = coupling.source.atoms[i]
    y = coupling.target.atoms[j]
    C = cost_matrix(x, y, coupling.cost_kind)
    k = len(i)
    diag = np.diag(C)
    # 2-cycles: C[b, a] + C[a, b] - C[a, a] - C[b, b]
    two = C + C.T - diag[:, None] - diag[None, :]
    np.fill_diagonal(two, np.inf)
    best = float(two.min()) if k > 1 else 0.0
    worst = tuple(int(s) for s in np.unravel_index(np.argmin(two), two.shape)) if k > 1 else (0,)
    checked = k * (k - 1) // 2
    if k >= 3 and max_length >= 3:
        lengths = rng.integers(3, min(max_length, k) + 1, size=cycle_budget)
        for length in np.unique(lengths):
            count = int(np.sum(lengths == length))
            idx = np.argsort(rng.random((count, k)), axis=1)[:, :length]
            nxt = np.roll(idx, -1, axis=1)
            vals = C[nxt, idx].sum(axis=1) - diag[idx].sum(axis=1)
            pos = int(np.argmin(vals))
            if vals[pos] < best:
                best = float(vals[pos])
                worst = tuple(int(s) for s in idx[pos])
            checked += count
    return MonotonicityReport(
        min_value=best, worst_cycle=worst, cycles_checked=checked, support_size=k, certified=best >= -tol
    )
