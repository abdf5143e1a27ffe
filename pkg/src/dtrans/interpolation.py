"""Displacement interpolation between a measure and its image under a Monge map."""

from dataclasses import dataclass

import numpy as np

from .ot_solver import Coupling, DiscreteMeasure, certify_c_monotone, cost_matrix
from .portfolio import MixtureGenerator, phi0, portfolio_map
from .simplex import barycenter, invert, odot, relative_entropy

__all__ = [
    "InterpolationSchedule",
    "generator_at",
    "weights_at",
    "transport_at",
    "interpolate_measure",
    "cost_curve",
    "curve_verdicts",
    "intermediate_certificate",
]


@dataclass(frozen=True, eq=False)
class InterpolationSchedule:
    """Generator at time 1 and a sorted time grid covering ``[0, 1]``."""

    generator: object
    t: np.ndarray = None

    def __post_init__(self):
        t = np.linspace(0.0, 1.0, 33) if self.t is None else np.asarray(self.t, dtype=np.float64)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0) or t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError("time grid must be increasing from 0 to 1")
        object.__setattr__(self, "t", t)


def generator_at(schedule, t):
    """``(1 - t) phi0 + t phi1``."""
    return MixtureGenerator(t, phi0(), schedule.generator)


def weights_at(schedule, t, r):
    """``(1 - t) e + t pi_1(r)``."""
    r = np.asarray(r, dtype=np.float64)
    return (1.0 - t) * barycenter(r.shape[-1]) + t * portfolio_map(schedule.generator, r)


def transport_at(schedule, t, p):
    """``T_t(p) = p ⊙ pi_t(p^-1)``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    return odot(p, weights_at(schedule, t, invert(p)))


def interpolate_measure(schedule, P0, t):
    return DiscreteMeasure(transport_at(schedule, t, P0.atoms), P0.weights)


def cost_curve(schedule, P0, t=None):
    """Transport cost from ``P0`` to its interpolant at each time."""
    t = schedule.t if t is None else np.asarray(t, dtype=np.float64)
    r = invert(P0.atoms)
    n = r.shape[-1]
    pi1 = portfolio_map(schedule.generator, r)
    e = barycenter(n)
    values = [float(P0.weights @ relative_entropy(e, (1 - s) * e + s * pi1)) for s in t]
    return t, np.asarray(values)


def curve_verdicts(values, tol=1e-10):
    first = np.diff(values)
    second = np.diff(values, 2)
    return {
        "nondecreasing": bool(np.all(first >= -tol)),
        "convex": bool(np.all(second >= -tol)),
        "min_first_difference": float(first.min()) if first.size else 0.0,
        "min_second_difference": float(second.min()) if second.size else 0.0,
    }


def intermediate_certificate(schedule, P0, t, cycle_budget=2000, rng=None):
    """c-cyclical monotonicity report for the coupling ``(p, T_t(p))``."""
    Pt = interpolate_measure(schedule, P0, t)
    N = len(P0)
    mass = np.diag(P0.weights)
    value = float(np.sum(mass * cost_matrix(P0, Pt)))
    coupling = Coupling(mass=mass, source=P0, target=Pt, value=value)
    return certify_c_monotone(coupling, cycle_budget=cycle_budget, rng=rng, max_length=min(6, N))
