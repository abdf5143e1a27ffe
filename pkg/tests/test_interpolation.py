import numpy as np
import pytest

from dtrans.dynamics import optimal_path
from dtrans.interpolation import (
    InterpolationSchedule,
    cost_curve,
    curve_verdicts,
    intermediate_certificate,
    interpolate_measure,
    transport_at,
    weights_at,
)
from dtrans.ot_solver import DiscreteMeasure, solve_kantorovich
from dtrans.portfolio import PowerGenerator, builtin_generators, phi0, transport_map
from dtrans.simplex import barycenter, cost, invert, sample_uniform


def atoms(rng, N, n=3, eps=0.02):
    return sample_uniform(n, N, rng, eps)


class TestSchedule:
    def test_default_grid(self):
        s = InterpolationSchedule(phi0())
        assert s.t.size == 33 and s.t[0] == 0.0 and s.t[-1] == 1.0

    @pytest.mark.parametrize("t", [[0.0, 0.5], [0.0, 0.7, 0.5, 1.0], [0.1, 1.0], [0.0]])
    def test_bad_grid(self, t):
        with pytest.raises(ValueError):
            InterpolationSchedule(phi0(), t)


class TestTransportAt:
    def test_endpoints(self, rng):
        g = PowerGenerator(0.5)
        s = InterpolationSchedule(g)
        p = atoms(rng, 20)
        assert np.abs(transport_at(s, 0.0, p) - p).max() <= 1e-15
        assert np.abs(transport_at(s, 1.0, p) - transport_map(g, p)).max() <= 1e-15

    def test_phi0_is_identity(self, rng):
        p = atoms(rng, 20, n=4)
        s = InterpolationSchedule(phi0())
        for t in (0.25, 0.5, 0.9):
            assert np.abs(transport_at(s, t, p) - p).max() <= 1e-15

    def test_agrees_with_geodesic(self, rng):
        for spec, g in builtin_generators(3).items():
            s = InterpolationSchedule(g)
            p = atoms(rng, 10)
            q = transport_map(g, p)
            t = np.linspace(0, 1, 17)
            for j in range(10):
                along = np.stack([transport_at(s, tk, p[j]) for tk in t])
                assert np.abs(along - optimal_path(p[j], q[j], t).q).max() <= 1e-12, spec

    def test_weights_linear_in_t(self, rng):
        s = InterpolationSchedule(PowerGenerator(0.5))
        r = invert(atoms(rng, 5))
        w0, w1, wh = (weights_at(s, t, r) for t in (0.0, 1.0, 0.3))
        assert np.allclose(w0, barycenter(3), atol=1e-15)
        assert np.abs(wh - (0.7 * w0 + 0.3 * w1)).max() <= 1e-15

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            transport_at(InterpolationSchedule(phi0()), 1.5, barycenter(2))


class TestMongeOptimality:
    @pytest.mark.parametrize("N", [2, 4, 6, 8])
    def test_lp_value_matches_map_cost(self, rng, N):
        for g in (PowerGenerator(0.5), builtin_generators(3)["diversity:0.5"]):
            P0 = DiscreteMeasure(atoms(rng, N))
            for t in (0.4, 1.0):
                Pt = interpolate_measure(InterpolationSchedule(g), P0, t)
                map_cost = float(np.mean(cost(P0.atoms, Pt.atoms)))
                assert solve_kantorovich(P0, Pt).value == pytest.approx(map_cost, abs=1e-12)

    def test_certificate(self, rng):
        P0 = DiscreteMeasure(atoms(rng, 30))
        report = intermediate_certificate(InterpolationSchedule(PowerGenerator(0.5)), P0, 0.6, rng=rng)
        assert report.certified


class TestCostCurve:
    def test_start_at_zero(self, rng):
        P0 = DiscreteMeasure(atoms(rng, 50))
        t, values = cost_curve(InterpolationSchedule(PowerGenerator(0.5)), P0)
        assert values[0] == 0.0
        assert t.size == 33

    def test_phi0_flat(self, rng):
        _, values = cost_curve(InterpolationSchedule(phi0()), DiscreteMeasure(atoms(rng, 50)))
        assert np.abs(values).max() <= 1e-15

    def test_matches_direct_cost(self, rng):
        s = InterpolationSchedule(PowerGenerator(0.5))
        P0 = DiscreteMeasure(atoms(rng, 40))
        t, values = cost_curve(s, P0, [0.0, 0.3, 1.0])
        for tk, v in zip(t, values):
            assert v == pytest.approx(float(np.mean(cost(P0.atoms, transport_at(s, tk, P0.atoms)))), abs=1e-14)

    def test_power_convex(self, rng):
        _, values = cost_curve(InterpolationSchedule(PowerGenerator(0.5)), DiscreteMeasure(atoms(rng, 50, n=2)))
        verdict = curve_verdicts(values)
        assert verdict["nondecreasing"] and verdict["convex"]
        assert verdict["min_second_difference"] > 0


def test_verdicts_flag_concavity():
    v = curve_verdicts(np.sqrt(np.linspace(0, 1, 9)))
    assert v["nondecreasing"] and not v["convex"]
    assert not curve_verdicts([0.0, 1.0, 0.5])["nondecreasing"]
