import math

import numpy as np
import pytest
from scipy import integrate, optimize

from dtrans.geometry import (
    change_of_variables_density,
    dirichlet_model,
    entropy_of_pushforward,
    inversion_jacobian,
    jacobian_det_u,
    lowner_residual,
    monge_ampere_density,
    numeric_jacobian,
    q_of_u,
    entropy_convexity_experiment,
    truncated_uniform_model,
    u_map,
    uniform_model,
)
from dtrans.interpolation import InterpolationSchedule, generator_at, transport_at
from dtrans.portfolio import AffineGenerator, PowerGenerator, builtin_generators, chart_matrix, phi0
from dtrans.simplex import barycenter, invert, sample_uniform

NON_AFFINE = [spec for spec in builtin_generators(3) if not spec.startswith("affine")]


def generator(spec, n):
    return builtin_generators(n)[spec]


class TestModels:
    def test_uniform_entropy(self):
        assert uniform_model(2).exact_entropy == pytest.approx(-2.0, abs=1e-14)
        assert uniform_model(3).exact_entropy == pytest.approx(math.log(2) - 4.5, abs=1e-14)

    def test_dirichlet_reduces_to_uniform(self, rng):
        p = sample_uniform(3, 10, rng)
        # Dir(1,1,1) against the reference measure carries the extra factor prod p
        d = dirichlet_model([1.0, 1.0, 1.0])
        assert np.allclose(d.log_density(p), uniform_model(3).log_density(p), atol=1e-13)
        assert d.exact_entropy == pytest.approx(uniform_model(3).exact_entropy, abs=1e-13)

    def test_truncated_support(self):
        m = truncated_uniform_model(3, 0.05)
        assert m.log_density(np.array([0.01, 0.49, 0.5])) == -np.inf
        assert np.isfinite(m.log_density(barycenter(3)))

    def test_dirichlet_rejects(self):
        with pytest.raises(ValueError):
            dirichlet_model([1.0, -1.0])


class TestUMap:
    def test_phi0_identity(self, rng):
        r = sample_uniform(4, 10, rng)
        assert np.abs(q_of_u(u_map(phi0(), r)) - invert(r)).max() <= 1e-14

    @pytest.mark.parametrize("spec", NON_AFFINE)
    def test_matches_transport(self, rng, spec):
        g = generator(spec, 3)
        s = InterpolationSchedule(g)
        p = sample_uniform(3, 10, rng, 0.02)
        for t in (0.5, 1.0):
            via_u = q_of_u(u_map(generator_at(s, t), invert(p)))
            assert np.abs(via_u - transport_at(s, t, p)).max() <= 1e-13


class TestJacobians:
    @pytest.mark.parametrize("n", [2, 3])
    @pytest.mark.parametrize("spec", NON_AFFINE)
    def test_u_determinant_vs_fd(self, rng, n, spec):
        g = generator(spec, n)
        r = sample_uniform(n, 20, rng, 0.02)
        J = numeric_jacobian(lambda x: u_map(g, x), r, simplex_output=False)
        fd = np.abs(np.linalg.det(J))
        exact = jacobian_det_u(g, r)
        assert np.max(np.abs(exact - fd) / exact) <= 1e-5

    def test_phi0_at_barycenter(self):
        assert jacobian_det_u(phi0(), barycenter(2)) == pytest.approx(4.0, abs=1e-12)

    def test_chart_matrix_positive(self, rng):
        r = sample_uniform(3, 50, rng, 0.02)
        for spec in NON_AFFINE:
            assert np.all(np.linalg.det(chart_matrix(generator(spec, 3), r)) > 0)

    def test_affine_singular(self):
        with pytest.raises(FloatingPointError):
            jacobian_det_u(AffineGenerator([1.0, 2.0, 3.0]), barycenter(3))

    def test_inversion(self, rng):
        assert inversion_jacobian(barycenter(3)) == pytest.approx(1.0, abs=1e-14)
        p = sample_uniform(3, 20, rng, 0.02)
        fd = np.abs(np.linalg.det(numeric_jacobian(invert, p)))
        assert np.max(np.abs(inversion_jacobian(p) - fd) / fd) <= 1e-6
        assert np.allclose(inversion_jacobian(p) * inversion_jacobian(invert(p)), 1.0, atol=1e-13)

    @pytest.mark.parametrize("spec", NON_AFFINE)
    def test_chain_rule(self, rng, spec):
        # |det dT/dp~| = q_n^n |det du/dr~| |det dr~/dp~|
        g = generator(spec, 3)
        p = sample_uniform(3, 20, rng, 0.02)
        q = transport_at(InterpolationSchedule(g), 1.0, p)
        chain = q[:, -1] ** 3 * jacobian_det_u(g, invert(p)) * inversion_jacobian(p)
        fd = np.abs(np.linalg.det(numeric_jacobian(lambda x: transport_at(InterpolationSchedule(g), 1.0, x), p)))
        assert np.max(np.abs(chain - fd) / fd) <= 1e-4


class TestDensity:
    def test_identity_at_zero(self, rng):
        m = uniform_model(3)
        p = sample_uniform(3, 10, rng)
        q, log_rho = monge_ampere_density(m, PowerGenerator(0.5), 0.0, p)
        assert np.abs(q - p).max() <= 1e-15
        assert np.abs(log_rho - m.log_density(p)).max() <= 1e-12

    @pytest.mark.parametrize("spec", NON_AFFINE)
    def test_normalized(self, spec):
        # integrate rho_t against the reference measure dq1 / (q1 q2)
        g = generator(spec, 2)
        s = InterpolationSchedule(g)
        m = uniform_model(2)

        def preimage(q1):
            return optimize.brentq(lambda x: transport_at(s, 0.7, np.array([x, 1 - x]))[0] - q1, 1e-14, 1 - 1e-14, xtol=1e-15)

        def integrand(q1):
            x = preimage(q1)
            _, log_rho = monge_ampere_density(m, g, 0.7, np.array([x, 1 - x]))
            return math.exp(log_rho) / (q1 * (1 - q1))

        total, _ = integrate.quad(integrand, 1e-9, 1 - 1e-9, limit=200, epsabs=1e-10)
        assert total == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("n", [2, 3])
    @pytest.mark.parametrize("spec", NON_AFFINE)
    def test_matches_fd(self, rng, n, spec):
        m = dirichlet_model(np.full(n, 1.5))
        p = sample_uniform(n, 25, rng, 0.02)
        for t in (0.3, 1.0):
            _, a = monge_ampere_density(m, generator(spec, n), t, p)
            _, b = change_of_variables_density(m, generator(spec, n), t, p)
            assert np.abs(a - b).max() <= 1e-4

    def test_chart_independent(self, rng):
        m = uniform_model(4)
        g = generator("power:0.5", 4)
        p = sample_uniform(4, 20, rng, 0.02)
        _, base = monge_ampere_density(m, g, 0.6, p)
        for drop in range(3):
            _, other = monge_ampere_density(m, g, 0.6, p, drop=drop)
            assert np.abs(other - base).max() <= 1e-10


class TestEntropy:
    @pytest.mark.parametrize("n", [2, 3])
    def test_reference_value(self, n):
        m = uniform_model(n)
        est, se = entropy_of_pushforward(m, phi0(), 0.0, 20_000, seed=3)
        assert abs(est - m.exact_entropy) <= 4 * se

    def test_standard_error_scaling(self):
        m = uniform_model(3)
        _, se1 = entropy_of_pushforward(m, PowerGenerator(0.5), 0.5, 5_000, seed=1)
        _, se4 = entropy_of_pushforward(m, PowerGenerator(0.5), 0.5, 20_000, seed=1)
        assert se4 / se1 == pytest.approx(0.5, rel=0.2)

    def test_phi0_constant(self):
        m = uniform_model(3)
        values = [entropy_of_pushforward(m, phi0(), t, 2000, seed=0)[0] for t in (0.0, 0.5, 1.0)]
        assert np.ptp(values) <= 1e-12


class TestEntropyConvexity:
    def test_power_run(self):
        out = entropy_convexity_experiment(uniform_model(2), PowerGenerator(0.5), np.linspace(0, 1, 9), M=2000, seed=0)
        assert out["min_per_sample_second_difference"] >= -1e-10
        assert out["difference_range"] <= 5 * out["standard_error"]
        assert np.all(out["second_differences_b"] >= -1e-10)

    def test_phi0_flat(self):
        out = entropy_convexity_experiment(uniform_model(3), phi0(), np.linspace(0, 1, 5), M=500, seed=2)
        assert np.ptp(out["curve_b"]) <= 1e-12
        assert np.ptp(out["curve_a"] - out["curve_b"]) <= 1e-6


class TestLowner:
    @pytest.mark.parametrize("spec", NON_AFFINE)
    def test_identity(self, rng, spec):
        g = generator(spec, 3)
        r = sample_uniform(3, 10, rng, 0.02)
        for t1, t2, alpha in [(0.0, 1.0, 0.3), (0.2, 0.9, 0.5), (0.7, 0.1, 0.8)]:
            residual, predicted = lowner_residual(g, r, t1, t2, alpha)
            assert np.abs(residual - predicted).max() <= 1e-10
            # positive semidefinite
            assert np.linalg.eigvalsh(residual).min() >= -1e-10

    def test_endpoints_vanish(self, rng):
        r = sample_uniform(3, 5, rng, 0.02)
        for alpha in (0.0, 1.0):
            residual, _ = lowner_residual(PowerGenerator(0.5), r, 0.1, 0.8, alpha)
            assert np.abs(residual).max() <= 1e-12

    def test_phi0_zero(self, rng):
        r = sample_uniform(3, 5, rng, 0.02)
        residual, predicted = lowner_residual(phi0(), r, 0.0, 1.0, 0.4)
        assert np.abs(residual).max() <= 1e-12 and np.abs(predicted).max() == 0.0
