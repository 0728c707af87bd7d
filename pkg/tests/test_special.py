import cmath
import math

import numpy as np
import pytest

from mcdcft.domains import Circle, CircularDomain
from mcdcft.special import (
    ThetaTruncation,
    a_cycle_integral,
    b_cycle_matrix,
    build_period_data,
    harmonic_measures,
    jacobi_theta1,
    period_matrix_P,
    riemann_theta,
    riemann_theta_quasi_period,
    sk_prime,
    solve_harmonic_measures,
    weierstrass_zeta,
)


def omega_annulus_oracle(zeta, z, r=1.0, K=200):
    k = np.arange(1, K + 1)
    q = np.exp(-2 * r * k)
    return (zeta - z) * np.prod((q * zeta - z) * (q * z - zeta)
                                / ((q * zeta - zeta) * (q * z - z)))


class TestSkPrime:
    def test_genus0_is_difference(self):
        dom = CircularDomain(())
        assert sk_prime(dom, 0.8, 0.2) == pytest.approx(0.6)

    def test_annulus_antisymmetry(self, annulus):
        assert abs(sk_prime(annulus, 0.5, -0.6, 25)
                   + sk_prime(annulus, -0.6, 0.5, 25)) < 1e-10

    def test_annulus_matches_product_oracle(self, annulus):
        mine = sk_prime(annulus, 0.5, 0.7, 30)
        assert abs(mine - omega_annulus_oracle(0.5, 0.7)) < 1e-12

    def test_antisymmetry_random_pairs(self, annulus, genus2):
        rng = np.random.default_rng(1)
        for dom in (annulus, genus2):
            n = 0
            while n < 20:
                a = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
                b = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
                if not (dom.contains(a, 0.03) and dom.contains(b, 0.03)):
                    continue
                n += 1
                assert abs(sk_prime(dom, a, b, 8) + sk_prime(dom, b, a, 8)) < 1e-10

    def test_reflection_rule(self, annulus, genus2):
        for dom in (annulus, genus2):
            z, w = 0.5 + 0.1j, -0.3 + 0.55j
            lhs = np.conj(sk_prime(dom, 1 / np.conj(z), 1 / np.conj(w), 10))
            rhs = -sk_prime(dom, z, w, 10) / (z * w)
            assert abs(lhs - rhs) < 1e-8


class TestRiemannTheta:
    def test_even(self):
        tau = 1j * np.eye(2)
        rng = np.random.default_rng(2)
        for _ in range(10):
            Z = rng.normal(size=2) + 1j * rng.normal(size=2) * 0.1
            assert riemann_theta(Z, tau) == pytest.approx(riemann_theta(-Z, tau))

    def test_integer_periodicity(self):
        tau = 1j * np.eye(2)
        Z = np.array([0.3 + 0.05j, -0.2 + 0.02j])
        lhs = riemann_theta(Z + np.array([1.0, 0.0]), tau)
        assert abs(lhs - riemann_theta(Z, tau)) < 1e-10

    def test_theta_constant_identity(self):
        # Theta(0 | i I_2) = (sum e^{-pi n^2})^2, brute-force lattice oracle
        val = riemann_theta(np.zeros(2), 1j * np.eye(2))
        s = sum(math.exp(-math.pi * n * n) for n in range(-30, 31))
        assert val.real == pytest.approx(s * s, abs=1e-12)
        assert abs(val.imag) < 1e-14

    def test_quasi_periodicity_selftest(self):
        assert riemann_theta_quasi_period(np.array([0.3]), np.array([[2j]]), [1])
        tau = np.array([[0.5j, 0.1j], [0.1j, 0.7j]])
        rng = np.random.default_rng(3)
        Z = rng.normal(size=2) * 0.3
        riemann_theta_quasi_period(Z, tau, [1, -1])

    def test_truncation_doubling(self):
        tau = np.array([[0.5j]])
        t1 = ThetaTruncation.for_tau(tau, 1e-12)
        t2 = ThetaTruncation(2 * t1.radius, 1e-12)
        Z = np.array([0.21 + 0.03j])
        assert abs(riemann_theta(Z, tau, t1) - riemann_theta(Z, tau, t2)) < 1e-12

    def test_not_positive_definite(self):
        with pytest.raises(ValueError):
            riemann_theta(np.zeros(1), np.array([[-1j]]))


class TestJacobiTheta:
    def test_odd(self):
        tau = 1.3j
        assert jacobi_theta1(0.0, tau) == pytest.approx(0.0)
        for z in (0.3 + 0.1j, 0.77, -0.2 + 0.05j):
            assert jacobi_theta1(-z, tau) == pytest.approx(-jacobi_theta1(z, tau))

    def test_derivative_orders_against_q_series_oracle(self):
        # 50-term q-series oracle for theta1'(0 | i)
        tau = 1j
        q = cmath.exp(1j * math.pi * tau)
        oracle = 0.0
        for n in range(50):
            oracle += 2 * (-1) ** n * q ** ((n + 0.5) ** 2) * (2 * n + 1) * math.pi
        assert jacobi_theta1(0.0, tau, 1) == pytest.approx(oracle)

    def test_derivatives_consistent_fd(self):
        tau = 0.8j
        h = 1e-5
        for order in (1, 2, 3):
            fd = (jacobi_theta1(0.3 + h, tau, order - 1)
                  - jacobi_theta1(0.3 - h, tau, order - 1)) / (2 * h)
            assert abs(jacobi_theta1(0.3, tau, order) - fd) < 1e-6


class TestWeierstrassZeta:
    def test_odd(self):
        z = 0.3 + 0.2j
        assert weierstrass_zeta(-z, (1.0, 2j)) == pytest.approx(
            -weierstrass_zeta(z, (1.0, 2j)))

    def test_pole_expansion(self):
        z = 1e-3 * cmath.exp(0.3j)
        assert abs(weierstrass_zeta(z, (1.0, 2j)) * z - 1.0) < 1e-11

    def test_lattice_sum_oracle(self):
        def oracle(z, p1, p2, shells=40):
            tot = 1 / z
            for m in range(-shells, shells + 1):
                for n in range(-shells, shells + 1):
                    if m == 0 and n == 0:
                        continue
                    w = m * p1 + n * p2
                    tot += 1 / (z - w) + 1 / w + z / w**2
            return tot

        z = 0.3 + 0.2j
        assert abs(weierstrass_zeta(z, (1.0, 2j)) - oracle(z, 1.0, 2j)) < 1e-5

    def test_lattice_point_error(self):
        with pytest.raises(ZeroDivisionError):
            weierstrass_zeta(1.0 + 2j, (1.0, 2j))


class TestHarmonicMeasures:
    def test_annulus_closed_form(self, annulus):
        sol = solve_harmonic_measures(annulus, n_terms=16)
        assert sol.boundary_error < 1e-12
        assert harmonic_measures(annulus, 0.5, sol)[0] == pytest.approx(
            -math.log(0.5), abs=1e-10)

    def test_boundary_values(self, annulus):
        sol = solve_harmonic_measures(annulus)
        for t in np.linspace(0, 2 * math.pi, 200):
            z = math.exp(-1.0) * cmath.exp(1j * t)
            assert abs(sol.h(z)[0] - 1.0) < 1e-6
            assert abs(sol.h(cmath.exp(1j * t))[0]) < 1e-6

    def test_outside_domain_raises(self, annulus):
        from mcdcft.domains import DomainError

        with pytest.raises(DomainError):
            harmonic_measures(annulus, 1.5)

    def test_genus2_monte_carlo_oracle(self, genus2):
        # Brownian-motion exit probabilities oracle (walk on spheres)
        sol = solve_harmonic_measures(genus2)
        z0 = 0.1 + 0.35j
        h = sol.h(z0)
        rng = np.random.default_rng(42)
        n_walk = 20000
        counts = np.zeros(3)
        for _ in range(n_walk):
            z = z0
            for _ in range(2000):
                d = genus2.boundary_distance(z)
                if d < 1e-3:
                    break
                z = z + d * cmath.exp(2j * math.pi * rng.uniform())
            dists = [abs(abs(z) - 1.0)] + [abs(abs(z - c.center) - c.radius)
                                           for c in genus2.inner_circles]
            counts[int(np.argmin(dists))] += 1
        p = counts / n_walk
        se = np.sqrt(p * (1 - p) / n_walk) + 1e-4
        assert abs(p[1] - h[0]) < 4 * se[1]
        assert abs(p[2] - h[1]) < 4 * se[2]


class TestPeriods:
    def test_annulus_period(self):
        dom = CircularDomain((Circle(0j, math.exp(-2.0)),))
        P = period_matrix_P(dom)
        assert P[0, 0] == pytest.approx(0.5, abs=1e-10)

    def test_symmetry_and_refinement(self, genus2):
        P1 = period_matrix_P(genus2, solve_harmonic_measures(genus2, n_terms=20))
        P2 = period_matrix_P(genus2, solve_harmonic_measures(genus2, n_terms=40))
        assert np.max(np.abs(P1 - P1.T)) < 1e-8
        assert np.max(np.abs(P1 - P2)) < 1e-6

    def test_tau_relation_and_characteristic(self, annulus_pd, genus2_pd):
        for pd in (annulus_pd, genus2_pd):
            tau_b = b_cycle_matrix(pd)
            assert (np.linalg.norm(tau_b - pd.tau) / np.linalg.norm(pd.tau)) < 1e-8
            assert np.min(np.linalg.eigvalsh(pd.P)) > 0
            assert np.min(np.linalg.eigvalsh(pd.tau.imag)) > 0
            theta0 = abs(pd.theta(np.zeros(pd.genus)))
            assert abs(pd.theta(pd.e)) < 1e-8 * theta0

    def test_annulus_tau_value(self):
        dom = CircularDomain((Circle(0j, math.exp(-math.pi)),))
        pd = build_period_data(dom)
        assert pd.tau[0, 0] == pytest.approx(1j, abs=1e-10)


class TestAbelJacobi:
    def test_base_point(self, annulus_pd, genus2_pd):
        for pd in (annulus_pd, genus2_pd):
            assert np.max(np.abs(pd.abel_jacobi(1.0 + 0j))) < 1e-12

    def test_a_cycle_normalization(self, genus2_pd):
        for j in (1, 2):
            val = a_cycle_integral(genus2_pd, j)
            expect = np.zeros(2)
            expect[j - 1] = 1.0
            assert np.max(np.abs(val - expect)) < 1e-8

    def test_reflection_relation(self, annulus_pd, genus2_pd):
        # A(z*) - A(z) = tau h(z) (mod lattice; here exactly for these points)
        for pd, z in ((annulus_pd, 0.55 + 0.1j), (genus2_pd, 0.1 + 0.35j)):
            diff = pd.abel_jacobi(1 / np.conj(z)) - pd.abel_jacobi(z)
            pred = pd.tau @ pd.solver.h(z)
            assert np.max(np.abs(diff - pred)) < 1e-8
