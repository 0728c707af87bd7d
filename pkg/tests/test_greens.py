import cmath
import math

import numpy as np
import pytest

from conftest import annulus_green_oracle
from mcdcft.domains import Circle, CircularDomain
from mcdcft.greens import (
    CircularGreen,
    Cylinder,
    CylinderGreen,
    HalfPlane,
    HalfPlaneGreen,
    bipolar_green,
    conformal_radius,
    domain_constant,
    er_poisson,
    green,
    green_complex,
    green_dirichlet_from_er,
    green_theta_route,
    make_evaluator,
)
from mcdcft.special import jacobi_theta1, solve_harmonic_measures


class TestHalfPlane:
    def test_value(self):
        hp = HalfPlaneGreen()
        assert green(hp, 1j, 2j) == pytest.approx(math.log(3.0))

    def test_boundary_zero(self):
        hp = HalfPlaneGreen()
        assert abs(hp.G(5.0, 1 + 1j)) < 1e-14

    def test_complex_green(self):
        hp = HalfPlaneGreen()
        val = green_complex(hp, 2j, 1j)
        assert val == pytest.approx(0.5 * cmath.log((2j + 1j) / (2j - 1j)))
        # 2 Re G+ = G at random pairs
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = complex(rng.uniform(-2, 2), rng.uniform(0.1, 2))
            b = complex(rng.uniform(-2, 2), rng.uniform(0.1, 2))
            if abs(a - b) < 0.1:
                continue
            assert 2 * green_complex(hp, a, b).real == pytest.approx(hp.G(a, b))

    def test_poisson(self):
        hp = HalfPlaneGreen()
        assert er_poisson(hp, 1j, 0.0, complexified=True) == pytest.approx(1j / 1j * 1j / (1j))
        assert er_poisson(hp, 1j, 0.0, complexified=True) == pytest.approx(1.0 + 0j)
        assert er_poisson(hp, 2j, 1.0) == pytest.approx(2 * 2 / abs(2j - 1) ** 2)

    def test_domain_constant(self):
        hp = HalfPlaneGreen()
        assert domain_constant(hp, 1j) == pytest.approx(math.log(2.0), abs=1e-8)


class TestAnnulusRoutes:
    def test_all_routes_match_closed_form(self, annulus, annulus_pd):
        zeta, z = 0.5 + 0j, -0.6 + 0j
        oracle = annulus_green_oracle(zeta, z)
        sk = CircularGreen(annulus, "dirichlet", "sk", max_level=25)
        th = CircularGreen(annulus, "dirichlet", "theta", period_data=annulus_pd,
                           solver=annulus_pd.solver)
        co = CircularGreen(annulus, "dirichlet", "colloc")
        assert sk.G(zeta, z) == pytest.approx(oracle, abs=1e-12)
        assert th.G(zeta, z) == pytest.approx(oracle, abs=1e-10)
        assert co.G(zeta, z) == pytest.approx(oracle, abs=1e-7)

    def test_route_consistency_random_pairs(self, annulus, annulus_pd):
        rng = np.random.default_rng(5)
        sk = {k: CircularGreen(annulus, k, "sk", max_level=25) for k in ("dirichlet", "er")}
        th = {k: CircularGreen(annulus, k, "theta", period_data=annulus_pd,
                               solver=annulus_pd.solver) for k in ("dirichlet", "er")}
        n = 0
        while n < 20:
            a = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
            b = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
            if not (annulus.contains(a, 0.05) and annulus.contains(b, 0.05)
                    and abs(a - b) > 0.1):
                continue
            n += 1
            for k in ("dirichlet", "er"):
                assert abs(sk[k].G(a, b) - th[k].G(a, b)) < 1e-8

    def test_boundary_conditions(self, annulus):
        sk_d = CircularGreen(annulus, "dirichlet", "sk", max_level=20)
        sk_e = CircularGreen(annulus, "er", "sk", max_level=20)
        z = 0.3 + 0.2j
        rho = math.exp(-1.0)
        ts = np.linspace(0, 2 * math.pi, 200, endpoint=False)
        assert max(abs(sk_d.G(cmath.exp(1j * t), z)) for t in ts) < 1e-8
        assert max(abs(sk_d.G(rho * cmath.exp(1j * t), z)) for t in ts) < 1e-8
        assert max(abs(sk_e.G(cmath.exp(1j * t), z)) for t in ts) < 1e-8
        er_vals = [sk_e.G(rho * cmath.exp(1j * t), z) for t in ts]
        assert max(er_vals) - min(er_vals) < 1e-8

    def test_symmetry_and_rotation_invariance(self, annulus):
        sk = CircularGreen(annulus, "dirichlet", "sk", max_level=20)
        a, b = 0.5 + 0.2j, -0.3 - 0.4j
        assert sk.G(a, b) == pytest.approx(sk.G(b, a), abs=1e-10)
        w = cmath.exp(0.7j)
        assert sk.G(w * a, w * b) == pytest.approx(sk.G(a, b), abs=1e-10)

    def test_dirichlet_from_er(self, annulus, annulus_pd):
        ev_er = CircularGreen(annulus, "er", "sk", max_level=20)
        ev_d = CircularGreen(annulus, "dirichlet", "sk", max_level=20)
        a, b = 0.5 + 0.1j, -0.45 + 0.3j
        val = green_dirichlet_from_er(ev_er, annulus_pd, a, b)
        assert val == pytest.approx(ev_d.G(a, b), abs=1e-10)
        # annulus closed form of the correction
        corr = math.log(abs(a)) * math.log(abs(b)) / 1.0
        assert ev_er.G(a, b) - corr == pytest.approx(ev_d.G(a, b), abs=1e-10)

    def test_er_zero_flux(self, annulus):
        ev = CircularGreen(annulus, "er", "sk", max_level=20)
        z = 0.45 + 0.25j
        rho = math.exp(-1.0)
        n_nodes, h = 256, 1e-5
        flux = 0.0
        for t in 2 * math.pi * (np.arange(n_nodes) + 0.5) / n_nodes:
            p = rho * cmath.exp(1j * t)
            nrm = cmath.exp(1j * t)
            flux += (ev.G(p + h * nrm, z) - ev.G(p - h * nrm, z)) / (2 * h)
        flux *= 2 * math.pi * rho / n_nodes
        assert abs(flux) < 1e-6

    def test_near_diagonal_and_radius(self, annulus):
        ev_d = CircularGreen(annulus, "dirichlet", "sk", max_level=20)
        ev_e = CircularGreen(annulus, "er", "sk", max_level=20)
        z = 0.55 + 0.15j
        d = domain_constant(ev_d, z)
        c = conformal_radius(ev_e, z)
        # Prop. on the diagonal: c - d = <h(z), P^{-1} h(z)> = (log|z|)^2 / r
        assert c - d == pytest.approx(math.log(abs(z)) ** 2, abs=1e-6)
        for eps in (1e-3, 5e-4):
            val = ev_d.G(z + eps, z) + math.log(eps)
            assert abs(val - d) < 5e-3 * (eps / 5e-4)


class TestGenus2Routes:
    def test_triple_route(self, genus2, genus2_pd):
        rng = np.random.default_rng(1)
        sk = CircularGreen(genus2, "dirichlet", "sk", max_level=8, solver=genus2_pd.solver)
        th = CircularGreen(genus2, "dirichlet", "theta", period_data=genus2_pd,
                           solver=genus2_pd.solver)
        co = CircularGreen(genus2, "dirichlet", "colloc")
        n = 0
        while n < 20:
            a = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
            b = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
            if not (genus2.contains(a, 0.05) and genus2.contains(b, 0.05)
                    and abs(a - b) > 0.15):
                continue
            n += 1
            assert abs(sk.G(a, b) - th.G(a, b)) < 1e-4
            assert abs(sk.G(a, b) - co.G(a, b)) < 1e-4

    def test_complex_green_period(self, genus2, genus2_pd):
        ev = CircularGreen(genus2, "dirichlet", "sk", max_level=8,
                           solver=genus2_pd.solver)
        z = 0.1 + 0.4j
        # 2 Re G+ = G
        for zeta in (0.3 - 0.5j, -0.1 + 0.6j):
            assert 2 * ev.G_plus(zeta, z).real == pytest.approx(ev.G(zeta, z), abs=1e-9)
        # quadrature of d(G+) around C_1 reproduces the harmonic-measure period
        c = genus2.inner_circles[0]
        n_nodes = 400
        total = 0.0 + 0.0j
        R = c.radius * 1.3
        for t in 2 * math.pi * (np.arange(n_nodes) + 0.5) / n_nodes:
            p = c.center + R * cmath.exp(1j * t)
            dz = 2j * math.pi * R * cmath.exp(1j * t) / n_nodes
            # d(G^Diri)/dzeta via the exact derivative; its loop integral is
            # i times the period of Im G+ = pi h_1(z) (harmonic-measure period)
            total += ev.dG1(p, z) * dz
        expected = 1j * math.pi * genus2_pd.solver.h(z)[0]
        assert abs(total - expected) < 1e-6


class TestCylinder:
    def test_matches_annulus_transport(self, annulus):
        # cylinder C_r and annulus A_r are related by z = exp(2 pi i w)
        cyl = CylinderGreen(Cylinder(1.0), "dirichlet")
        ann = CircularGreen(annulus, "dirichlet", "sk", max_level=25)
        w1, w2 = 0.1 + 0.05j, 0.35 + 0.11j
        z1 = cmath.exp(2j * math.pi * w1)
        z2 = cmath.exp(2j * math.pi * w2)
        assert cyl.G(w1, w2) == pytest.approx(ann.G(z1, z2), abs=1e-10)

    def test_er_boundary(self):
        cyl = CylinderGreen(Cylinder(2.0), "er")
        z = 0.3 + 0.2j
        vals = [cyl.G(x, z) for x in np.linspace(0.01, 0.99, 9)]
        assert max(abs(v) for v in vals) < 1e-12 or max(vals) - min(vals) < 1e-12
        top = [cyl.G(complex(x, 2.0 / (2 * math.pi)), z)
               for x in np.linspace(0.01, 0.99, 9)]
        assert max(top) - min(top) < 1e-10

    def test_poisson_weierstrass(self):
        # H^{ER,+} = i (zeta_W(z-x) + (1/3)(theta'''/theta')(z-x))
        from mcdcft.special import weierstrass_zeta

        cyl = CylinderGreen(Cylinder(2.0), "er")
        tau = cyl.tau
        q3 = jacobi_theta1(0, tau, 3) / jacobi_theta1(0, tau, 1)
        z, x = 0.3 + 0.2j, 0.1
        hp = er_poisson(cyl, z, x, complexified=True)
        pred = 1j * (weierstrass_zeta(z - x, modular=tau) + (q3 / 3.0) * (z - x))
        assert hp == pytest.approx(pred, abs=1e-10)
        # finite-difference check of the real part against the normal derivative
        h = 1e-5
        fd = (cyl.G(z, x + 1j * h) - cyl.G(z, x)) / h
        assert 2 * hp.real == pytest.approx(fd, abs=1e-4)


class TestBipolar:
    def test_genus1_torus_closed_form(self, annulus_pd):
        # matches the theta/Im-correction display on the torus up to a constant
        pd = annulus_pd
        tau = complex(pd.tau[0, 0])
        p, q = 0.55 + 0.2j, -0.5 + 0.3j
        ap, aq = complex(pd.abel_jacobi(p)[0]), complex(pd.abel_jacobi(q)[0])

        def torus_form(z):
            az = complex(pd.abel_jacobi(z)[0])
            val = math.log(abs(jacobi_theta1(az - aq, tau)
                               / jacobi_theta1(az - ap, tau)))
            return val - 2 * math.pi * (ap - aq).imag * az.imag / tau.imag

        zs = [0.4 - 0.3j, -0.3 - 0.45j, 0.6 + 0.35j]
        diffs = [bipolar_green(pd, p, q, z) - torus_form(z) for z in zs]
        assert max(diffs) - min(diffs) < 1e-9

    def test_antisymmetry_up_to_constant(self, genus2_pd):
        pd = genus2_pd
        p, q = 0.2 + 0.4j, -0.3 - 0.5j
        z1, z2 = 0.6 - 0.2j, -0.6 + 0.35j
        d_pq = bipolar_green(pd, p, q, z1) - bipolar_green(pd, p, q, z2)
        d_qp = bipolar_green(pd, q, p, z1) - bipolar_green(pd, q, p, z2)
        assert d_pq == pytest.approx(-d_qp, abs=1e-9)

    def test_schottky_double_relation(self, annulus, annulus_pd):
        # G^Diri(zeta, z) = (1/2)(G_{z,z*}(zeta) - G_{z,z*}(zeta*))
        ev = CircularGreen(annulus, "dirichlet", "sk", max_level=25)
        z = 0.5 + 0.25j
        zs = 1 / np.conj(z)
        for zeta in (0.4 - 0.35j, -0.55 + 0.2j):
            rel = 0.5 * (bipolar_green(annulus_pd, z, zs, zeta)
                         - bipolar_green(annulus_pd, z, zs, 1 / np.conj(zeta)))
            assert rel == pytest.approx(ev.G(zeta, z), abs=1e-6)

    def test_base_point_independence(self, annulus):
        from mcdcft.special import build_period_data

        pd1 = build_period_data(annulus, p0=1.0)
        pd2 = build_period_data(annulus, p0=cmath.exp(2.1j))
        p, q, z = 0.55 + 0.2j, -0.5 + 0.3j, 0.4 - 0.3j
        assert bipolar_green(pd1, p, q, z) == pytest.approx(
            bipolar_green(pd2, p, q, z), abs=1e-8)


def test_make_evaluator_dispatch(annulus):
    assert isinstance(make_evaluator(HalfPlane()), HalfPlaneGreen)
    assert isinstance(make_evaluator(Cylinder(1.0)), CylinderGreen)
    assert isinstance(make_evaluator(annulus, "er", "sk"), CircularGreen)


def test_theta_route_helper(annulus, annulus_pd):
    val = green_theta_route(annulus_pd, annulus, "dirichlet", 0.5, -0.6)
    assert val == pytest.approx(annulus_green_oracle(0.5 + 0j, -0.6 + 0j), abs=1e-9)
