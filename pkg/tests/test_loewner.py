import cmath
import math

import numpy as np
import pytest

from mcdcft.domains import Circle, CircularDomain, ChordalStandardDomain
from mcdcft.greens import Cylinder, CylinderGreen, HalfPlane
from mcdcft.loewner import (
    CanonicalMap,
    ChordalGreen,
    fit_circular_model,
    loewner_step,
    make_state,
    moduli_derivative,
    vector_field,
    vf_expansion,
)
from mcdcft.special import jacobi_theta1


class TestCanonicalMap:
    def test_disk_to_halfplane(self):
        cm = CanonicalMap(CircularDomain(()), 1.0)
        # Cayley-type map: real on the unit circle, i/2 at the origin
        assert abs(cm.F(cmath.exp(0.8j)).imag) < 1e-14
        assert cm.F(0.0) == pytest.approx(0.5j)
        assert cm.chordal_domain().slits == ()

    def test_annulus_image_is_slit(self, annulus_map):
        ch = annulus_map.chordal_domain()
        assert len(ch.slits) == 1
        assert annulus_map.slit_im_defect < 1e-6
        # horizontal segment: Im F constant over circle samples
        c = annulus_map.domain.inner_circles[0]
        ims = [annulus_map.F(c.center + c.radius * cmath.exp(1j * t)).imag
               for t in np.linspace(0, 2 * math.pi, 32)]
        assert max(ims) - min(ims) < 1e-6

    def test_slit_endpoints_stable_under_refinement(self, annulus):
        a = CanonicalMap(annulus, 1.0, max_level=10).chordal_domain().slits[0]
        b = CanonicalMap(annulus, 1.0, max_level=20).chordal_domain().slits[0]
        assert abs(a[0] - b[0]) < 1e-6 and abs(a[1] - b[1]) < 1e-6

    def test_inverse_roundtrip(self, annulus_map, genus2_map):
        for cm, pts in ((annulus_map, (0.5 + 0.2j, -0.3 - 0.6j)),
                        (genus2_map, (0.1 + 0.4j, -0.2 - 0.3j))):
            for u in pts:
                w = cm.F(u)
                assert abs(cm.inverse(complex(w)) - u) < 1e-11

    def test_near_slit_preimage_sides(self, annulus_map):
        (zl, zr), = annulus_map.chordal_domain().slits
        mid = 0.5 * (zl + zr)
        for w in (mid + 5e-3j, mid - 5e-3j, zl - 1e-3, zr + 1e-3):
            u = annulus_map.inverse(complex(w))
            assert abs(annulus_map.F(u) - w) < 1e-10
            assert annulus_map.domain.contains(u, -1e-9)


class TestVectorField:
    def test_halfplane(self):
        v = vector_field(HalfPlane(), 0.0, np.array([1j]))[0]
        assert v == pytest.approx(2.0 / (0 - 1j))

    def test_cylinder_weierstrass_form(self):
        from mcdcft.special import weierstrass_zeta

        cyl = Cylinder(2.0)
        ce = CylinderGreen(cyl)
        q3 = jacobi_theta1(0, ce.tau, 3) / jacobi_theta1(0, ce.tau, 1)
        z, p = 0.4 + 0.2j, 0.1
        v = vector_field(cyl, p, np.array([z]))[0]
        pred = -2.0 * weierstrass_zeta(z - p, modular=ce.tau) - (2.0 / 3.0) * q3 * (z - p)
        assert v == pytest.approx(pred, abs=1e-10)

    def test_pole_normalization_and_reality(self, annulus_map):
        xi = 0.7
        w = xi + 1e-5 + 1e-5j
        v = complex(annulus_map.vector_field(xi, np.array([w]))[0])
        assert abs(v * (xi - w) / 2.0 - 1.0) < 1e-3
        for x in (-2.0, 0.2, 3.0):
            p = annulus_map.boundary_preimage(x)
            vx = complex(annulus_map.vector_field(
                xi, None, u=np.array([p]),
                p=annulus_map.boundary_preimage(xi))[0])
            assert abs(vx.imag) < 1e-8
        assert abs(complex(annulus_map.vector_field(xi, np.array([1e5j]))[0])) < 1e-3

    def test_im_v_constant_on_slit(self, genus2_map):
        xi = 0.5
        p = genus2_map.boundary_preimage(xi)
        for c in genus2_map.domain.inner_circles:
            vals = [complex(genus2_map.vector_field(
                xi, None, u=np.array([c.center + c.radius * cmath.exp(1j * t)]),
                p=p)[0]).imag for t in np.linspace(0, 2 * math.pi, 9)]
            assert max(vals) - min(vals) < 1e-8

    def test_vf_expansion_genus0(self):
        vf = vf_expansion(HalfPlane(), 0.3)
        assert vf.r0 == 0.0 and vf.r1 == 0.0

    def test_vf_expansion_cylinder(self):
        cyl = Cylinder(2.0)
        ce = CylinderGreen(cyl)
        q3 = complex(jacobi_theta1(0, ce.tau, 3) / jacobi_theta1(0, ce.tau, 1))
        vf = vf_expansion(cyl, 0.3)
        assert abs(vf.r0) < 1e-9
        assert vf.r1 == pytest.approx((2.0 / 3.0) * q3.real, abs=1e-8)

    def test_vf_expansion_genus2_offset_stability(self, genus2_map):
        a = vf_expansion(genus2_map, 0.4)
        b = vf_expansion(genus2_map, 0.4, offsets=(5e-3, 2.5e-3, 1.25e-3))
        assert abs(a.r0 - b.r0) < 1e-6
        assert abs(a.r1 - b.r1) < 1e-4
        assert a.fit_residual < 1e-6


class TestCrucialIdentityFlatCharts:
    def test_halfplane_closed_form(self):
        # zeta = 1, z = i: both sides equal 2i
        from mcdcft.greens import HalfPlaneGreen

        hp = HalfPlaneGreen()
        lhs = 4 * hp.d2G1(1.0, 1j)
        vp = 2.0 / (1.0 - 1j) ** 2
        assert lhs == pytest.approx(vp - np.conj(vp))
        assert lhs == pytest.approx(2j)

    def test_cylinder_exact(self):
        ce = CylinderGreen(Cylinder(2.0), "dirichlet")
        for xi in (0.1, 0.45):
            for z in (0.3 + 0.1j, 0.7 + 0.25j):
                lhs = 4 * ce.d2G1(xi, z)
                vp = -2.0 * ce._lt2(z - xi)
                assert abs(lhs - (vp - np.conj(vp))) < 1e-12


class TestFlow:
    def test_zero_driving_closed_form(self):
        st = make_state(HalfPlane(), xi=0.0, tracked=[2j, 1 + 1.5j])
        for _ in range(1000):
            st = loewner_step(st, 0.0, 1e-3)
        t = st.t
        for p, z0 in zip(st.tracked, (2j, 1 + 1.5j)):
            exact = np.sqrt(z0 * z0 + 4 * t)
            exact = exact if exact.imag > 0 else -exact
            assert abs(p.z - exact) < 1e-8

    def test_swallowing(self):
        st = make_state(HalfPlane(), xi=0.0, tracked=[1j])
        while st.t < 0.3 and st.tracked[0].alive:
            st = loewner_step(st, 0.0, 1e-3)
        assert not st.tracked[0].alive
        assert st.tracked[0].swallow_time == pytest.approx(0.25, abs=2e-3)

    def test_hydrodynamic_normalization(self):
        st = make_state(HalfPlane(), xi=0.0, tracked=[1e3j])
        for _ in range(100):
            st = loewner_step(st, 0.0, 1e-3)
        # g(z) - z -> 2t/z at large z
        assert abs(st.tracked[0].z - 1e3j - 2 * st.t / 1e3j) < 1e-2 * 2 * st.t / 1e3

    def test_hcap(self):
        st = make_state(HalfPlane(), xi=0.0, tracked=[1e3j])
        for _ in range(200):
            st = loewner_step(st, 0.0, 1e-3)
        hcap = ((st.tracked[0].z - 1e3j) * 1e3j / 2).real
        assert abs(hcap / st.t - 2.0) < 0.04  # hcap = 2t within 2%

    def test_flow_order_refinement(self, annulus_map):
        # composing n steps of size dt approximates one step of size n dt
        st0 = make_state(annulus_map, xi=0.2, tracked=[0.4 + 0.4j])
        big = loewner_step(st0, 0.0, 4e-3)
        small = st0
        for _ in range(4):
            small = loewner_step(small, 0.0, 1e-3)
        assert abs(big.tracked[0].z - small.tracked[0].z) < 1e-7
        zl_b = big.domain.slits[0][0]
        zl_s = small.domain.slits[0][0]
        assert abs(zl_b - zl_s) < 1e-7


class TestHadamard:
    def test_genus0(self):
        from mcdcft.verify import check_hadamard

        rep = check_hadamard(HalfPlane(), 0.0, 0.7 + 0.9j, -0.5 + 1.3j, 1e-4)
        assert rep.passed

    def test_genus1(self, annulus_map):
        from mcdcft.verify import check_hadamard

        rep = check_hadamard(annulus_map, 0.2, 0.35 + 0.3j, -0.6 + 0.35j, 1e-2)
        assert rep.residual < 1e-3


class TestFitCircularModel:
    def test_roundtrip(self, annulus_map):
        ch = annulus_map.chordal_domain()
        cm2 = fit_circular_model(ch, max_level=12)
        c1 = annulus_map.domain.inner_circles[0]
        c2 = cm2.domain.inner_circles[0]
        assert abs(c1.center - c2.center) < 1e-8
        assert abs(c1.radius - c2.radius) < 1e-8

    def test_genus2_roundtrip(self, genus2_map):
        # q differs (1 vs 1j), so only the slit data must round-trip
        ch = genus2_map.chordal_domain()
        cm2 = fit_circular_model(ch, max_level=8)
        ch2 = cm2.chordal_domain()
        for (a1, b1), (a2, b2) in zip(ch.slits, ch2.slits):
            assert abs(a1 - a2) < 1e-8 and abs(b1 - b2) < 1e-8


class TestModuliDerivative:
    def test_genus0_convention(self):
        val = moduli_derivative(lambda d, q: 1.23, ChordalStandardDomain(()), [], 0.5)
        assert val == 0.0

    def test_linearity(self, annulus_map):
        ch = annulus_map.chordal_domain()
        F = lambda d, q: complex(d.slits[0][0])
        G = lambda d, q: complex(d.slits[0][1]) ** 2
        aF = moduli_derivative(F, ch, [], 0.4, vfield_source=annulus_map)
        aG = moduli_derivative(G, ch, [], 0.4, vfield_source=annulus_map)
        aFG = moduli_derivative(lambda d, q: 2 * F(d, q) + 3 * G(d, q), ch, [],
                                0.4, vfield_source=annulus_map)
        assert aFG == pytest.approx(2 * aF + 3 * aG, abs=1e-8)

    def test_matches_flow_rate(self, annulus_map):
        # d/dt of the slit left endpoint under the flow is -v(z_l):
        # the joint perturbation with +v must therefore give +v(z_l)
        ch = annulus_map.chordal_domain()
        F = lambda d, q: complex(d.slits[0][0])
        val = moduli_derivative(F, ch, [], 0.4, vfield_source=annulus_map)
        vl = complex(vector_field(annulus_map, 0.4,
                                  np.array([ch.slits[0][0]]))[0])
        # Im parts are symmetrized across the two tips
        vr = complex(vector_field(annulus_map, 0.4,
                                  np.array([ch.slits[0][1]]))[0])
        pred = complex(vl.real, 0.5 * (vl.imag + vr.imag))
        assert val == pytest.approx(pred, abs=1e-7)
