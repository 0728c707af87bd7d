"""Loewner vector fields, canonical maps onto chordal standard domains,
diagonal expansion coefficients, the chordal Loewner flow with moduli
tracking, and moduli-direction derivatives.

The canonical map from a circular domain with marked boundary point q is

    F(u) = beta + alpha * i * (q * L(q, u) - 1/2),    L = d_1 log omega,

whose imaginary part is the ER Poisson kernel H^{ER}(u, q); it maps C_0 to
the real line, q to infinity, and each inner circle to a horizontal slit.
In the image chart the Loewner vector field with pole at xi = F(p) is

    v_xi(w) = -2 * (1/p - L(p, u)) / F'(p),        u = F^{-1}(w),

with derivative v'_xi(w) = 2 M(p, u) / (F'(p) F'(u)), M = d_2 d_1 log omega.
Both expressions are exact up to the product truncation; no finite
differences enter the structural identity checks.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .domains import (
    Circle,
    CircularDomain,
    ChordalStandardDomain,
    DomainError,
)
from .greens import Cylinder, CylinderGreen, GreenEvaluatorBase, HalfPlane, HalfPlaneGreen
from .special import (
    HarmonicSolution,
    SchottkyProduct,
    holomorphic_derivs,
    solve_harmonic_measures,
)

__all__ = [
    "CanonicalMap",
    "canonical_map",
    "ChordalGreen",
    "vector_field",
    "VectorFieldExpansion",
    "vf_expansion",
    "fit_circular_model",
    "LoewnerState",
    "make_state",
    "loewner_step",
    "moduli_derivative",
]


class MapError(ArithmeticError):
    pass


class CanonicalMap:
    """Conformal map F from a circular domain onto a chordal standard domain.

    Sends (C_0; q) to (R, infinity).  alpha > 0 and real beta fix the scale
    and translation of the image; the slit endpoints are the critical values
    of F on the inner circles.
    """

    def __init__(self, domain: CircularDomain, q: complex = 1.0 + 0.0j,
                 max_level: int = 8, alpha: float = 1.0, beta: float = 0.0,
                 sk: SchottkyProduct | None = None,
                 solver: HarmonicSolution | None = None):
        if abs(abs(q) - 1.0) > 1e-12:
            raise DomainError("q must lie on the unit circle")
        self.domain = domain
        self.q = complex(q)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.sk = sk if sk is not None else SchottkyProduct(domain, max_level)
        self._solver = solver
        self._criticals: list[tuple[complex, complex]] | None = None
        self._chordal: ChordalStandardDomain | None = None
        self.slit_im_defect = 0.0

    # -- map evaluation -------------------------------------------------------

    def F(self, u):
        val = 1j * (self.q * self.sk.log1(self.q, u) - 0.5)
        return self.beta + self.alpha * val

    def dF(self, u):
        return self.alpha * 1j * self.q * self.sk.log12(self.q, u)

    def d2F(self, u):
        return self.alpha * 1j * self.q * self.sk.log122(self.q, u)

    def d3F(self, u):
        rad = 0.45 * self._safe_radius(complex(u))
        return holomorphic_derivs(self.d2F, complex(u), 1, radius=rad)[1]

    @property
    def residue(self) -> complex:
        """Coefficient of 1/(u - q) in F near its pole."""
        return -1j * self.alpha * self.q

    def _safe_radius(self, u: complex) -> float:
        d = abs(u - self.q)
        for c in self.domain.inner_circles:
            d = min(d, abs(u - c.center) - c.radius)
        outer = 1.2 - abs(u) if abs(u) < 1.0 else abs(u) - 0.8
        return max(min(d, max(outer, 0.2)), 1e-3)

    # -- solver (harmonic measures, shared with Green evaluators) -------------

    @property
    def solver(self) -> HarmonicSolution:
        if self._solver is None:
            self._solver = solve_harmonic_measures(self.domain)
        return self._solver

    # -- slit extraction -------------------------------------------------------

    def criticals(self) -> list[tuple[complex, complex]]:
        """Per inner circle: preimages (u_left, u_right) of the slit endpoints."""
        if self._criticals is None:
            crit = []
            for c in self.domain.inner_circles:
                us = self._circle_criticals(c)
                if len(us) != 2:
                    raise MapError(
                        "expected 2 critical points on circle %r, found %d"
                        % (c, len(us)))
                vals = [self.F(u) for u in us]
                if vals[0].real > vals[1].real:
                    us, vals = us[::-1], vals[::-1]
                crit.append((us[0], us[1]))
            self._criticals = crit
        return self._criticals

    def _circle_criticals(self, c: Circle, n_grid: int = 128) -> list[complex]:
        def tangential(t):
            u = c.center + c.radius * cmath.exp(1j * t)
            return (self.dF(u) * 1j * c.radius * cmath.exp(1j * t)).real

        ts = np.linspace(0.0, 2.0 * math.pi, n_grid, endpoint=False)
        vals = np.array([tangential(t) for t in ts])
        roots = []
        for i in range(n_grid):
            a, b = ts[i], ts[(i + 1) % n_grid] + (0 if i + 1 < n_grid else 2 * math.pi)
            fa, fb = vals[i], vals[(i + 1) % n_grid]
            if fa == 0.0:
                roots.append(a)
            elif fa * fb < 0:
                roots.append(brentq(tangential, a, b, xtol=1e-14))
        return [c.center + c.radius * cmath.exp(1j * t) for t in roots]

    def chordal_domain(self) -> ChordalStandardDomain:
        if self._chordal is None:
            slits = []
            defect = 0.0
            for (ul, ur), c in zip(self.criticals(), self.domain.inner_circles):
                wl, wr = self.F(ul), self.F(ur)
                # Im F is constant on the circle up to truncation error
                ts = np.linspace(0, 2 * math.pi, 8, endpoint=False)
                ims = [self.F(c.center + c.radius * cmath.exp(1j * t)).imag for t in ts]
                defect = max(defect, max(ims) - min(ims))
                y = 0.5 * (wl.imag + wr.imag)
                slits.append((complex(wl.real, y), complex(wr.real, y)))
            self.slit_im_defect = defect
            self._chordal = ChordalStandardDomain(tuple(slits))
        return self._chordal

    # -- inversion --------------------------------------------------------------

    def _seed_grid(self):
        if not hasattr(self, "_seeds"):
            us = []
            for rad in np.linspace(0.15, 0.97, 12):
                for t in np.linspace(0, 2 * math.pi, 48, endpoint=False):
                    u = rad * cmath.exp(1j * t)
                    if self.domain.contains(u, 0.02) and abs(u - self.q) > 0.05:
                        us.append(u)
            # bands hugging each inner circle: each band point sits on a
            # definite side of the slit fold, which interior samples cannot
            # distinguish near the slit
            for c in self.domain.inner_circles:
                for fac in (1.003, 1.03, 1.12):
                    for t in np.linspace(0, 2 * math.pi, 96, endpoint=False):
                        u = c.center + c.radius * fac * cmath.exp(1j * t)
                        if self.domain.contains(u, 0.0) and abs(u - self.q) > 0.05:
                            us.append(u)
            us = np.array(us)
            self._seeds = (us, self.F(us))
        return self._seeds

    def inverse(self, w: complex, guess: complex | None = None,
                tol: float = 1e-13) -> complex:
        """Solve F(u) = w by Newton iteration; w in the closed upper half-plane."""
        w = complex(w)
        if w.imag < -1e-12:
            return 1.0 / self.inverse(w.conjugate(), guess).conjugate()
        if abs(w.imag) <= 1e-12:
            return self.boundary_preimage(w.real)
        if guess is None:
            if abs(w - self.beta) > 40.0 * self.alpha:
                guess = self.q + self.residue / (w - self.beta)
            else:
                us, ws = self._seed_grid()
                guess = complex(us[np.argmin(np.abs(ws - w))])
        u = self._newton(w, complex(guess), tol)
        # Newton may land on a spurious preimage inside an excluded disk
        # (F is a bijection only on the closed domain): restart from the
        # nearest band seed, constrained outside that circle.
        for c in self.domain.inner_circles:
            if abs(u - c.center) < c.radius * (1.0 - 1e-12):
                us, ws = self._seed_grid()
                order = np.argsort(np.abs(ws - w))
                for idx in order[:12]:
                    try:
                        u2 = self._newton(w, complex(us[idx]), tol, keep_out=c)
                    except MapError:
                        continue
                    if abs(u2 - c.center) >= c.radius * (1.0 - 1e-10):
                        u = u2
                        break
                else:
                    raise MapError("no valid preimage found for w = %s" % (w,))
                break
        if abs(u) > 1.0 + 1e-10:
            u = self._newton(w, 1.0 / u.conjugate(), tol)
        return u

    def _newton(self, w: complex, u: complex, tol: float,
                keep_out: Circle | None = None) -> complex:
        for _ in range(60):
            r = self.F(u) - w
            if abs(r) < tol * max(1.0, abs(w)):
                return u
            du = r / self.dF(u)
            if abs(du) < 1e-15 * (1.0 + abs(u)):
                return u
            step = 1.0
            for _ in range(40):
                cand = u - step * du
                ok = abs(cand) < 1.6 and all(
                    abs(cand - c.center) > 0.2 * c.radius
                    for c in self.domain.inner_circles)
                if ok and keep_out is not None:
                    ok = abs(cand - keep_out.center) > keep_out.radius * (1 - 1e-13)
                if ok:
                    break
                step *= 0.5
            u = u - step * du
        raise MapError("canonical-map inversion failed for w = %s" % (w,))

    def boundary_preimage(self, xi: float, guess_angle: float | None = None) -> complex:
        """Point p on C_0 with F(p) = xi (real); p = exp(i t)."""

        def fre(t):
            return self.F(cmath.exp(1j * t)).real - xi

        tq = cmath.phase(self.q)
        if guess_angle is not None:
            t = guess_angle
            for _ in range(60):
                p = cmath.exp(1j * t)
                r = self.F(p).real - xi
                if abs(r) < 1e-12 * max(1.0, abs(xi)):
                    return p
                d = (self.dF(p) * 1j * p).real
                t = t - r / d
            raise MapError("boundary preimage Newton failed at xi = %g" % xi)
        # F(e^{it}) is real and sweeps R monotonically on (tq, tq + 2 pi)
        lo, hi = tq + 1e-7, tq + 2 * math.pi - 1e-7
        flo, fhi = fre(lo), fre(hi)
        if flo * fhi > 0:
            # xi beyond the sampled sweep; tighten toward the pole
            for shrink in (1e-9, 1e-11, 1e-13):
                lo, hi = tq + shrink, tq + 2 * math.pi - shrink
                flo, fhi = fre(lo), fre(hi)
                if flo * fhi <= 0:
                    break
            else:
                raise MapError("boundary preimage bracketing failed at xi = %g" % xi)
        t = brentq(fre, lo, hi, xtol=1e-15)
        return cmath.exp(1j * t)

    # -- Loewner vector field in the image chart --------------------------------

    def vector_field(self, zeta_img: complex, w, u=None, p: complex | None = None):
        """v_zeta(w) in the chordal chart; zeta_img real (or interior) in the image."""
        if p is None:
            p = self.inverse(zeta_img)
        if u is None:
            u = np.asarray([self.inverse(complex(x)) for x in np.atleast_1d(w)])
            u = u if np.ndim(w) else complex(u[0])
        # normalized so that v vanishes at infinity (u = q): the raw completion
        # -2 (1/p - L(p,u))/F'(p) carries a constant fixed by that requirement
        L = self.sk.log1(p, u)
        Lq = self.sk.log1(p, self.q)
        return -2.0 * (Lq - L) / self.dF(p)

    def vector_field_deriv(self, zeta_img: complex, w, u=None, p: complex | None = None):
        """d/dw v_zeta(w) in the chordal chart."""
        if p is None:
            p = self.inverse(zeta_img)
        if u is None:
            u = np.asarray([self.inverse(complex(x)) for x in np.atleast_1d(w)])
            u = u if np.ndim(w) else complex(u[0])
        return 2.0 * self.sk.log12(p, u) / (self.dF(p) * self.dF(u))

    def er_poisson_plus(self, w, xi):
        """Complex ER Poisson kernel H^{ER+}(w, xi) of the image domain."""
        return self.vector_field(complex(xi), w) / 2.0j


def canonical_map(domain: CircularDomain, q: complex = 1.0 + 0.0j, **kw) -> CanonicalMap:
    """Conformal-map handle (C_0; q) -> (R, infinity); see CanonicalMap."""
    return CanonicalMap(domain, q, **kw)


# ---------------------------------------------------------------------------
# Chordal-domain Green evaluator (pullback through the canonical map)


class ChordalGreen(GreenEvaluatorBase):
    """Green's functions of a chordal standard domain via a circular model."""

    def __init__(self, domain_or_model, kind: str = "dirichlet",
                 model: CanonicalMap | None = None, method: str = "sk", **kw):
        from .greens import CircularGreen

        self.kind = kind
        if isinstance(domain_or_model, CanonicalMap):
            model = domain_or_model
        elif model is None:
            model = fit_circular_model(domain_or_model, **kw)
        self.model = model
        self.domain = model.chordal_domain()
        self.circ = CircularGreen(model.domain, kind, method, sk=model.sk,
                                  solver=model.solver)
        self._pre_cache: dict[complex, complex] = {}

    def pre(self, w: complex) -> complex:
        key = complex(w)
        u = self._pre_cache.get(key)
        if u is None:
            u = self.model.inverse(key)
            if len(self._pre_cache) > 8192:
                self._pre_cache.clear()
            self._pre_cache[key] = u
        return u

    def G(self, zeta, z):
        self._check_args(zeta, z)
        return self.circ.G(self.pre(zeta), self.pre(z))

    def dG1(self, zeta, z):
        p = self.pre(zeta)
        return self.circ.dG1(p, self.pre(z)) / self.model.dF(p)

    def d2G1(self, zeta, z):
        p, u = self.pre(zeta), self.pre(z)
        Fp, Fpp = self.model.dF(p), self.model.d2F(p)
        g1 = self.circ.dG1(p, u)
        g11 = self.circ.d2G1(p, u)
        # (F^{-1})' = 1/F', (F^{-1})'' = -F''/F'^3
        return g11 / Fp**2 - g1 * Fpp / Fp**3

    def dG12(self, zeta, z):
        p, u = self.pre(zeta), self.pre(z)
        return self.circ.dG12(p, u) / (self.model.dF(p) * self.model.dF(u))

    def G_plus(self, zeta, z):
        return self.circ.G_plus(self.pre(zeta), self.pre(z))

    def u_mixed_diag(self, z):
        u = self.pre(z)
        Fp = self.model.dF(u)
        Fpp = self.model.d2F(u)
        Fppp = self.model.d3F(u)
        schwarzian = Fppp / Fp - 1.5 * (Fpp / Fp) ** 2
        return (self.circ.u_mixed_diag(u) + schwarzian / 12.0) / Fp**2

    def vector_field(self, xi, w):
        return self.model.vector_field(complex(xi), w)

    def er_poisson_plus(self, w, xi):
        return self.model.er_poisson_plus(w, xi)


# ---------------------------------------------------------------------------
# Vector field front end and diagonal expansion


def vector_field(target, zeta, z):
    """Loewner vector field v_zeta(z).

    ``target`` may be a HalfPlane/Cylinder evaluator or domain, a CanonicalMap
    (chordal chart of its image), a ChordalGreen, or a LoewnerState.
    """
    if isinstance(target, LoewnerState):
        return target.vfield(zeta, z)
    if isinstance(target, (HalfPlane, HalfPlaneGreen)):
        return 2.0 / (zeta - np.asarray(z, dtype=complex))
    if isinstance(target, Cylinder):
        return CylinderGreen(target).vector_field(zeta, z)
    if isinstance(target, CylinderGreen):
        return target.vector_field(zeta, z)
    if isinstance(target, CanonicalMap):
        return target.vector_field(complex(zeta), z)
    if isinstance(target, ChordalGreen):
        return target.model.vector_field(complex(zeta), z)
    raise TypeError("no vector field for %r" % type(target).__name__)


@dataclass
class VectorFieldExpansion:
    r0: float
    r1: float
    fit_residual: float
    r0_complex: complex = 0.0 + 0.0j
    r1_complex: complex = 0.0 + 0.0j


def vf_expansion(target, xi: float, offsets=(1e-2, 5e-3, 2.5e-3),
                 max_imag: float = 1e-8) -> VectorFieldExpansion:
    """Coefficients r0(xi), r1(xi) of v_zeta(z) = 2/(zeta-z) + r0 + r1 (zeta-z) + ...

    Least-squares fit of v_{xi+d}(xi) - 2/d over d in +/- offsets.
    """
    if isinstance(target, (HalfPlane, HalfPlaneGreen)):
        return VectorFieldExpansion(0.0, 0.0, 0.0)
    ds = np.array(sorted(set(offsets)), dtype=float)
    ds = np.concatenate([-ds[::-1], ds])
    vals = []
    for d in ds:
        v = vector_field(target, xi + d, np.array([complex(xi)]))
        vals.append(complex(np.asarray(v).ravel()[0]) - 2.0 / d)
    vals = np.array(vals)
    A = np.vander(ds, 4, increasing=True)  # 1, d, d^2, d^3
    coef, res, *_ = np.linalg.lstsq(A, vals, rcond=None)
    fit = A @ coef
    residual = float(np.max(np.abs(fit - vals)))
    r0c, r1c = complex(coef[0]), complex(coef[1])
    if abs(r0c.imag) > max_imag or abs(r1c.imag) > max_imag:
        raise ArithmeticError(
            "vf_expansion: fitted coefficients not real (r0=%s, r1=%s)" % (r0c, r1c))
    return VectorFieldExpansion(r0c.real, r1c.real, residual, r0c, r1c)


# ---------------------------------------------------------------------------
# Inverse problem: circular model of a chordal standard domain


def _model_params(domain: CircularDomain) -> np.ndarray:
    out = []
    for c in domain.inner_circles:
        out.extend([c.center.real, c.center.imag, math.log(c.radius)])
    return np.array(out)


def _model_from_params(theta: np.ndarray) -> CircularDomain:
    circles = []
    for k in range(len(theta) // 3):
        x, y, logr = theta[3 * k:3 * k + 3]
        circles.append(Circle(complex(x, y), math.exp(logr)))
    return CircularDomain(tuple(circles))


def _slit_targets(domain: ChordalStandardDomain) -> np.ndarray:
    out = []
    for zl, zr in domain.slits:
        out.extend([zl.real, zr.real, zl.imag])
    return np.array(out)


def _initial_model(chordal: ChordalStandardDomain) -> CircularDomain:
    # genus-0 canonical map is the Cayley-type F(u) = i (1+u) / (2 (1-u))
    def inv0(w):
        return (2 * w - 1j) / (2 * w + 1j)

    circles = []
    for zl, zr in chordal.slits:
        m = 0.5 * (zl + zr)
        u = inv0(m)
        dinv = 4j / (2 * m + 1j) ** 2 / 2.0  # d/dw inv0
        r = 0.25 * (zr.real - zl.real) * abs(dinv)
        circles.append(Circle(u, max(r, 1e-4)))
    return CircularDomain(tuple(circles))


def fit_circular_model(chordal: ChordalStandardDomain,
                       initial: CircularDomain | None = None,
                       q: complex = 1.0 + 0.0j, max_level: int = 8,
                       tol: float = 1e-11, max_iter: int = 60,
                       solver_terms: int = 24) -> CanonicalMap:
    """Circular domain + canonical map whose image has the prescribed slits.

    Damped Newton on circle centers and log-radii (3g unknowns) with the
    canonical map pinned at q = 1, alpha = 1, beta = 0.
    """
    target = _slit_targets(chordal)
    theta = _model_params(initial if initial is not None else _initial_model(chordal))

    def residual(th):
        dom = _model_from_params(th)
        cm = CanonicalMap(dom, q, max_level=max_level)
        return _slit_targets(cm.chordal_domain()) - target, cm

    r, cm = residual(theta)
    best = (np.max(np.abs(r)), theta.copy(), cm)
    n = len(theta)
    J = None
    for it in range(max_iter):
        err = np.max(np.abs(r))
        if err < tol:
            break
        if J is None or it % 6 == 0:
            J = np.empty((n, n))
            h = 1e-7
            for k in range(n):
                tp = theta.copy()
                tp[k] += h
                try:
                    rp, _ = residual(tp)
                except (DomainError, MapError):
                    tp[k] -= 2 * h
                    rp, _ = residual(tp)
                    rp = 2 * r - rp
                J[:, k] = (rp - r) / h
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, r, rcond=None)
        lam = 1.0
        for _ in range(25):
            cand = theta - lam * step
            try:
                rc, cmc = residual(cand)
            except (DomainError, MapError):
                lam *= 0.5
                continue
            if np.max(np.abs(rc)) < err:
                theta, r, cm = cand, rc, cmc
                break
            lam *= 0.5
        else:
            J = None  # stale Jacobian; rebuild
            if best[0] < err:
                theta, r = best[1].copy(), residual(best[1])[0]
            continue
        if np.max(np.abs(r)) < best[0]:
            best = (np.max(np.abs(r)), theta.copy(), cm)
    if best[0] > 1e-6:
        raise MapError("circular-model fit did not converge (residual %g)" % best[0])
    return best[2]


# ---------------------------------------------------------------------------
# Loewner flow state


@dataclass
class TrackedPoint:
    z: complex
    alive: bool = True
    swallow_time: float | None = None
    log_deriv: complex = 0.0 + 0.0j  # log g_t'(z) accumulated along the flow
    boundary: bool = False


@dataclass
class LoewnerState:
    domain: ChordalStandardDomain
    xi: float
    t: float
    tracked: list[TrackedPoint]
    model: CanonicalMap | None = None  # circular model of the current domain
    swallow_tol: float = 1e-6

    @property
    def genus(self) -> int:
        return self.domain.genus

    def vfield(self, zeta, z):
        if self.genus == 0:
            return 2.0 / (complex(zeta) - np.asarray(z, dtype=complex))
        return self.model.vector_field(complex(zeta), z)

    def vfield_deriv(self, zeta, z):
        if self.genus == 0:
            return 2.0 / (complex(zeta) - np.asarray(z, dtype=complex)) ** 2
        return self.model.vector_field_deriv(complex(zeta), z)

    def green(self, kind: str = "dirichlet") -> GreenEvaluatorBase:
        if self.genus == 0:
            return HalfPlaneGreen(kind)
        return ChordalGreen(self.model, kind)


def make_state(domain, xi: float = 0.0, tracked=(), boundary_tracked=(),
               q: complex = 1.0 + 0.0j, max_level: int = 8) -> LoewnerState:
    """Initial Loewner state for a chordal standard domain or circular model."""
    if isinstance(domain, CanonicalMap):
        model = domain
        chordal = model.chordal_domain()
    elif isinstance(domain, CircularDomain):
        model = CanonicalMap(domain, q, max_level=max_level)
        chordal = model.chordal_domain()
    elif isinstance(domain, ChordalStandardDomain):
        model = fit_circular_model(domain, q=q, max_level=max_level) if domain.genus else None
        chordal = domain
    elif isinstance(domain, HalfPlane):
        model, chordal = None, ChordalStandardDomain(())
    else:
        raise TypeError("cannot make a Loewner state from %r" % type(domain).__name__)
    pts = [TrackedPoint(complex(z)) for z in tracked]
    pts += [TrackedPoint(complex(x), boundary=True) for x in boundary_tracked]
    return LoewnerState(chordal, float(xi), 0.0, pts, model)


def _slits_from_endpoints(ends: np.ndarray, g: int) -> ChordalStandardDomain:
    slits = []
    for k in range(g):
        zl, zr = ends[2 * k], ends[2 * k + 1]
        y = 0.5 * (zl.imag + zr.imag)
        slits.append((complex(zl.real, y), complex(zr.real, y)))
    return ChordalStandardDomain(tuple(slits))


def _step_genus0(state: LoewnerState, dxi: float, dt: float) -> LoewnerState:
    # driving held at state.xi during the step, so the RK4 is exact-order
    alive = [i for i, p in enumerate(state.tracked) if p.alive]
    zs = np.array([state.tracked[i].z for i in alive], dtype=complex)
    xi = state.xi

    def rhs(y):
        return -2.0 / (xi - y)

    k1 = rhs(zs)
    k2 = rhs(zs + 0.5 * dt * k1)
    k3 = rhs(zs + 0.5 * dt * k2)
    k4 = rhs(zs + dt * k3)
    z1 = zs + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    new_tracked = [replace(p) for p in state.tracked]
    xi_new = state.xi + dxi
    mid = 0.5 * (zs + z1)
    dv = -2.0 / (xi - mid) ** 2
    for slot, i in enumerate(alive):
        p = new_tracked[i]
        p.log_deriv = p.log_deriv - dt * complex(dv[slot])
        p.z = complex(z1[slot])
        dist = abs(p.z - xi_new) if p.boundary else min(abs(p.z - xi_new), p.z.imag)
        if dist < state.swallow_tol:
            p.alive = False
            p.swallow_time = state.t + dt
    return LoewnerState(state.domain, xi_new, state.t + dt, new_tracked, None,
                        state.swallow_tol)


def loewner_step(state: LoewnerState, dxi: float, dt: float,
                 max_halvings: int = 20) -> LoewnerState:
    """One time step of dz/dt = -v_xi(z) for tracked points and slit endpoints.

    Genus 0 uses a plain RK4 (the field is frozen at the current driving value,
    making the step exact-order).  At genus >= 1 the slit tips are advanced by
    a Heun predictor/corrector with an intermediate circular-model re-fit: the
    field is only Holder-1/2 at a tip, so stage evaluations must always use
    the *current* domain's tip values.  Tracked points use the same two-stage
    scheme and accumulate d(log g')/dt = -v'_xi(g_t z).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.genus == 0:
        return _step_genus0(state, dxi, dt)

    alive = [i for i, p in enumerate(state.tracked) if p.alive]
    zs = np.array([state.tracked[i].z for i in alive], dtype=complex)
    ends = np.array([e for s in state.domain.slits for e in s], dtype=complex)
    n_z = len(zs)
    g = state.genus
    xi_new = state.xi + dxi

    attempt_dt = dt
    for _ in range(max_halvings + 1):
        try:
            y0 = np.concatenate([zs, ends])
            crit = [u for c in state.model.criticals() for u in c]
            v0 = np.empty_like(y0)
            p0 = state.model.boundary_preimage(state.xi)
            if n_z:
                v0[:n_z] = state.model.vector_field(state.xi, zs, p=p0)
            v0[n_z:] = state.model.vector_field(state.xi, None,
                                                u=np.array(crit), p=p0)
            # Euler predictor and intermediate re-fit
            y_pred = y0 - attempt_dt * v0
            dom_pred = _slits_from_endpoints(y_pred[n_z:], g)
            model_pred = fit_circular_model(dom_pred, initial=state.model.domain,
                                            q=state.model.q,
                                            max_level=state.model.sk.max_level)
            # corrector field on the predictor domain at the updated driving
            crit_p = [u for c in model_pred.criticals() for u in c]
            v1 = np.empty_like(y0)
            p1 = model_pred.boundary_preimage(xi_new)
            if n_z:
                u_pred = np.array([model_pred.inverse(complex(w))
                                   for w in y_pred[:n_z]])
                v1[:n_z] = model_pred.vector_field(xi_new, None, u=u_pred, p=p1)
            v1[n_z:] = model_pred.vector_field(xi_new, None,
                                               u=np.array(crit_p), p=p1)
            y1 = y0 - 0.5 * attempt_dt * (v0 + v1)
            new_domain = _slits_from_endpoints(y1[n_z:], g)
            model = fit_circular_model(new_domain, initial=model_pred.domain,
                                       q=state.model.q,
                                       max_level=state.model.sk.max_level)
            new_domain = model.chordal_domain()
        except (MapError, DomainError, FloatingPointError):
            attempt_dt *= 0.5
            continue
        break
    else:
        raise MapError("loewner_step failed after %d halvings" % max_halvings)
    if attempt_dt != dt:
        part = loewner_step(state, dxi * attempt_dt / dt, attempt_dt, max_halvings)
        return loewner_step(part, dxi * (1.0 - attempt_dt / dt), dt - attempt_dt,
                            max_halvings)

    new_tracked = [replace(p) for p in state.tracked]
    if n_z:
        dv0 = np.asarray(state.model.vector_field_deriv(state.xi, None,
                                                        u=np.array([state.model.inverse(complex(w)) for w in zs]),
                                                        p=p0))
        dv1 = np.asarray(model_pred.vector_field_deriv(xi_new, None, u=u_pred, p=p1))
    for slot, i in enumerate(alive):
        p = new_tracked[i]
        p.log_deriv = p.log_deriv - 0.5 * dt * complex(dv0[slot] + dv1[slot])
        p.z = complex(y1[slot])
        dist = abs(p.z - xi_new) if p.boundary else min(abs(p.z - xi_new), p.z.imag)
        if dist < state.swallow_tol:
            p.alive = False
            p.swallow_time = state.t + dt
    return LoewnerState(new_domain, xi_new, state.t + dt, new_tracked, model,
                        state.swallow_tol)


# ---------------------------------------------------------------------------
# Moduli-direction derivative


def moduli_derivative(func, domain: ChordalStandardDomain, qs, zeta,
                      vfield_source=None, h: float = 1e-4,
                      include_q: bool = True) -> complex:
    """nabla_{H_g,q} F: joint central difference along the v_zeta directions.

    ``func(domain, qs)`` is re-evaluated on the perturbed configuration where
    every slit endpoint (and, when include_q, every marked boundary point) is
    moved by +/- h times the Loewner vector field at that point.  By the
    constancy of Im v on each slit the perturbed domains remain chordal
    standard.  For genus 0 without marked points the convention nabla = 0.
    """
    qs = [float(q) for q in qs]
    g = domain.genus
    if g == 0 and not (include_q and qs):
        return 0.0 + 0.0j
    if vfield_source is None:
        vfield_source = fit_circular_model(domain) if g else HalfPlane()
    ends = [e for s in domain.slits for e in s]
    v_ends = [complex(np.asarray(vector_field(vfield_source, zeta, np.array([e]))).ravel()[0])
              for e in ends]
    v_qs = [complex(np.asarray(vector_field(vfield_source, zeta, np.array([complex(q)]))).ravel()[0])
            for q in qs] if include_q else [0.0] * len(qs)

    def shifted(sign):
        new_slits = []
        for k in range(g):
            zl = ends[2 * k] + sign * h * v_ends[2 * k]
            zr = ends[2 * k + 1] + sign * h * v_ends[2 * k + 1]
            y = 0.5 * (zl.imag + zr.imag)
            new_slits.append((complex(zl.real, y), complex(zr.real, y)))
        new_qs = [q + sign * h * v.real for q, v in zip(qs, v_qs)]
        return ChordalStandardDomain(tuple(new_slits)), new_qs

    dom_p, qs_p = shifted(+1.0)
    dom_m, qs_m = shifted(-1.0)
    return (complex(func(dom_p, qs_p)) - complex(func(dom_m, qs_m))) / (2.0 * h)
