"""Green's functions with Dirichlet and excursion-reflected boundary conditions.

Evaluator backends:

* half-plane and cylinder: closed forms (rational / Jacobi theta);
* circular domains: Schottky product route, Riemann theta route on the
  Schottky double, and direct boundary collocation;
* chordal standard domains: pullback through the canonical map from a
  circular model (see :mod:`mcdcft.loewner`).

Besides plain values, the circular backends expose exact Wirtinger
derivatives in the first argument and the mixed derivative; these feed the
stress-tensor correlators and the structural identity checks, where finite
differences of a collocation solution would be too noisy.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .domains import Circle, CircularDomain, ChordalStandardDomain, DomainError
from .special import (
    HarmonicSolution,
    PeriodData,
    SchottkyProduct,
    build_period_data,
    jacobi_theta1,
    solve_harmonic_measures,
)

__all__ = [
    "HalfPlane",
    "Cylinder",
    "HalfPlaneGreen",
    "CylinderGreen",
    "CircularGreen",
    "make_evaluator",
    "green",
    "green_dirichlet_from_er",
    "green_theta_route",
    "green_complex",
    "er_poisson",
    "domain_constant",
    "conformal_radius",
    "bipolar_green",
]


@dataclass(frozen=True)
class HalfPlane:
    """The upper half-plane; genus 0 reference domain."""

    genus: int = 0

    def contains(self, z: complex, tol: float = 0.0) -> bool:
        return complex(z).imag > tol


@dataclass(frozen=True)
class Cylinder:
    """S_r / <z -> z+1> with S_r = {0 < Im z < r/(2 pi)}; modulus r > 0."""

    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError("cylinder modulus must be positive")

    @property
    def genus(self) -> int:
        return 1

    @property
    def modular(self) -> complex:
        return 1j * self.r / math.pi

    def contains(self, z: complex, tol: float = 0.0) -> bool:
        return tol < complex(z).imag < self.r / (2 * math.pi) - tol


class GreenEvaluatorBase:
    """Common interface: G, Wirtinger derivatives in zeta, mixed derivative,
    complex Green's function and the diagonal of u(zeta, z) = G + log|zeta-z|."""

    kind = "dirichlet"
    method = "closed"

    def G(self, zeta, z) -> float:
        raise NotImplementedError

    def dG1(self, zeta, z) -> complex:
        raise NotImplementedError

    def d2G1(self, zeta, z) -> complex:
        raise NotImplementedError

    def dG12(self, zeta, z) -> complex:
        raise NotImplementedError

    def G_plus(self, zeta, z) -> complex:
        raise NotImplementedError

    def u_mixed_diag(self, z) -> complex:
        """(d_zeta d_z u)(z, z) with u = G + log|zeta - z| (Dirichlet kind)."""
        raise NotImplementedError

    def _check_args(self, zeta, z):
        if abs(complex(zeta) - complex(z)) < 1e-14:
            raise ZeroDivisionError("Green's function evaluated on the diagonal")


class HalfPlaneGreen(GreenEvaluatorBase):
    """G(zeta, z) = log|zeta - conj z| - log|zeta - z| (ER and Dirichlet agree)."""

    domain = HalfPlane()

    def __init__(self, kind: str = "dirichlet"):
        self.kind = kind

    def G(self, zeta, z):
        self._check_args(zeta, z)
        return math.log(abs(zeta - z.conjugate())) - math.log(abs(zeta - z))

    def dG1(self, zeta, z):
        return 0.5 * (1.0 / (zeta - z.conjugate()) - 1.0 / (zeta - z))

    def d2G1(self, zeta, z):
        return 0.5 * (-1.0 / (zeta - z.conjugate()) ** 2 + 1.0 / (zeta - z) ** 2)

    def dG12(self, zeta, z):
        return -0.5 / (zeta - z) ** 2

    def G_plus(self, zeta, z):
        return 0.5 * cmath.log((zeta - z.conjugate()) / (zeta - z))

    def u_mixed_diag(self, z):
        return 0.0 + 0.0j


class CylinderGreen(GreenEvaluatorBase):
    """Cylinder Green's functions via theta(r, z) = theta_1(z | i r / pi)."""

    def __init__(self, cylinder: Cylinder, kind: str = "dirichlet"):
        self.domain = cylinder
        self.kind = kind
        self.r = cylinder.r
        self.tau = cylinder.modular
        self._q3 = complex(jacobi_theta1(0.0, self.tau, 3)
                           / jacobi_theta1(0.0, self.tau, 1))

    def _lt(self, w):  # theta'/theta
        return jacobi_theta1(w, self.tau, 1) / jacobi_theta1(w, self.tau)

    def _lt2(self, w):  # (log theta)''
        th = jacobi_theta1(w, self.tau)
        d1 = jacobi_theta1(w, self.tau, 1)
        d2 = jacobi_theta1(w, self.tau, 2)
        return d2 / th - (d1 / th) ** 2

    def G(self, zeta, z):
        self._check_args(zeta, z)
        zeta, z = complex(zeta), complex(z)
        out = math.log(abs(jacobi_theta1(zeta - z.conjugate(), self.tau))) \
            - math.log(abs(jacobi_theta1(zeta - z, self.tau)))
        if self.kind == "dirichlet":
            out -= 4.0 * math.pi**2 * zeta.imag * z.imag / self.r
        return out

    def dG1(self, zeta, z):
        out = 0.5 * (self._lt(zeta - z.conjugate()) - self._lt(zeta - z))
        if self.kind == "dirichlet":
            out += 2.0j * math.pi**2 * z.imag / self.r
        return out

    def d2G1(self, zeta, z):
        return 0.5 * (self._lt2(zeta - z.conjugate()) - self._lt2(zeta - z))

    def dG12(self, zeta, z):
        out = 0.5 * self._lt2(zeta - z)
        if self.kind == "dirichlet":
            out += math.pi**2 / self.r
        return out

    def G_plus(self, zeta, z):
        out = 0.5 * (cmath.log(jacobi_theta1(zeta - z.conjugate(), self.tau))
                     - cmath.log(jacobi_theta1(zeta - z, self.tau)))
        if self.kind == "dirichlet":
            # analytic-in-zeta completion of -4 pi^2 Im zeta Im z / r
            out += 1j * math.pi**2 * z.imag * 2.0 * zeta / self.r * 1j
        return out

    def u_mixed_diag(self, z):
        return self._q3 / 6.0 + math.pi**2 / self.r

    def vector_field(self, p, z):
        """Loewner field v_p(z) = -2 theta'(z-p)/theta(z-p)."""
        return -2.0 * self._lt(np.asarray(z, dtype=complex) - p)


class CircularGreen(GreenEvaluatorBase):
    """Green's functions of a circular domain.

    method "sk": prime-function product plus harmonic measures,
    method "theta": Riemann theta on the Schottky double,
    method "colloc": direct boundary collocation for the harmonic corrector.
    """

    def __init__(self, domain: CircularDomain, kind: str = "dirichlet",
                 method: str = "sk", max_level: int = 8,
                 solver: HarmonicSolution | None = None,
                 period_data: PeriodData | None = None,
                 sk: SchottkyProduct | None = None):
        if kind not in ("dirichlet", "er"):
            raise ValueError("kind must be 'dirichlet' or 'er'")
        if method not in ("sk", "theta", "colloc"):
            raise ValueError("method must be 'sk', 'theta' or 'colloc'")
        self.domain = domain
        self.kind = kind
        self.method = method
        g = domain.genus
        self.sk = sk if sk is not None else SchottkyProduct(domain, max_level)
        if g >= 1:
            self.solver = solver if solver is not None else solve_harmonic_measures(domain)
            self._Pinv = np.linalg.inv(self.solver.P)
        else:
            self.solver = None
            self._Pinv = None
        self.pd = period_data
        if method == "theta" and self.pd is None:
            self.pd = build_period_data(domain, solver=self.solver)
        self._aj_cache: dict[complex, np.ndarray] = {}
        self._colloc_cache: dict[complex, HarmonicSolution] = {}

    # -- harmonic-measure correction -----------------------------------------

    def _hm_term(self, zeta, z) -> float:
        if self.domain.genus == 0:
            return 0.0
        h1 = self.solver.h(complex(zeta))
        h2 = self.solver.h(complex(z))
        return float(h1 @ self._Pinv @ h2)

    # -- Schottky product route ----------------------------------------------

    def _G_er_sk(self, zeta, z) -> float:
        zeta, z = complex(zeta), complex(z)
        num = z * self.sk.omega(zeta, 1.0 / z.conjugate())
        den = self.sk.omega(zeta, z)
        return math.log(abs(num / den))

    def _G_er_sk_plus(self, zeta, z) -> complex:
        zeta, z = complex(zeta), complex(z)
        val = (cmath.log(z) + cmath.log(self.sk.omega(zeta, 1.0 / z.conjugate()))
               - cmath.log(self.sk.omega(zeta, z)))
        return 0.5 * val

    # -- theta route -----------------------------------------------------------

    def _aj(self, z: complex) -> np.ndarray:
        key = complex(z)
        val = self._aj_cache.get(key)
        if val is None:
            val = self.pd.abel_jacobi(key)
            if len(self._aj_cache) > 4096:
                self._aj_cache.clear()
            self._aj_cache[key] = val
        return val

    def _G_er_theta(self, zeta, z) -> float:
        pd = self.pd
        zeta, z = complex(zeta), complex(z)
        az, azs = self._aj(z), self._aj(1.0 / z.conjugate())
        aw, aws = self._aj(zeta), self._aj(1.0 / zeta.conjugate())
        e = pd.e
        num = pd.theta(az - aws - e) * pd.theta(azs - aw - e)
        den = pd.theta(az - aw - e) * pd.theta(azs - aws - e)
        if min(abs(pd.theta(az - aw - e)), abs(pd.theta(azs - aws - e))) < 1e-12:
            raise ArithmeticError(
                "theta characteristic degenerates at this configuration; "
                "re-choose e in build_period_data"
            )
        return 0.5 * math.log(abs(num / den))

    def _diri_corr_theta(self, zeta, z) -> float:
        pd = self.pd
        zeta, z = complex(zeta), complex(z)
        dz = np.imag(self._aj(1.0 / z.conjugate()) - self._aj(z))
        dw = np.imag(self._aj(1.0 / zeta.conjugate()) - self._aj(zeta))
        M = np.linalg.inv(pd.tau.imag)
        return math.pi * float(dw @ M @ dz)

    # -- collocation route -----------------------------------------------------

    def _colloc_corrector(self, z: complex):
        key = complex(z)
        sol = self._colloc_cache.get(key)
        if sol is None:
            sol = _solve_green_corrector(self.domain, key, self.kind,
                                         self.solver.n_terms if self.solver else 24)
            if len(self._colloc_cache) > 1024:
                self._colloc_cache.clear()
            self._colloc_cache[key] = sol
        return sol

    # -- public interface --------------------------------------------------------

    def G(self, zeta, z) -> float:
        self._check_args(zeta, z)
        zeta, z = complex(zeta), complex(z)
        if self.method == "colloc":
            corr = self._colloc_corrector(z)
            return -math.log(abs(zeta - z)) + corr(zeta)
        if self.method == "theta":
            out = self._G_er_theta(zeta, z)
            if self.kind == "dirichlet":
                out -= self._diri_corr_theta(zeta, z)
            return out
        out = self._G_er_sk(zeta, z)
        if self.kind == "dirichlet":
            out -= self._hm_term(zeta, z)
        return out

    def G_plus(self, zeta, z) -> complex:
        zeta, z = complex(zeta), complex(z)
        val = self._G_er_sk_plus(zeta, z)
        if self.kind == "dirichlet" and self.domain.genus >= 1:
            wz = self.solver.w_hat(zeta)
            val += 0.25j * complex(wz @ self._Pinv @ self.solver.h(z)) * 2.0
        return val

    def dG1(self, zeta, z) -> complex:
        zeta, z = complex(zeta), complex(z)
        sk = self.sk
        out = 0.5 * (sk.log1(zeta, 1.0 / z.conjugate()) - sk.log1(zeta, z))
        if self.kind == "dirichlet" and self.domain.genus >= 1:
            wd = self.solver.w_hat_deriv(zeta)
            out -= complex(wd @ self._Pinv @ self.solver.h(z)) / 2.0j
        return out

    def d2G1(self, zeta, z) -> complex:
        zeta, z = complex(zeta), complex(z)
        sk = self.sk
        out = 0.5 * (sk.log11(zeta, 1.0 / z.conjugate()) - sk.log11(zeta, z))
        if self.kind == "dirichlet" and self.domain.genus >= 1:
            wdd = self.solver.w_hat_deriv(zeta, order=2)
            out -= complex(wdd @ self._Pinv @ self.solver.h(z)) / 2.0j
        return out

    def dG12(self, zeta, z) -> complex:
        zeta, z = complex(zeta), complex(z)
        out = -0.5 * self.sk.log12(zeta, z)
        if self.kind == "dirichlet" and self.domain.genus >= 1:
            wd1 = self.solver.w_hat_deriv(zeta)
            wd2 = self.solver.w_hat_deriv(z)
            out += complex(wd1 @ self._Pinv @ wd2) / 4.0
        return out

    def u_mixed_diag(self, z) -> complex:
        z = complex(z)
        # -(1/2) * (word part of M) at the diagonal + harmonic-measure term
        out = -0.5 * _sk_log12_regular(self.sk, z)
        if self.kind == "dirichlet" and self.domain.genus >= 1:
            wd = self.solver.w_hat_deriv(z)
            out += complex(wd @ self._Pinv @ wd) / 4.0
        return out


def _sk_log12_regular(sk: SchottkyProduct, z: complex) -> complex:
    """M(zeta, z) - 1/(zeta-z)^2 at zeta = z (word sum only)."""
    zeta = np.asarray(z, dtype=complex)
    if sk.n_words == 0:
        return 0.0 + 0.0j
    tz, td = sk._theta(zeta), sk._theta_d(zeta)
    terms = 2.0 * td / (tz - zeta[..., None]) ** 2
    return complex(np.sum(terms, axis=-1))


def _solve_green_corrector(domain: CircularDomain, z: complex, kind: str,
                           n_terms: int = 24):
    """Harmonic corrector u with G = -log|zeta - z| + u(zeta) by collocation.

    Dirichlet: u = log|zeta - z| on every boundary component.
    ER: u = log|zeta - z| on C_0 and log|zeta - z| + const_j on C_j, with the
    constants determined by the flux-free condition (no log basis terms).
    """
    g = domain.genus
    m = 4 * (2 * n_terms + 2)
    ang = 2.0 * math.pi * (np.arange(m) + 0.5) / m
    nodes = [np.exp(1j * ang)]
    labels = [np.zeros(m, dtype=int)]
    for l, c in enumerate(domain.inner_circles):
        nodes.append(c.center + c.radius * np.exp(1j * ang))
        labels.append(np.full(m, l + 1, dtype=int))
    nodes = np.concatenate(nodes)
    labels = np.concatenate(labels)

    centres = np.array([c.center for c in domain.inner_circles]) if g else np.empty(0)
    radii = np.array([c.radius for c in domain.inner_circles]) if g else np.empty(0)

    def basis(pts):
        pts = np.asarray(pts, dtype=complex)
        cols = [np.ones_like(pts)]
        if kind == "dirichlet":
            for l in range(g):
                cols.append(np.log(np.abs(pts - centres[l])).astype(complex))
        for l in range(g):
            w = radii[l] / (pts - centres[l])
            p = w.copy()
            for _ in range(n_terms):
                cols.append(p.copy())
                p = p * w
        p = pts.astype(complex).copy()
        for _ in range(n_terms):
            cols.append(p.copy())
            p = p * pts
        return np.stack(cols, axis=-1)

    cols = basis(nodes)
    n_log = g if kind == "dirichlet" else 0
    design_parts = [cols.real, -cols[:, 1 + n_log:].imag]
    if kind == "er":
        # unknown boundary constants gamma_j on the inner circles
        gam = np.zeros((len(nodes), g))
        for l in range(g):
            gam[labels == l + 1, l] = -1.0
        design_parts.append(gam)
    design = np.concatenate(design_parts, axis=1)
    rhs = np.log(np.abs(nodes - z))
    coef, *_ = np.linalg.lstsq(design, rhs, rcond=None)

    nb = cols.shape[1]
    c_re = coef[:nb]
    c_im = np.zeros(nb)
    c_im[1 + n_log:] = coef[nb:2 * nb - 1 - n_log]
    cc = c_re + 1j * c_im

    def corrector(zeta):
        return float(np.real(basis(np.asarray(zeta, dtype=complex)) @ cc))

    corrector.gammas = coef[2 * nb - 1 - n_log:] if kind == "er" else None
    return corrector


# ---------------------------------------------------------------------------
# Module-level operations


def make_evaluator(domain, kind: str = "dirichlet", method: str | None = None,
                   **kw):
    if isinstance(domain, HalfPlane):
        return HalfPlaneGreen(kind)
    if isinstance(domain, Cylinder):
        return CylinderGreen(domain, kind)
    if isinstance(domain, CircularDomain):
        return CircularGreen(domain, kind, method or "sk", **kw)
    if isinstance(domain, ChordalStandardDomain):
        from .loewner import ChordalGreen  # circular model machinery

        return ChordalGreen(domain, kind, **kw)
    raise TypeError("no Green evaluator for %r" % type(domain).__name__)


def green(ev: GreenEvaluatorBase, zeta, z) -> float:
    """G(zeta, z) for the evaluator's kind and method."""
    return ev.G(complex(zeta), complex(z))


def green_dirichlet_from_er(ev_er: GreenEvaluatorBase, solver_or_pd, zeta, z) -> float:
    """G^Diri = G^ER - <h(zeta), P^{-1} h(z)> (harmonic-measure correction)."""
    if ev_er.kind != "er":
        raise ValueError("green_dirichlet_from_er expects an ER evaluator")
    if isinstance(solver_or_pd, PeriodData):
        solver = solver_or_pd.solver
    else:
        solver = solver_or_pd
    h1 = solver.h(complex(zeta))
    h2 = solver.h(complex(z))
    return ev_er.G(complex(zeta), complex(z)) - float(h1 @ np.linalg.inv(solver.P) @ h2)


def green_theta_route(pd: PeriodData, domain: CircularDomain, kind: str,
                      zeta, z) -> float:
    ev = CircularGreen(domain, kind, "theta", period_data=pd, solver=pd.solver)
    return ev.G(complex(zeta), complex(z))


def green_complex(ev: GreenEvaluatorBase, zeta, z) -> complex:
    """G^+ = (G + i G~)/2; imaginary part fixed by the module path convention."""
    return ev.G_plus(complex(zeta), complex(z))


def er_poisson(ev, z, q, complexified: bool = False):
    """ER Poisson kernel H^{ER}(z, q) for q on the outer boundary C_0.

    The complex variant returns the analytic completion H^{ER+} with
    Re H^{ER+} = H^{ER}/2 ... i.e. H^{ER+} = (H^{ER} + i Htilde)/2.
    """
    z, q = complex(z), complex(q)
    if isinstance(ev, HalfPlaneGreen):
        if abs(q.imag) > 1e-12:
            raise ValueError("q must lie on the real axis")
        hplus = 1j / (z - q)
    elif isinstance(ev, CylinderGreen):
        if abs(q.imag) > 1e-12:
            raise ValueError("q must lie on the lower cylinder boundary (Im q = 0)")
        hplus = 1j * (jacobi_theta1(z - q, ev.tau, 1) / jacobi_theta1(z - q, ev.tau))
    elif isinstance(ev, CircularGreen):
        if abs(abs(q) - 1.0) > 1e-10:
            raise ValueError("q must lie on the unit circle C_0")
        W = -0.5 + q * ev.sk.log1(q, z)
        hplus = 0.5 * W
    else:
        hplus = ev.er_poisson_plus(z, q)  # chordal backend provides it
    return hplus if complexified else 2.0 * hplus.real


def _diag_limit(ev, z, sign: float):
    vals = []
    for h in (1e-3, 5e-4):
        acc = 0.0
        for d in (1.0, 1j, -1.0, -1j):
            zeta = z + h * d
            acc += ev.G(zeta, z) + math.log(abs(zeta - z))
        vals.append(acc / 4.0)
    # O(h^2) Richardson: v(h) = v0 + c h^2
    v = (4.0 * vals[1] - vals[0]) / 3.0
    if abs(vals[1] - vals[0]) > 1e-4:
        raise ArithmeticError("diagonal extrapolation did not stabilize: %r" % (vals,))
    return v


def domain_constant(ev_dirichlet, z) -> float:
    """d_D(z) = lim_{zeta->z} [G^Diri(zeta,z) + log|zeta-z|]."""
    if ev_dirichlet.kind != "dirichlet":
        raise ValueError("domain_constant expects a Dirichlet evaluator")
    return _diag_limit(ev_dirichlet, complex(z), 1.0)


def conformal_radius(ev_er, z) -> float:
    """c_D(z) = lim_{zeta->z} [G^ER(zeta,z) + log|zeta-z|]."""
    if ev_er.kind != "er":
        raise ValueError("conformal_radius expects an ER evaluator")
    return _diag_limit(ev_er, complex(z), 1.0)


def bipolar_green(pd: PeriodData, p, q, z) -> float:
    """Bipolar Green's function on the Schottky double via the theta formula."""
    p, q, z = complex(p), complex(q), complex(z)
    if p == q:
        raise ValueError("bipolar Green's function needs distinct poles")
    ap, aq, az = pd.abel_jacobi(p), pd.abel_jacobi(q), pd.abel_jacobi(z)
    e = pd.e
    tq = pd.theta(az - aq - e)
    tp = pd.theta(az - ap - e)
    if min(abs(tq), abs(tp)) < 1e-13:
        raise ArithmeticError("theta characteristic degenerates for bipolar Green")
    M = np.linalg.inv(pd.tau.imag)
    corr = 2.0 * math.pi * float(np.imag(ap - aq) @ M @ np.imag(az))
    return math.log(abs(tq / tp)) - corr
