"""Special functions on circular domains and their Schottky doubles.

Contents:

* Schottky-Klein prime function as a truncated product over Schottky-group
  words, together with the analytic log-derivative series used by the
  Green's function and Loewner-field formulas;
* Riemann theta functions (value / gradient / Hessian) with a tail-bound
  truncation radius;
* Jacobi theta_1 and the Weierstrass zeta function (cylinder closed forms);
* harmonic measures of circular domains by boundary collocation with a
  Laurent + logarithm basis, the harmonic-measure period matrix P, the
  surface period matrix tau = (i/pi) P^{-1}, and the Abel-Jacobi map by
  path integration of the normalized differentials.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .domains import Circle, CircularDomain, DomainError, enumerate_schottky

__all__ = [
    "SchottkyProduct",
    "sk_prime",
    "ThetaTruncation",
    "riemann_theta",
    "riemann_theta_grad",
    "riemann_theta_hess",
    "riemann_theta_quasi_period",
    "jacobi_theta1",
    "weierstrass_zeta",
    "HarmonicSolution",
    "solve_harmonic_measures",
    "harmonic_measures",
    "period_matrix_P",
    "PeriodData",
    "build_period_data",
    "abel_jacobi",
    "AbelJacobiPath",
    "holomorphic_derivs",
]


# ---------------------------------------------------------------------------
# Schottky-Klein prime function


class SchottkyProduct:
    """Truncated Schottky product for a circular domain.

    Stores the composed Mobius maps (normalized, ad - bc = 1) for all words
    up to ``max_level`` and evaluates the prime function

        omega(zeta, z) = (zeta - z) prod (theta(zeta)-z)(theta(z)-zeta)
                                         / ((theta(zeta)-zeta)(theta(z)-z))

    and the log-derivative series

        L(zeta, z)  = d/dzeta log omega,
        M(zeta, z)  = d^2/(dzeta dz) log omega,
        L1(zeta, z) = d^2/dzeta^2 log omega.

    The word set defaults to one representative of every inverse pair
    {w, w^-1}, which reproduces the full product (each factor is invariant
    under w -> w^-1); at genus <= 1 this coincides with the plain positive
    semigroup.
    """

    def __init__(self, domain: CircularDomain, max_level: int = 8,
                 convention: str = "paired"):
        self.domain = domain
        self.max_level = max_level
        self.convention = convention
        if domain.genus == 0:
            coeffs = np.empty((4, 1), dtype=complex)
            self.n_words = 0
        elif domain.genus == 1:
            # single generator: words are theta_1^k, k = 1..max_level
            c = domain.inner_circles[0]
            det = c.radius**2 - (c.center * c.center.conjugate()).real
            m = np.array([[det, c.center], [-c.center.conjugate(), 1.0]],
                         dtype=complex)
            m /= np.sqrt(np.linalg.det(m))
            coeffs = np.empty((4, max_level), dtype=complex)
            acc = m.copy()
            coeffs[:, 0] = acc.ravel()
            for k in range(1, max_level):
                acc = acc @ m
                acc /= np.sqrt(np.linalg.det(acc))
                coeffs[:, k] = acc.ravel()
            self.n_words = max_level
        else:
            words = enumerate_schottky(domain, max_level, convention)
            self.n_words = len(words)
            coeffs = np.empty((4, max(1, self.n_words)), dtype=complex)
            for i, (_, m) in enumerate(words):
                coeffs[:, i] = (m.a, m.b, m.c, m.d)
        self._a, self._b, self._c, self._d = coeffs

    # -- elementary map evaluations over all words, vectorized in z ----------

    def _theta(self, z):
        z = np.asarray(z, dtype=complex)[..., None]
        return (self._a * z + self._b) / (self._c * z + self._d)

    def _theta_d(self, z):
        z = np.asarray(z, dtype=complex)[..., None]
        return 1.0 / (self._c * z + self._d) ** 2

    def _theta_dd(self, z):
        z = np.asarray(z, dtype=complex)[..., None]
        return -2.0 * self._c / (self._c * z + self._d) ** 3

    # -- prime function and log derivatives ---------------------------------

    def omega(self, zeta, z):
        """Prime function omega(zeta, z); broadcasts over numpy arrays."""
        zeta = np.asarray(zeta, dtype=complex)
        z = np.asarray(z, dtype=complex)
        base = zeta - z
        if self.n_words == 0:
            return base if base.ndim else complex(base)
        tz, tw = self._theta(zeta), self._theta(z)
        num = (tz - z[..., None]) * (tw - zeta[..., None])
        den = (tz - zeta[..., None]) * (tw - z[..., None])
        out = base * np.prod(num / den, axis=-1)
        return out if out.ndim else complex(out)

    def log1(self, zeta, z):
        """L(zeta, z) = d/dzeta log omega(zeta, z)."""
        zeta = np.asarray(zeta, dtype=complex)
        z = np.asarray(z, dtype=complex)
        out = 1.0 / (zeta - z)
        if self.n_words:
            tz = self._theta(zeta)
            td = self._theta_d(zeta)
            tw = self._theta(z)
            terms = (td / (tz - z[..., None])
                     - 1.0 / (tw - zeta[..., None])
                     - (td - 1.0) / (tz - zeta[..., None]))
            out = out + np.sum(terms, axis=-1)
        return out if out.ndim else complex(out)

    def log12(self, zeta, z):
        """M(zeta, z) = d^2/(dzeta dz) log omega; symmetric in its arguments."""
        zeta = np.asarray(zeta, dtype=complex)
        z = np.asarray(z, dtype=complex)
        out = 1.0 / (zeta - z) ** 2
        if self.n_words:
            tz, td = self._theta(zeta), self._theta_d(zeta)
            tw, twd = self._theta(z), self._theta_d(z)
            terms = (td / (tz - z[..., None]) ** 2
                     + twd / (tw - zeta[..., None]) ** 2)
            out = out + np.sum(terms, axis=-1)
        return out if out.ndim else complex(out)

    def log11(self, zeta, z):
        """d^2/dzeta^2 log omega(zeta, z)."""
        zeta = np.asarray(zeta, dtype=complex)
        z = np.asarray(z, dtype=complex)
        out = -1.0 / (zeta - z) ** 2
        if self.n_words:
            tz = self._theta(zeta)
            td = self._theta_d(zeta)
            tdd = self._theta_dd(zeta)
            tw = self._theta(z)
            a = tdd / (tz - z[..., None]) - td**2 / (tz - z[..., None]) ** 2
            b = -1.0 / (tw - zeta[..., None]) ** 2
            c = (-tdd / (tz - zeta[..., None])
                 + (td - 1.0) ** 2 / (tz - zeta[..., None]) ** 2)
            out = out + np.sum(a + b + c, axis=-1)
        return out if out.ndim else complex(out)

    def log122(self, zeta, z):
        """d/dz M(zeta, z) = d^3/(dzeta dz^2) log omega."""
        zeta = np.asarray(zeta, dtype=complex)
        z = np.asarray(z, dtype=complex)
        out = 2.0 / (zeta - z) ** 3
        if self.n_words:
            tz, td = self._theta(zeta), self._theta_d(zeta)
            tw, twd, twdd = self._theta(z), self._theta_d(z), self._theta_dd(z)
            terms = (2.0 * td / (tz - z[..., None]) ** 3
                     + twdd / (tw - zeta[..., None]) ** 2
                     - 2.0 * twd**2 / (tw - zeta[..., None]) ** 3)
            out = out + np.sum(terms, axis=-1)
        return out if out.ndim else complex(out)


def sk_prime(domain: CircularDomain, zeta, z, max_level: int = 8,
             convention: str = "paired"):
    """Schottky-Klein prime function omega(zeta, z), truncated product."""
    prod = SchottkyProduct(domain, max_level, convention)
    out = prod.omega(zeta, z)
    if np.ndim(out) == 0 and not np.isfinite(complex(out)):
        raise ZeroDivisionError("degenerate Schottky configuration at (%s, %s)" % (zeta, z))
    return out


# ---------------------------------------------------------------------------
# Riemann theta


@dataclass(frozen=True)
class ThetaTruncation:
    """Lattice-sum truncation ||N||_inf <= radius with an absolute error target."""

    radius: int
    target_abs_err: float = 1e-12

    @staticmethod
    def for_tau(tau, target_abs_err: float = 1e-12, im_z_max: float = 0.0,
                max_radius: int = 80) -> "ThetaTruncation":
        tau = np.atleast_2d(np.asarray(tau, dtype=complex))
        lam = np.linalg.eigvalsh(tau.imag)
        lam_min = float(lam[0])
        if lam_min <= 0:
            raise ValueError("Im tau must be positive definite")
        g = tau.shape[0]
        for radius in range(2, max_radius + 1):
            count = (2 * radius + 1) ** g
            bound = count * math.exp(-math.pi * lam_min * radius**2
                                     + 2.0 * math.pi * im_z_max * g * radius)
            if bound < target_abs_err:
                return ThetaTruncation(radius, target_abs_err)
        return ThetaTruncation(max_radius, target_abs_err)


def _lattice(g: int, radius: int) -> np.ndarray:
    rng = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([rng] * g), indexing="ij")
    return np.stack([a.ravel() for a in grids], axis=-1)  # (count, g)


def _theta_terms(Z, tau, trunc: ThetaTruncation):
    Z = np.atleast_1d(np.asarray(Z, dtype=complex))
    tau = np.atleast_2d(np.asarray(tau, dtype=complex))
    g = Z.shape[0]
    if tau.shape != (g, g):
        raise ValueError("tau must be g x g with g = len(Z)")
    if np.linalg.eigvalsh(tau.imag)[0] <= 0:
        raise ValueError("Im tau must be positive definite")
    N = _lattice(g, trunc.radius)
    quad = np.einsum("ij,jk,ik->i", N, tau, N)
    expo = 2.0j * math.pi * (N @ Z + 0.5 * quad)
    return N, np.exp(expo)


def riemann_theta(Z, tau, trunc: ThetaTruncation | None = None) -> complex:
    """Theta(Z | tau) = sum over N in Z^g of exp(2 pi i (Z.N + N.tau N / 2))."""
    Zv = np.atleast_1d(np.asarray(Z, dtype=complex))
    if trunc is None:
        trunc = ThetaTruncation.for_tau(tau, im_z_max=float(np.max(np.abs(Zv.imag))))
    _, terms = _theta_terms(Zv, tau, trunc)
    return complex(np.sum(terms))


def riemann_theta_grad(Z, tau, trunc: ThetaTruncation | None = None) -> np.ndarray:
    Zv = np.atleast_1d(np.asarray(Z, dtype=complex))
    if trunc is None:
        trunc = ThetaTruncation.for_tau(tau, im_z_max=float(np.max(np.abs(Zv.imag))))
    N, terms = _theta_terms(Zv, tau, trunc)
    return 2.0j * math.pi * (N * terms[:, None]).sum(axis=0)


def riemann_theta_hess(Z, tau, trunc: ThetaTruncation | None = None) -> np.ndarray:
    Zv = np.atleast_1d(np.asarray(Z, dtype=complex))
    if trunc is None:
        trunc = ThetaTruncation.for_tau(tau, im_z_max=float(np.max(np.abs(Zv.imag))))
    N, terms = _theta_terms(Zv, tau, trunc)
    return (2.0j * math.pi) ** 2 * np.einsum("ij,ik,i->jk", N, N, terms)


def riemann_theta_quasi_period(Z, tau, N, trunc: ThetaTruncation | None = None,
                               rel_tol: float = 1e-9) -> complex:
    """Theta(Z + tau N), with the quasi-periodicity identity checked internally."""
    Zv = np.atleast_1d(np.asarray(Z, dtype=complex))
    tau = np.atleast_2d(np.asarray(tau, dtype=complex))
    Nv = np.asarray(N, dtype=float)
    shifted = Zv + tau @ Nv
    if trunc is None:
        im_max = float(max(np.max(np.abs(Zv.imag)), np.max(np.abs(shifted.imag))))
        trunc = ThetaTruncation.for_tau(tau, im_z_max=im_max)
    lhs = riemann_theta(shifted, tau, trunc)
    phase = np.exp(-2.0j * math.pi * (Zv @ Nv + 0.5 * Nv @ tau @ Nv))
    rhs = phase * riemann_theta(Zv, tau, trunc)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    if abs(lhs - rhs) > rel_tol * scale + trunc.target_abs_err:
        raise ArithmeticError(
            "theta quasi-periodicity self-test failed: |lhs-rhs|/|lhs| = %g"
            % (abs(lhs - rhs) / scale)
        )
    return lhs


# ---------------------------------------------------------------------------
# Jacobi theta_1 and Weierstrass zeta


def jacobi_theta1(z, modular, derivative_order: int = 0):
    """theta_1(z | tau) in the convention with zeros on Z + tau Z.

    Series 2 sum (-1)^n q^{(n+1/2)^2} sin((2n+1) pi z), q = exp(i pi tau);
    z-derivatives up to order 3.
    """
    tau = complex(modular)
    if tau.imag <= 0:
        raise ValueError("modular parameter must have positive imaginary part")
    if derivative_order not in (0, 1, 2, 3):
        raise ValueError("derivative_order must be in 0..3")
    z = np.asarray(z, dtype=complex)
    q_log = 1j * math.pi * tau  # log q
    # choose n_max so that |q|^{(n+1/2)^2} e^{(2n+1) pi |Im z|} < 1e-20
    imz = float(np.max(np.abs(z.imag))) if z.size else 0.0
    a = -q_log.real  # pi Im tau > 0
    n_max = 4
    while (n_max + 0.5) ** 2 * a - (2 * n_max + 1) * math.pi * imz < 46.0 and n_max < 400:
        n_max += 1
    n = np.arange(0, n_max + 1)
    coeff = (-1.0) ** n * np.exp(q_log * (n + 0.5) ** 2)
    k = (2 * n + 1) * math.pi
    kz = np.multiply.outer(z, k)
    if derivative_order == 0:
        terms = np.sin(kz)
        fac = 1.0
    elif derivative_order == 1:
        terms, fac = np.cos(kz), k
    elif derivative_order == 2:
        terms, fac = -np.sin(kz), k**2
    else:
        terms, fac = -np.cos(kz), k**3
    out = 2.0 * np.sum(coeff * fac * terms, axis=-1)
    return out if np.ndim(out) else complex(out)


def weierstrass_zeta(z, lattice=(1.0, None), modular=None):
    """Weierstrass zeta for the lattice spanned by (2 omega_1, 2 omega_2).

    ``lattice`` is the pair (2 omega_1, 2 omega_2); alternatively pass
    ``modular`` = omega_2/omega_1 with the first period normalized to 1.
    Uses zeta(v; 1, tau) = theta1'(v)/theta1(v) + (1/3)(theta1'''(0)/theta1'(0)) v
    after rescaling.
    """
    if modular is not None:
        p1, tau = 1.0 + 0.0j, complex(modular)
    else:
        p1, p2 = complex(lattice[0]), complex(lattice[1])
        tau = p2 / p1
        if tau.imag < 0:
            p2, tau = -p2, -tau
    if tau.imag <= 0:
        raise ValueError("lattice periods must be independent (Im tau > 0)")
    z = np.asarray(z, dtype=complex)
    v = z / p1
    # reduce to the fundamental cell around 0 for series accuracy
    n2 = np.round((v.imag / tau.imag))
    v_red = v - n2 * tau
    n1 = np.round(v_red.real - v_red.imag * tau.real / tau.imag)
    v_red = v_red - n1
    if np.any(np.abs(jacobi_theta1(v_red, tau)) < 1e-300):
        raise ZeroDivisionError("Weierstrass zeta evaluated at a lattice point")
    q3 = jacobi_theta1(0.0, tau, 3) / jacobi_theta1(0.0, tau, 1)
    eta1 = -q3 / 6.0  # zeta(1/2) for the (1, tau) lattice
    val = (jacobi_theta1(v_red, tau, 1) / jacobi_theta1(v_red, tau)
           - (q3 / 3.0) * v_red)
    # quasi-periodicity: zeta(v + m + n tau) = zeta(v) + 2 m eta1 + 2 n eta2
    eta2 = eta1 * tau - 1j * math.pi  # Legendre relation, omega_1 = 1/2
    val = val + 2.0 * n1 * eta1 + 2.0 * n2 * eta2
    out = val / p1
    return out if np.ndim(out) else complex(out)


# ---------------------------------------------------------------------------
# Cauchy-ring differentiation of holomorphic callables


def holomorphic_derivs(f, z0: complex, order: int, radius: float = 1e-2,
                       n_nodes: int = 32) -> list[complex]:
    """Taylor derivatives f^(k)(z0), k = 0..order, via a discrete Cauchy integral.

    ``f`` must be holomorphic on the closed disk of the given radius and accept
    a complex numpy array.
    """
    k = np.arange(n_nodes)
    w = np.exp(2j * math.pi * k / n_nodes)
    vals = np.asarray(f(z0 + radius * w), dtype=complex)
    coeffs = np.fft.fft(vals) / n_nodes  # c_m ~ a_m radius^m
    out = []
    fact = 1.0
    for m in range(order + 1):
        if m > 0:
            fact *= m
        out.append(complex(coeffs[m] / radius**m * fact))
    return out


# ---------------------------------------------------------------------------
# Harmonic measures by boundary collocation


class HarmonicSolution:
    """Collocation solution for the harmonic measures of a circular domain.

    Each harmonic measure is represented as h_j = Re A_j(z) with

        A_j(z) = x0 + sum_l b_l log(z - delta_l)
               + sum_{l,n} c_{ln} (r_l/(z - delta_l))^n + sum_n d_n z^n,

    b_l real and c, d complex.  The analytic completion used by the
    Abel-Jacobi machinery is w_j = i A_j (so that Im w_j = h_j).
    """

    def __init__(self, domain: CircularDomain, n_terms: int = 24,
                 oversample: int = 4):
        g = domain.genus
        if g < 1:
            raise DomainError("harmonic measures need at least one inner circle")
        self.domain = domain
        self.n_terms = n_terms
        centres = np.array([c.center for c in domain.inner_circles])
        radii = np.array([c.radius for c in domain.inner_circles])
        self._centres, self._radii = centres, radii

        nodes, labels = [], []
        m = oversample * (2 * n_terms + 2)
        ang = 2.0 * math.pi * (np.arange(m) + 0.5) / m
        nodes.append(np.exp(1j * ang))
        labels.append(np.zeros(m, dtype=int))
        for l in range(g):
            nodes.append(centres[l] + radii[l] * np.exp(1j * ang))
            labels.append(np.full(m, l + 1, dtype=int))
        nodes = np.concatenate(nodes)
        labels = np.concatenate(labels)

        cols = self._basis(nodes)  # complex analytic basis, shape (npts, nbasis)
        A = cols.real  # h = Re A with real coefficient vector handled below
        # complex coefficients c = alpha + i beta give Re[(alpha+i beta) u]
        #   = alpha Re u - beta Im u; build the real design matrix accordingly.
        design = np.concatenate([cols.real, -cols.imag], axis=1)
        keep = self._real_coeff_mask()
        design = design[:, keep]
        rhs = np.zeros((len(nodes), g))
        for j in range(g):
            rhs[:, j] = (labels == j + 1).astype(float)
        coef, *_ = np.linalg.lstsq(design, rhs, rcond=None)
        full = np.zeros((2 * self._n_basis, g))
        full[keep] = coef
        self._coef = full[: self._n_basis] + 1j * full[self._n_basis:]
        resid = design @ coef - rhs
        self.boundary_error = float(np.max(np.abs(resid)))

        # periods: P_{kj} = -(coefficient of log(z - delta_k) in A_j)
        P = np.empty((g, g))
        for j in range(g):
            for k in range(g):
                P[k, j] = -self._coef[1 + k, j].real
        self.P_raw = P
        self.P = 0.5 * (P + P.T)
        self.symmetry_defect = float(np.max(np.abs(P - P.T)))

    # -- basis layout: [const, logs (g), inner Laurent (g*N), outer powers (N)]

    def _real_coeff_mask(self):
        g = self.domain.genus
        N = self.n_terms
        nb = 1 + g + g * N + N
        self._n_basis = nb
        mask = np.ones(2 * nb, dtype=bool)
        # imaginary parts of the constant and of the log coefficients are fixed to 0
        mask[nb] = False
        for l in range(g):
            mask[nb + 1 + l] = False
        return mask

    def _basis(self, z):
        z = np.asarray(z, dtype=complex)
        g = self.domain.genus
        N = self.n_terms
        cols = [np.ones_like(z)]
        for l in range(g):
            cols.append(np.log(z - self._centres[l]))
        for l in range(g):
            w = self._radii[l] / (z - self._centres[l])
            p = w.copy()
            for _ in range(N):
                cols.append(p.copy())
                p = p * w
        p = z.copy()
        for _ in range(N):
            cols.append(p.copy())
            p = p * z
        return np.stack(cols, axis=-1)

    def _basis_deriv(self, z, order: int = 1):
        z = np.asarray(z, dtype=complex)
        g = self.domain.genus
        N = self.n_terms
        cols = [np.zeros_like(z)]
        for l in range(g):
            dz = z - self._centres[l]
            cols.append(1.0 / dz if order == 1 else -1.0 / dz**2)
        n = np.arange(1, N + 1)
        for l in range(g):
            dz = (z - self._centres[l])[..., None]
            rl = self._radii[l]
            if order == 1:
                block = -n * rl**n / dz ** (n + 1)
            else:
                block = n * (n + 1) * rl**n / dz ** (n + 2)
            cols.extend(block[..., i] for i in range(N))
        zz = z[..., None]
        if order == 1:
            block = n * zz ** (n - 1)
        else:
            block = n * (n - 1) * zz ** np.maximum(n - 2, 0)
            block[..., 0] = 0.0
        cols.extend(block[..., i] for i in range(N))
        return np.stack(cols, axis=-1)

    # -- evaluations ---------------------------------------------------------

    def analytic(self, z):
        """A_j(z) for all j; shape (..., g); principal log branches."""
        return self._basis(z) @ self._coef

    def h(self, z):
        """Harmonic measures (h_1..h_g)(z)."""
        return np.real(self.analytic(z))

    def w_hat(self, z):
        """Analytic completions w_j = i A_j with Im w_j = h_j."""
        return 1j * self.analytic(z)

    def w_hat_deriv(self, z, order: int = 1):
        return 1j * (self._basis_deriv(z, order) @ self._coef)

    def h_normal_deriv(self, z, direction):
        """Directional derivative of each h_j at z along the unit vector ``direction``."""
        return np.real(self._basis_deriv(z, 1) @ self._coef
                       * np.asarray(direction, dtype=complex)[..., None])


def solve_harmonic_measures(domain: CircularDomain, n_terms: int = 24,
                            oversample: int = 4) -> HarmonicSolution:
    return HarmonicSolution(domain, n_terms, oversample)


def harmonic_measures(domain: CircularDomain, z, solver: HarmonicSolution | None = None):
    """Vector (h_1(z), ..., h_g(z)) of harmonic measures of the inner circles."""
    zc = complex(z) if np.ndim(z) == 0 else z
    if np.ndim(zc) == 0 and not domain.contains(complex(zc), tol=-1e-12):
        raise DomainError("point %s is outside the circular domain" % (z,))
    if solver is None:
        solver = HarmonicSolution(domain)
    return solver.h(zc)


def period_matrix_P(domain: CircularDomain, solver: HarmonicSolution | None = None,
                    sym_tol: float = 1e-8) -> np.ndarray:
    """Harmonic-measure period matrix P (symmetric positive definite)."""
    if solver is None:
        solver = HarmonicSolution(domain)
    if solver.symmetry_defect > sym_tol:
        raise ArithmeticError(
            "period matrix symmetry defect %g exceeds %g (collocation too coarse)"
            % (solver.symmetry_defect, sym_tol)
        )
    return solver.P


# ---------------------------------------------------------------------------
# Abel-Jacobi map and period data


@dataclass
class AbelJacobiPath:
    """Polyline from the base point with a homology winding record."""

    waypoints: list[complex]
    homology: np.ndarray

    @property
    def endpoint(self) -> complex:
        return self.waypoints[-1]


@dataclass
class PeriodData:
    domain: CircularDomain
    P: np.ndarray
    tau: np.ndarray
    e_char: tuple[tuple[int, ...], tuple[int, ...]]
    e: np.ndarray
    p0: complex
    solver: HarmonicSolution
    trunc: ThetaTruncation

    @property
    def genus(self) -> int:
        return self.domain.genus

    def theta(self, Z):
        return riemann_theta(Z, self.tau, self.trunc)

    def theta_grad(self, Z):
        return riemann_theta_grad(Z, self.tau, self.trunc)

    # -- normalized differentials on the double ------------------------------

    def eta(self, z):
        """Vector of normalized holomorphic differentials dv_j/dz.

        Valid on the whole fundamental region: for |z| > 1 the differential is
        the Schwarz reflection across the unit circle (where Im w_j = 0).
        """
        z = np.asarray(z, dtype=complex)
        Pinv = np.linalg.inv(self.P)
        front = np.abs(z) <= 1.0
        out = np.empty(z.shape + (self.genus,), dtype=complex)
        if np.any(front):
            wd = self.solver.w_hat_deriv(np.where(front, z, 0.5j))
            out[front] = (-(1.0 / (2.0 * math.pi)) * wd @ Pinv.T)[front]
        if np.any(~front):
            zs = np.where(~front, z, 2.0)
            wd = np.conj(self.solver.w_hat_deriv(np.conj(1.0 / zs)))
            back = (1.0 / (2.0 * math.pi)) * (wd / zs[..., None] ** 2) @ Pinv.T
            out[~front] = back[~front]
        return out

    def abel_jacobi(self, z, with_path: bool = False):
        return abel_jacobi(self, self.domain, z, with_path=with_path)


def _segment_clear(domain: CircularDomain, a: complex, b: complex,
                   margin: float) -> int | None:
    """Index (1-based) of the first inner circle whose margin-disk the segment hits."""
    for l, c in enumerate(domain.inner_circles):
        d = _point_segment_distance(c.center, a, b)
        if d < c.radius * (1.0 + margin):
            return l + 1
    return None


def _point_segment_distance(p: complex, a: complex, b: complex) -> float:
    ab = b - a
    denom = abs(ab) ** 2
    if denom == 0:
        return abs(p - a)
    t = ((p - a) * ab.conjugate()).real / denom
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * ab))


def plan_path(domain: CircularDomain, p0: complex, z: complex,
              margin: float = 0.5, max_reroutes: int = 8) -> list:
    """Waypoint plan from p0 to z: straight legs and detour arcs around circles.

    Returns a list of elements: ("seg", a, b) or ("arc", center, radius, t0, t1).
    Detour arcs run at (1 + margin) times the circle radius.
    """
    plan = []
    a = complex(p0)
    target = complex(z)
    for _ in range(max_reroutes):
        hit = _segment_clear(domain, a, target, margin * 0.999)
        if hit is None:
            plan.append(("seg", a, target))
            return plan
        c = domain.inner_circles[hit - 1]
        R = c.radius * (1.0 + margin)
        if abs(target - c.center) < R:
            # target sits inside the detour disk: walk the arc to its angle,
            # then approach radially
            ang_t = cmath.phase(target - c.center)
            if abs(a - c.center) < R * (1 + 1e-12):
                ang_a = cmath.phase(a - c.center)
            else:
                ts = _segment_circle_intersections(a, target, c.center, R)
                t_in = ts[0] if ts else 1.0
                p_in = a + t_in * (target - a)
                ang_a = cmath.phase(p_in - c.center)
                plan.append(("seg", a, c.center + R * cmath.exp(1j * ang_a)))
            d = ang_t - ang_a
            while d > math.pi:
                d -= 2 * math.pi
            while d < -math.pi:
                d += 2 * math.pi
            plan.append(("arc", c.center, R, ang_a, ang_a + d))
            plan.append(("seg", c.center + R * cmath.exp(1j * ang_t), target))
            return plan
        # entry/exit: intersect the segment with the detour circle
        ts = _segment_circle_intersections(a, target, c.center, R)
        if not ts:
            # segment only grazes: nudge the endpoint check and go straight
            plan.append(("seg", a, target))
            return plan
        t_in, t_out = ts[0], ts[-1]
        p_in = a + t_in * (target - a)
        p_out = a + t_out * (target - a)
        ang_in = cmath.phase(p_in - c.center)
        ang_out = cmath.phase(p_out - c.center)
        # choose the shorter way around
        d = ang_out - ang_in
        while d > math.pi:
            d -= 2 * math.pi
        while d < -math.pi:
            d += 2 * math.pi
        plan.append(("seg", a, c.center + R * cmath.exp(1j * ang_in)))
        plan.append(("arc", c.center, R, ang_in, ang_in + d))
        a = c.center + R * cmath.exp(1j * (ang_in + d))
    raise ArithmeticError("Abel-Jacobi path rerouting failed from %s to %s" % (p0, z))


def _segment_circle_intersections(a: complex, b: complex, c: complex, R: float):
    ab = b - a
    A = abs(ab) ** 2
    B = 2.0 * ((a - c) * ab.conjugate()).real
    C = abs(a - c) ** 2 - R**2
    disc = B * B - 4 * A * C
    if disc <= 0 or A == 0:
        return []
    s = math.sqrt(disc)
    ts = sorted(((-B - s) / (2 * A), (-B + s) / (2 * A)))
    return [t for t in ts if 0.0 < t < 1.0]


_GL_NODES, _GL_WEIGHTS = roots_legendre(24)


def _gl_piece(pd: PeriodData, piece) -> np.ndarray:
    if piece[0] == "seg":
        _, a, b = piece
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        pts = mid + half * _GL_NODES.astype(complex)
        vals = pd.eta(pts)
        return half * np.tensordot(_GL_WEIGHTS, vals, axes=(0, 0))
    _, c, R, t0, t1 = piece
    mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
    ang = mid + half * _GL_NODES
    pts = c + R * np.exp(1j * ang)
    dz = 1j * R * np.exp(1j * ang)
    vals = pd.eta(pts) * dz[:, None]
    return half * np.tensordot(_GL_WEIGHTS, vals, axes=(0, 0))


def _split_piece(piece):
    if piece[0] == "seg":
        _, a, b = piece
        m = 0.5 * (a + b)
        return ("seg", a, m), ("seg", m, b)
    _, c, R, t0, t1 = piece
    tm = 0.5 * (t0 + t1)
    return ("arc", c, R, t0, tm), ("arc", c, R, tm, t1)


def _integrate_piece(pd: PeriodData, piece, tol: float, depth: int = 0) -> np.ndarray:
    coarse = _gl_piece(pd, piece)
    left, right = _split_piece(piece)
    fine = _gl_piece(pd, left) + _gl_piece(pd, right)
    if depth >= 12 or np.max(np.abs(fine - coarse)) < tol:
        return fine
    return (_integrate_piece(pd, left, 0.5 * tol, depth + 1)
            + _integrate_piece(pd, right, 0.5 * tol, depth + 1))


def _integrate_eta(pd: PeriodData, plan, tol: float = 1e-12) -> np.ndarray:
    total = np.zeros(pd.genus, dtype=complex)
    for piece in plan:
        total += _integrate_piece(pd, piece, tol)
    return total


def abel_jacobi(pd: PeriodData, domain: CircularDomain, z, with_path: bool = False):
    """Abel-Jacobi map A(z) = int_{p0}^{z} eta, along the canonical detour path.

    Points with |z| > 1 are reached on the back side of the double through the
    unit circle along the radial direction.
    """
    z = complex(z)
    if abs(z) <= 1.0:
        plan = plan_path(domain, pd.p0, z)
    else:
        zc = 1.0 / z.conjugate()  # front-side mirror point
        u = z / abs(z)
        plan = plan_path(domain, pd.p0, zc)
        # continue radially from the mirror point through the unit circle
        plan.append(("seg", zc, u))
        plan.append(("seg", u, z))
    val = _integrate_eta(pd, plan)
    if with_path:
        waypoints = [pd.p0]
        for piece in plan:
            waypoints.append(piece[2] if piece[0] == "seg" else piece[1])
        return val, AbelJacobiPath(waypoints, np.zeros(pd.genus, dtype=int))
    return val


def aj_boundary_arc(pd: PeriodData, q: complex, p: complex) -> np.ndarray:
    """Abel-Jacobi value of a point p on the unit circle, integrated along the
    boundary arc from q in the direction of increasing angle.

    Produces a branch of A(p) - A(q) that is continuous as p sweeps the full
    circle C_0 minus {q}; used by the drift machinery, where the generic
    detour-path convention would jump by lattice vectors.
    """
    tq = cmath.phase(q)
    tp = cmath.phase(p)
    while tp <= tq:
        tp += 2.0 * math.pi
    plan = [("arc", 0.0 + 0.0j, 1.0, tq, tp)]
    return _integrate_eta(pd, plan)


def a_cycle_integral(pd: PeriodData, j: int) -> np.ndarray:
    """Integral of eta around the a-cycle C_j (expected: unit vector e_j).

    The a-cycle carries the boundary orientation of the domain, which runs
    clockwise around an inner circle.
    """
    c = pd.domain.inner_circles[j - 1]
    R = c.radius * 1.25
    plan = [("arc", c.center, R, 2.0 * math.pi, 0.0)]
    return _integrate_eta(pd, plan)


def b_cycle_matrix(pd: PeriodData) -> np.ndarray:
    """Period matrix tau_{jk} = int_{b_k} eta_j from explicit b-cycle paths.

    The b_k path runs radially from a point of C_k to its mirror image across
    the unit circle; the back-side differential comes from Schwarz reflection
    only across C_0, making this an independent check of tau = (i/pi) P^{-1}.
    """
    g = pd.genus
    tau = np.empty((g, g), dtype=complex)
    for k in range(g):
        c = pd.domain.inner_circles[k]
        if abs(c.center) > 1e-12:
            u = c.center / abs(c.center)
        else:
            u = 1.0 + 0.0j
        start = c.center + c.radius * u
        stop = 1.0 / start.conjugate()
        mid = start / abs(start) if abs(start) < 1 else start
        hit = _segment_clear(pd.domain, start, stop, 0.0)
        if hit is not None and hit != k + 1:
            raise ArithmeticError("b-cycle path for circle %d blocked by circle %d"
                                  % (k + 1, hit))
        plan = [("seg", start, mid), ("seg", mid, stop)]
        tau[:, k] = _integrate_eta(pd, plan)
    return tau


def _half_period_candidates(g: int):
    def bits(n):
        for v in range(2**n):
            yield tuple((v >> i) & 1 for i in range(n))

    for m in bits(g):
        for n in bits(g):
            if sum(mi * ni for mi, ni in zip(m, n)) % 2 == 1:
                yield m, n


def build_period_data(domain: CircularDomain, n_terms: int = 24,
                      target_abs_err: float = 1e-12, p0: complex = 1.0 + 0.0j,
                      solver: HarmonicSolution | None = None) -> PeriodData:
    """Assemble the period data of the Schottky double of a circular domain."""
    g = domain.genus
    if g < 1:
        raise DomainError("period data requires genus >= 1")
    if solver is None:
        solver = HarmonicSolution(domain, n_terms=n_terms)
    P = period_matrix_P(domain, solver)
    if np.linalg.eigvalsh(P)[0] <= 0:
        raise ArithmeticError("period matrix P is not positive definite")
    tau = (1j / math.pi) * np.linalg.inv(P)
    trunc = ThetaTruncation.for_tau(tau, target_abs_err,
                                    im_z_max=float(np.max(np.abs(tau.imag))) * g)
    theta0 = abs(riemann_theta(np.zeros(g), tau, trunc))
    chosen = None
    for m, n in _half_period_candidates(g):
        e = 0.5 * (np.asarray(m, dtype=float) + tau @ np.asarray(n, dtype=float))
        val = abs(riemann_theta(e, tau, trunc))
        grad = riemann_theta_grad(e, tau, trunc)
        if val < 1e-8 * theta0 and np.linalg.norm(grad) > 1e-8 * theta0:
            chosen = ((m, n), e)
            break
    if chosen is None:
        raise ArithmeticError(
            "no usable odd half-period characteristic found for domain %r" % (domain,)
        )
    return PeriodData(domain=domain, P=P, tau=tau, e_char=chosen[0], e=chosen[1],
                      p0=complex(p0), solver=solver, trunc=trunc)
