"""Wick-calculus correlation engine for GFF field strings with background
charge, stress-tensor / Virasoro one-point functions, OPE exponentials, SLE
parameter relations and the SLE drift function.

All correlations are evaluated in the identity chart of a chordal standard
domain (upper half-plane at genus 0).  Multiply connected charts run through
a circular model and its canonical map; the chiral two-point kernel is

    B(x, y) = E Phi^+(x) Phi^+(y) = -log E(x, y) + pi <Minv A(x), conj A(y)>

with the prime form E(x, y) = Theta(A(x)-A(y)+e)/(sigma(x) sigma(y)),
sigma^2 = <grad Theta(e), eta>, transported to the chordal chart as a
(-1/2, -1/2)-differential, and Minv = (Im tau)^{-1}.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .domains import ChordalStandardDomain, CircularDomain, DomainError
from .greens import HalfPlane, HalfPlaneGreen
from .loewner import (
    CanonicalMap,
    ChordalGreen,
    fit_circular_model,
    moduli_derivative,
    vf_expansion,
)
from .special import (
    PeriodData,
    aj_boundary_arc,
    build_period_data,
    holomorphic_derivs,
    riemann_theta,
    riemann_theta_grad,
)

__all__ = [
    "SleParams",
    "sle_params",
    "BackgroundCharge",
    "DoubleDivisor",
    "FieldInsertion",
    "FieldString",
    "Phi",
    "CftContext",
    "ChargeCalculus",
    "WickEngine",
    "Upsilon",
    "phi_beta_mean",
    "correlate",
    "e_A_beta_X",
    "e_T_beta",
    "c_plus",
    "ope_exp_1pt",
    "drift_lambda",
    "e_upsilon",
    "virasoro_recursion",
]


# ---------------------------------------------------------------------------
# SLE parameter relations


@dataclass(frozen=True)
class SleParams:
    kappa: float
    a: float
    b: float
    c: float
    h12: float


def sle_params(kappa: float) -> SleParams:
    """a = sqrt(2/kappa), b = sqrt(kappa/8) - sqrt(2/kappa), c = 1 - 12 b^2."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    a = math.sqrt(2.0 / kappa)
    b = math.sqrt(kappa / 8.0) - a
    assert abs(2 * a * (a + b) - 1.0) < 1e-12
    return SleParams(kappa, a, b, 1.0 - 12.0 * b * b, 0.5 * a * a - a * b)


# ---------------------------------------------------------------------------
# Divisors and field strings


@dataclass(frozen=True)
class BackgroundCharge:
    """Real divisor sum beta_k . q_k on the outer boundary; b from neutrality."""

    atoms: tuple[tuple[float, complex], ...]
    b: float
    genus: int = 0

    @staticmethod
    def make(atoms, genus: int, b: float | None = None) -> "BackgroundCharge":
        atoms = tuple((float(bk), complex(qk)) for bk, qk in atoms)
        chi = 2 - 2 * genus
        total = sum(bk for bk, _ in atoms)
        if b is None:
            if chi == 0:
                if abs(total) > 1e-12:
                    raise DomainError("neutrality: sum beta_k must vanish at genus 1")
                b = 0.0
            else:
                b = total / chi
        if abs(total - b * chi) > 1e-12:
            raise DomainError(
                "neutrality violated: sum beta_k = %g, b chi = %g" % (total, b * chi))
        qs = [q for _, q in atoms]
        for i in range(len(qs)):
            for j in range(i + 1, len(qs)):
                if abs(qs[i] - qs[j]) < 1e-12:
                    raise DomainError("background charge points must be distinct")
        return BackgroundCharge(atoms, float(b), genus)

    @staticmethod
    def at_infinity(b: float, genus: int = 0) -> "BackgroundCharge":
        """All charge at infinity (identity chart: no finite contribution)."""
        return BackgroundCharge((), float(b), genus)

    @property
    def finite_atoms(self):
        return self.atoms


@dataclass(frozen=True)
class DoubleDivisor:
    """tau = (tau+, tau-) with neutrality sum(tau+) + sum(tau-) = 0."""

    plus_atoms: tuple[tuple[complex, complex], ...] = ()   # (tau_j^+, z_j)
    minus_atoms: tuple[tuple[complex, complex], ...] = ()  # (tau_j^-, z_j)

    def __post_init__(self):
        total = (sum(t for t, _ in self.plus_atoms)
                 + sum(t for t, _ in self.minus_atoms))
        if abs(total) > 1e-12:
            raise DomainError("double divisor violates neutrality: sum = %s" % total)

    def __add__(self, other: "DoubleDivisor") -> "DoubleDivisor":
        return DoubleDivisor(self.plus_atoms + other.plus_atoms,
                             self.minus_atoms + other.minus_atoms)


@dataclass(frozen=True)
class FieldInsertion:
    kind: str          # Phi | DPhi | J | Jbar | Abeta | Tbeta
    point: complex = 0j
    dz: int = 0
    dzbar: int = 0


def Phi(z) -> FieldInsertion:
    return FieldInsertion("Phi", complex(z))


@dataclass(frozen=True)
class FieldString:
    insertions: tuple[FieldInsertion, ...]

    def __post_init__(self):
        pts = [i.point for i in self.insertions]
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if abs(pts[i] - pts[j]) < 1e-12:
                    raise DomainError("field insertions must sit at distinct points")

    @staticmethod
    def of(*insertions) -> "FieldString":
        out = [i if isinstance(i, FieldInsertion) else Phi(i) for i in insertions]
        return FieldString(tuple(out))


# ---------------------------------------------------------------------------
# Domain context


class CftContext:
    """Green/chiral kernels of the identity chart of a chordal domain.

    ``target``: HalfPlane, CanonicalMap (circular model of the chordal
    domain), CircularDomain, or ChordalStandardDomain.
    """

    def __init__(self, target, period_data: PeriodData | None = None,
                 max_level: int = 8):
        if isinstance(target, ChordalStandardDomain):
            target = (fit_circular_model(target, max_level=max_level)
                      if target.genus else HalfPlane())
        if isinstance(target, CircularDomain):
            target = CanonicalMap(target, max_level=max_level)
        self.target = target
        if isinstance(target, HalfPlane):
            self.genus = 0
            self.green = HalfPlaneGreen("dirichlet")
            self.domain = ChordalStandardDomain(())
            self.model = None
            self.pd = None
        elif isinstance(target, CanonicalMap):
            self.genus = target.domain.genus
            self.model = target
            self.green = ChordalGreen(target, "dirichlet")
            self.domain = target.chordal_domain()
            self.pd = (period_data if period_data is not None
                       else build_period_data(target.domain, solver=target.solver))
        else:
            raise TypeError("CftContext needs a HalfPlane or CanonicalMap, got %r"
                            % type(target).__name__)
        self._aj_cache: dict[complex, np.ndarray] = {}
        if self.genus:
            self._Minv = np.linalg.inv(self.pd.tau.imag)
            self._grad_e = riemann_theta_grad(self.pd.e, self.pd.tau, self.pd.trunc)

    # -- plumbing --------------------------------------------------------------

    def vfield(self, zeta, z):
        if self.genus == 0:
            return 2.0 / (complex(zeta) - np.asarray(z, dtype=complex))
        return self.model.vector_field(complex(zeta), z)

    def vfield_deriv(self, zeta, z):
        if self.genus == 0:
            return 2.0 / (complex(zeta) - np.asarray(z, dtype=complex)) ** 2
        return self.model.vector_field_deriv(complex(zeta), z)

    def G(self, x, y) -> float:
        return self.green.G(complex(x), complex(y))

    def dG1(self, x, y) -> complex:
        return self.green.dG1(complex(x), complex(y))

    def d2G1(self, x, y) -> complex:
        return self.green.d2G1(complex(x), complex(y))

    def dG12(self, x, y) -> complex:
        return self.green.dG12(complex(x), complex(y))

    def u_mixed_diag(self, z) -> complex:
        return self.green.u_mixed_diag(complex(z))

    def pre(self, w) -> complex:
        return self.green.pre(complex(w)) if self.genus else complex(w)

    def _theta(self, Z) -> complex:
        return riemann_theta(Z, self.pd.tau, self.pd.trunc)

    def _theta_grad(self, Z) -> np.ndarray:
        return riemann_theta_grad(Z, self.pd.tau, self.pd.trunc)

    def aj(self, u: complex) -> np.ndarray:
        key = complex(u)
        val = self._aj_cache.get(key)
        if val is None:
            val = self.pd.abel_jacobi(key)
            if len(self._aj_cache) > 4096:
                self._aj_cache.clear()
            self._aj_cache[key] = val
        return val

    def aj_of_w(self, w) -> np.ndarray:
        return self.aj(self.pre(w))

    def eta_chordal(self, w) -> np.ndarray:
        u = self.pre(w)
        return self.pd.eta(np.array([u]))[0] / self.model.dF(u)

    def quad_form(self, vx, vy) -> float:
        return float(np.real(np.asarray(vx) @ self._Minv @ np.conj(np.asarray(vy))))

    def slit_distance(self, z: complex) -> float:
        d = abs(complex(z).imag)
        for zl, zr in self.domain.slits:
            if zl.real <= z.real <= zr.real:
                d = min(d, abs(z.imag - zl.imag))
            else:
                d = min(d, abs(z - zl), abs(z - zr))
        return max(d, 1e-4)

    # -- chiral script-G (2 G^+) and its second-slot derivatives ----------------

    def calG(self, x, y) -> complex:
        """2 G^+(x, y): analytic in x, principal branches."""
        return 2.0 * self.green.G_plus(complex(x), complex(y))

    def dcalG_dy(self, x, y, conj_slot: bool = False) -> complex:
        """d/dy (Wirtinger; or d/dybar) of calG(x, y)."""
        x, y = complex(x), complex(y)
        if self.genus == 0:
            return 1.0 / (x - y) if not conj_slot else -1.0 / (x - y.conjugate())
        circ = self.green.circ
        p, u = self.pre(x), self.pre(y)
        sk, solver, Pinv = circ.sk, circ.solver, circ._Pinv
        wp = solver.w_hat(p)
        if not conj_slot:
            out = (1.0 / u - sk.log1(u, p)
                   + 0.5 * complex(wp @ Pinv @ solver.w_hat_deriv(u)))
            return out / self.model.dF(u)
        us = 1.0 / u.conjugate()
        out = (-sk.log1(us, p) / u.conjugate() ** 2
               - 0.5 * complex(wp @ Pinv @ np.conj(solver.w_hat_deriv(u))))
        return out / np.conj(self.model.dF(u))

    def d2calG_dy2(self, x, y) -> complex:
        x, y = complex(x), complex(y)
        if self.genus == 0:
            return 1.0 / (x - y) ** 2
        circ = self.green.circ
        p, u = self.pre(x), self.pre(y)
        sk, solver, Pinv = circ.sk, circ.solver, circ._Pinv
        wp = solver.w_hat(p)
        inner = (-1.0 / u**2 - sk.log11(u, p)
                 + 0.5 * complex(wp @ Pinv @ solver.w_hat_deriv(u, 2)))
        Fp, Fpp = self.model.dF(u), self.model.d2F(u)
        first = (1.0 / u - sk.log1(u, p)
                 + 0.5 * complex(wp @ Pinv @ solver.w_hat_deriv(u)))
        return inner / Fp**2 - first * Fpp / Fp**3

    def d2calG_dybar2(self, x, y) -> complex:
        """Second anti-holomorphic y-derivative of calG(x, y)."""
        x, y = complex(x), complex(y)
        if self.genus == 0:
            return -1.0 / (x - y.conjugate()) ** 2
        circ = self.green.circ
        p, u = self.pre(x), self.pre(y)
        sk, solver, Pinv = circ.sk, circ.solver, circ._Pinv
        wp = solver.w_hat(p)
        ub = u.conjugate()
        us = 1.0 / ub
        inner = (sk.log11(us, p) / ub**4 + 2.0 * sk.log1(us, p) / ub**3
                 - 0.5 * complex(wp @ Pinv @ np.conj(solver.w_hat_deriv(u, 2))))
        first = (-sk.log1(us, p) / ub**2
                 - 0.5 * complex(wp @ Pinv @ np.conj(solver.w_hat_deriv(u))))
        Fpc = np.conj(self.model.dF(u))
        Fppc = np.conj(self.model.d2F(u))
        return inner / Fpc**2 - first * Fppc / Fpc**3


# ---------------------------------------------------------------------------
# Chiral kernel B, prime form, c^+


def log_prime_form(ctx: CftContext, x, y) -> complex:
    """log E(x, y) in the chordal chart (principal branches)."""
    x, y = complex(x), complex(y)
    if ctx.genus == 0:
        return cmath.log(x - y)
    ux, uy = ctx.pre(x), ctx.pre(y)
    th = ctx._theta(ctx.aj(ux) - ctx.aj(uy) + ctx.pd.e)
    s2x = complex(ctx._grad_e @ ctx.pd.eta(np.array([ux]))[0])
    s2y = complex(ctx._grad_e @ ctx.pd.eta(np.array([uy]))[0])
    val = cmath.log(th) - 0.5 * (cmath.log(s2x) + cmath.log(s2y))
    val += 0.5 * (cmath.log(ctx.model.dF(ux)) + cmath.log(ctx.model.dF(uy)))
    return val


def dlog_prime_form(ctx: CftContext, x, y) -> complex:
    """d/dx log E(x, y), exact (theta gradient + sigma/transport terms)."""
    x, y = complex(x), complex(y)
    if ctx.genus == 0:
        return 1.0 / (x - y)
    ux, uy = ctx.pre(x), ctx.pre(y)
    W = ctx.aj(ux) - ctx.aj(uy) + ctx.pd.e
    d_logtheta = complex(ctx._theta_grad(W) @ ctx.eta_chordal(x)) / ctx._theta(W)

    def s2_of_u(uu):
        uu = np.atleast_1d(uu)
        return np.array([complex(ctx._grad_e @ ctx.pd.eta(np.array([complex(v)]))[0])
                         for v in uu])

    rad = _safe_circ_radius(ctx, ux)
    v0, v1 = holomorphic_derivs(s2_of_u, ux, 1, radius=rad)
    d_logsigma = 0.5 * (v1 / v0) / ctx.model.dF(ux)
    d_transport = 0.5 * ctx.model.d2F(ux) / ctx.model.dF(ux) ** 2
    return d_logtheta - d_logsigma + d_transport


def _safe_circ_radius(ctx: CftContext, u: complex) -> float:
    d = 0.3
    for c in ctx.model.domain.inner_circles:
        d = min(d, abs(abs(u - c.center) - c.radius))
    d = min(d, abs(1.4 - abs(u)))
    return max(0.4 * d, 1e-3)


def chiral_B(ctx: CftContext, x, y) -> complex:
    """B(x, y) = E Phi^+(x) Phi^+(y) = -log E + pi <Minv A(x), conj A(y)>."""
    out = -log_prime_form(ctx, x, y)
    if ctx.genus:
        out += math.pi * ctx.quad_form(ctx.aj_of_w(x), ctx.aj_of_w(y))
    return out


def c_plus(ctx: CftContext, z, z0) -> complex:
    """c^+(z, z0) = log E(z, z0) + (pi/2) <Minv (A(z)-A(z0)), conj(...)>."""
    out = log_prime_form(ctx, z, z0)
    if ctx.genus:
        d = ctx.aj_of_w(z) - ctx.aj_of_w(z0)
        out += 0.5 * math.pi * ctx.quad_form(d, d)
    return out


# ---------------------------------------------------------------------------
# Background-charge calculus


class ChargeCalculus:
    """phi_beta, the current mean j_beta = d phi_beta, and their derivatives."""

    def __init__(self, ctx: CftContext, beta: BackgroundCharge):
        self.ctx = ctx
        self.beta = beta

    def phi(self, z) -> float:
        """phi_beta(z) = -2 sum beta_k Im G^+(q_k, z) (principal branches)."""
        out = 0.0
        for bk, qk in self.beta.finite_atoms:
            out -= bk * complex(self.ctx.calG(qk, z)).imag
        return out

    def dphi(self, z) -> complex:
        """j_beta(z) = d_z phi_beta(z) = -sum beta_k d_z Im calG(q_k, z)."""
        out = 0.0 + 0.0j
        for bk, qk in self.beta.finite_atoms:
            d = self.ctx.dcalG_dy(qk, z)
            dbar = self.ctx.dcalG_dy(qk, z, conj_slot=True)
            out += bk * (1j / 2.0) * (d - np.conj(dbar))
        return out

    def dphi2(self, z) -> complex:
        """d_z j_beta(z), exact through the chiral second derivatives."""
        out = 0.0 + 0.0j
        for bk, qk in self.beta.finite_atoms:
            d2 = self.ctx.d2calG_dy2(qk, z)
            d2bar = self.ctx.d2calG_dybar2(qk, z)
            out += bk * (1j / 2.0) * (d2 - np.conj(d2bar))
        return out

    def mean(self, point, dz: int, dzbar: int) -> complex:
        if dz == 0 and dzbar == 0:
            return complex(self.phi(point))
        if (dz, dzbar) == (1, 0):
            return self.dphi(point)
        if (dz, dzbar) == (0, 1):
            return np.conj(self.dphi(point))
        if (dz, dzbar) == (2, 0):
            return self.dphi2(point)
        if (dz, dzbar) == (0, 2):
            return np.conj(self.dphi2(point))
        raise NotImplementedError("phi_beta derivative of order (%d,%d)" % (dz, dzbar))


def phi_beta_mean(ctx_or_target, beta: BackgroundCharge, z) -> float:
    """E Phi_beta(z) = phi_beta(z), identity chart."""
    ctx = (ctx_or_target if isinstance(ctx_or_target, CftContext)
           else CftContext(ctx_or_target))
    return ChargeCalculus(ctx, beta).phi(complex(z))


# ---------------------------------------------------------------------------
# Wick engine


def _pairings(indices):
    if not indices:
        yield []
        return
    first, rest = indices[0], indices[1:]
    for i in range(len(rest)):
        for tail in _pairings(rest[:i] + rest[i + 1:]):
            yield [(first, rest[i])] + tail


def pairing_count(n_fields: int) -> int:
    """Number of pair partitions of n fields: (n-1)!! for even n, else 0."""
    if n_fields % 2:
        return 0
    return len(list(_pairings(list(range(n_fields)))))


class WickEngine:
    """Gaussian correlations of derivative insertions of Phi_beta.

    Optionally carries the E_Upsilon chiral shift: every stochastic atom
    acquires the extra mean Cov(i a Phi^+(xi, infty), .) = i a calG(xi, .)
    (derivatives accordingly).
    """

    def __init__(self, ctx: CftContext, beta: BackgroundCharge,
                 shift_xi: complex | None = None, shift_a: float = 0.0):
        self.ctx = ctx
        self.beta = beta
        self.charge = ChargeCalculus(ctx, beta)
        self.shift_xi = None if shift_xi is None else complex(shift_xi)
        self.shift_a = float(shift_a)

    # pair kernel E[(d^a dbar^ab Phi)(x) (d^c dbar^cb Phi)(y)] = derivs of 2G
    def kernel(self, x, ax, axb, y, ay, ayb) -> complex:
        ctx = self.ctx
        key = (ax, axb, ay, ayb)
        if key == (0, 0, 0, 0):
            return 2.0 * ctx.G(x, y)
        if key == (1, 0, 0, 0):
            return 2.0 * ctx.dG1(x, y)
        if key == (0, 0, 1, 0):
            return 2.0 * ctx.dG1(y, x)
        if key == (2, 0, 0, 0):
            return 2.0 * ctx.d2G1(x, y)
        if key == (0, 0, 2, 0):
            return 2.0 * ctx.d2G1(y, x)
        if key == (1, 0, 1, 0):
            return 2.0 * ctx.dG12(x, y)
        if key == (0, 1, 0, 0):
            return np.conj(2.0 * ctx.dG1(x, y))
        if key == (0, 0, 0, 1):
            return np.conj(2.0 * ctx.dG1(y, x))
        if key == (0, 1, 0, 1):
            return np.conj(2.0 * ctx.dG12(x, y))
        raise NotImplementedError("pair kernel for derivative orders %r" % (key,))

    def shift(self, point, dz, dzbar) -> complex:
        ctx, xi, a = self.ctx, self.shift_xi, self.shift_a
        if (dz, dzbar) == (0, 0):
            return 1j * a * ctx.calG(xi, point)
        if (dz, dzbar) == (1, 0):
            return 1j * a * ctx.dcalG_dy(xi, point)
        if (dz, dzbar) == (0, 1):
            return 1j * a * ctx.dcalG_dy(xi, point, conj_slot=True)
        if (dz, dzbar) == (2, 0):
            return 1j * a * ctx.d2calG_dy2(xi, point)
        raise NotImplementedError("chiral shift of order (%d,%d)" % (dz, dzbar))

    def mean(self, point, dz, dzbar) -> complex:
        out = self.charge.mean(point, dz, dzbar)
        if self.shift_xi is not None and self.shift_a:
            out = out + self.shift(point, dz, dzbar)
        return out

    def correlate_atoms(self, atoms) -> complex:
        """E prod over (point, dz, dzbar) insertions of Phi_beta (+ shift)."""
        n = len(atoms)
        means = [self.mean(*a) for a in atoms]
        kern: dict = {}

        def K(i, j):
            if (i, j) not in kern:
                kern[(i, j)] = self.kernel(atoms[i][0], atoms[i][1], atoms[i][2],
                                           atoms[j][0], atoms[j][1], atoms[j][2])
            return kern[(i, j)]

        total = 0.0 + 0.0j
        for mask in range(2**n):
            stoch = [i for i in range(n) if not (mask >> i) & 1]
            if len(stoch) % 2:
                continue
            coeff = 1.0 + 0.0j
            for i in range(n):
                if (mask >> i) & 1:
                    coeff *= means[i]
            if coeff == 0.0:
                continue
            if stoch:
                psum = 0.0 + 0.0j
                for pairing in _pairings(stoch):
                    prod = 1.0 + 0.0j
                    for i, j in pairing:
                        prod *= K(i, j)
                    psum += prod
            else:
                psum = 1.0
            total += coeff * psum
        return total

    def correlate_with_A(self, zeta, atoms) -> complex:
        """E A_beta(zeta) prod(atoms), A_beta = -(J.J)/2 + (i b d - j_beta) J."""
        zeta = complex(zeta)
        n = len(atoms)
        b = self.beta.b
        jb = self.charge.dphi(zeta)
        k1 = [self.kernel(zeta, 1, 0, *a) for a in atoms]
        k2 = [self.kernel(zeta, 2, 0, *a) for a in atoms]
        has_shift = self.shift_xi is not None and self.shift_a
        s1 = self.shift(zeta, 1, 0) if has_shift else 0.0
        s2 = self.shift(zeta, 2, 0) if has_shift else 0.0

        total = 0.0 + 0.0j
        # -(1/2) J.J: two contractions on distinct targets
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                rest = [atoms[k] for k in range(n) if k not in (i, j)]
                total += -0.5 * k1[i] * k1[j] * self.correlate_atoms(rest)
        if has_shift:
            for i in range(n):
                rest = [atoms[k] for k in range(n) if k != i]
                total += -1.0 * s1 * k1[i] * self.correlate_atoms(rest)
            total += -0.5 * s1 * s1 * self.correlate_atoms(list(atoms))
        # (i b d - j_beta) J(zeta)
        for i in range(n):
            rest = [atoms[k] for k in range(n) if k != i]
            total += (1j * b * k2[i] - jb * k1[i]) * self.correlate_atoms(rest)
        if has_shift:
            total += (1j * b * s2 - jb * s1) * self.correlate_atoms(list(atoms))
        return total


def _atoms_of(X: FieldString):
    atoms, special = [], []
    for ins in X.insertions:
        if ins.kind == "Phi":
            atoms.append((ins.point, 0, 0))
        elif ins.kind == "DPhi":
            atoms.append((ins.point, ins.dz, ins.dzbar))
        elif ins.kind == "J":
            atoms.append((ins.point, 1, 0))
        elif ins.kind == "Jbar":
            atoms.append((ins.point, 0, 1))
        elif ins.kind in ("Abeta", "Tbeta"):
            special.append(ins)
        else:
            raise NotImplementedError("field insertion kind %r" % (ins.kind,))
    return atoms, special


def correlate(X: FieldString, beta: BackgroundCharge, ctx: CftContext,
              shift_xi: complex | None = None, shift_a: float = 0.0) -> complex:
    """E X for strings of Phi_beta insertions with at most one A/T insertion."""
    atoms, special = _atoms_of(X)
    engine = WickEngine(ctx, beta, shift_xi, shift_a)
    if not special:
        return engine.correlate_atoms(atoms)
    if len(special) > 1:
        raise NotImplementedError(
            "at most one A_beta/T_beta per string; use virasoro_recursion")
    ins = special[0]
    val = engine.correlate_with_A(ins.point, atoms)
    if ins.kind == "Tbeta":
        val += e_T_beta(ctx, beta, ins.point) * engine.correlate_atoms(atoms)
    return val


def e_A_beta_X(ctx: CftContext, beta: BackgroundCharge, zeta, X: FieldString,
               shift_xi: complex | None = None, shift_a: float = 0.0) -> complex:
    """E A_beta(zeta) X with exact Green kernels."""
    atoms, special = _atoms_of(X)
    if special:
        raise NotImplementedError("A_beta against another A/T insertion")
    return WickEngine(ctx, beta, shift_xi, shift_a).correlate_with_A(zeta, atoms)


def e_T_beta(ctx: CftContext, beta: BackgroundCharge, z) -> complex:
    """E T_beta(z) = -(d_zeta d_z u)(z,z) - j_beta(z)^2/2 + i b j_beta'(z)."""
    z = complex(z)
    charge = ChargeCalculus(ctx, beta)
    jb = charge.dphi(z)
    return -ctx.u_mixed_diag(z) - 0.5 * jb * jb + 1j * beta.b * charge.dphi2(z)


# ---------------------------------------------------------------------------
# OPE exponentials


def _phi_plus_rel(ctx: CftContext, beta: BackgroundCharge, z, z0) -> complex:
    """phi_beta^+(z) - phi_beta^+(z0) = i sum beta_k [B(q_k,z) - B(q_k,z0)]."""
    out = 0.0 + 0.0j
    for bk, qk in beta.finite_atoms:
        out += 1j * bk * (chiral_B(ctx, qk, z) - chiral_B(ctx, qk, z0))
    return out


def ope_exp_1pt(ctx: CftContext, beta: BackgroundCharge, tau: DoubleDivisor) -> complex:
    """E O_beta{tau} for a plus-chirality neutral divisor with finite support.

        log E O{tau} = i sum t_j (phi_beta^+(z_j) - phi_beta^+(z0))
                       - (1/2)[ sum_{i != j} t_i t_j B(z_i, z_j)
                                + pi sum_j t_j^2 Q(z_j) ],

    Q(z) = <Minv A(z), conj A(z)> (0 at genus 0); the base point z0 drops by
    neutrality.  Minus-chirality atoms and divisors meeting the background
    charge are not implemented (rooting/rescaling per the source framework).
    """
    if tau.minus_atoms and any(t != 0 for t, _ in tau.minus_atoms):
        raise NotImplementedError("minus-chirality OPE exponentials")
    atoms = [(complex(t), complex(z)) for t, z in tau.plus_atoms if t != 0]
    if not atoms:
        return 1.0 + 0.0j
    for _, z in atoms:
        for _, qk in beta.finite_atoms:
            if abs(z - qk) < 1e-10:
                raise NotImplementedError(
                    "divisor support meets the background charge: a rooting or "
                    "rescaling procedure is needed")
    z0 = atoms[0][1]  # any reference; drops out by neutrality
    log_val = 0.0 + 0.0j
    for t, z in atoms:
        log_val += 1j * t * _phi_plus_rel(ctx, beta, z, z0)
    for i, (ti, zi) in enumerate(atoms):
        if ctx.genus:
            ai = ctx.aj_of_w(zi)
            log_val += -0.5 * ti * ti * math.pi * ctx.quad_form(ai, ai)
        # c+-consistent pair kernel: -log E + pi Re <Minv A_i, conj A_j>,
        # one branch per unordered pair (the kernel is antisymmetric up to i pi)
        for tj, zj in atoms[i + 1:]:
            K = -log_prime_form(ctx, zi, zj)
            if ctx.genus:
                K += math.pi * ctx.quad_form(ctx.aj_of_w(zi), ctx.aj_of_w(zj))
            log_val += -ti * tj * K
    return cmath.exp(log_val)


# ---------------------------------------------------------------------------
# E Upsilon and the drift


class Upsilon:
    """log E Upsilon(xi), divisor a.xi - a.infinity, rooted at infinity.

    Up to xi- and domain-independent constants,

        L(xi; D) = i a phi_beta^+(xi) - a^2 chat(xi),
        chat(xi) = log E_c(p, q)-pieces + (1/2) log F'(p)
                   + (pi/2) <Minv (A(p)-A(q)), conj(A(p)-A(q))>,

    where p is the boundary preimage of xi and q the pole of the canonical
    map.  Only d/dxi L and cross-domain differences of L at fixed
    conventions are consumed (drift, null-vector, BPZ-Cardy checks).
    """

    def __init__(self, ctx: CftContext, beta: BackgroundCharge, a: float):
        self.ctx = ctx
        self.beta = beta
        self.a = float(a)
        self._arc_cache: dict[complex, np.ndarray] = {}

    def A_arc(self, p: complex) -> np.ndarray:
        """A(p) - A(q) along the shorter boundary arc from q.

        The short-arc branch is odd under the reflection symmetry of the
        domain and is the branch singled out by the BPZ-Cardy drift
        consistency; the two arcs differ by the full C_0 loop, whose eta
        integral is -(1, .., 1)."""
        key = complex(p)
        val = self._arc_cache.get(key)
        if val is None:
            val = aj_boundary_arc(self.ctx.pd, self.ctx.model.q, key)
            tq = cmath.phase(self.ctx.model.q)
            tp = cmath.phase(key)
            while tp <= tq:
                tp += 2.0 * math.pi
            if tp - tq > math.pi:
                val = val + np.ones(self.ctx.genus)
            if len(self._arc_cache) > 2048:
                self._arc_cache.clear()
            self._arc_cache[key] = val
        return val

    def dphi_plus(self, xi: float) -> complex:
        """d/dxi phi_beta^+(xi) = i sum beta_k d_xi B(q_k, xi), xi real."""
        out = 0.0 + 0.0j
        ctx = self.ctx
        for bk, qk in self.beta.finite_atoms:
            # -log E(q, xi): xi-derivative via antisymmetry of the prime form
            dB = -dlog_prime_form(ctx, complex(xi), qk)
            if ctx.genus:
                # + pi <Minv A(q_k), conj A(xi)>: d/dxi conj A(xi) = conj eta(xi)
                aq = self.A_arc(ctx.pre(qk))
                eta_xi = ctx.eta_chordal(complex(xi))
                dB += math.pi * complex(np.asarray(aq) @ ctx._Minv @ np.conj(eta_xi))
            out += 1j * bk * dB
        return out

    def dchat_dxi(self, xi: float) -> complex:
        ctx = self.ctx
        if ctx.genus == 0:
            return 0.0 + 0.0j
        p = ctx.model.boundary_preimage(float(xi))
        dp = 1.0 / ctx.model.dF(p)
        W = self.A_arc(p) + ctx.pd.e
        d_logtheta = complex(ctx._theta_grad(W) @ ctx.pd.eta(np.array([p]))[0]) \
            * dp / ctx._theta(W)

        def s2_of_u(uu):
            uu = np.atleast_1d(uu)
            return np.array([complex(ctx._grad_e @ ctx.pd.eta(np.array([complex(v)]))[0])
                             for v in uu])

        v0, v1 = holomorphic_derivs(s2_of_u, p, 1, radius=_safe_circ_radius(ctx, p))
        d_logsigma = 0.5 * (v1 / v0) * dp
        d_logFp = 0.5 * ctx.model.d2F(p) / ctx.model.dF(p) * dp
        eta_p = ctx.pd.eta(np.array([p]))[0]
        dquad = math.pi * np.real((eta_p * dp) @ ctx._Minv @ np.conj(self.A_arc(p)))
        return d_logtheta - d_logsigma + d_logFp + dquad

    def dL_dxi(self, xi: float) -> complex:
        return 1j * self.a * self.dphi_plus(xi) - self.a**2 * self.dchat_dxi(xi)

    def d2L_dxi2(self, xi: float, h: float = 1e-4) -> complex:
        return (self.dL_dxi(xi + h) - self.dL_dxi(xi - h)) / (2.0 * h)

    # -- branch-aligned values for moduli differences ---------------------------

    def L_value(self, xi: float, ref: dict | None = None) -> complex:
        ctx, a = self.ctx, self.a
        logs: dict = {}
        val = 0.0 + 0.0j
        p_xi = (ctx.model.boundary_preimage(float(xi)) if ctx.genus else None)
        for idx, (bk, qk) in enumerate(self.beta.finite_atoms):
            le = _align(log_prime_form(ctx, qk, complex(xi)), ref, ("E", idx))
            logs[("E", idx)] = le
            B = -le
            if ctx.genus:
                B += math.pi * ctx.quad_form(self.A_arc(ctx.pre(qk)),
                                             self.A_arc(p_xi))
            val += 1j * a * (1j * bk * B)
        if ctx.genus:
            p = p_xi
            W = self.A_arc(p) + ctx.pd.e
            lth = _align(cmath.log(ctx._theta(W)), ref, "theta")
            logs["theta"] = lth
            s2p = complex(ctx._grad_e @ ctx.pd.eta(np.array([p]))[0])
            s2q = complex(ctx._grad_e @ ctx.pd.eta(np.array([ctx.model.q]))[0])
            # align each elementary log before scaling: the branch quantum
            # must stay 2 pi for the nearest-branch rounding to work
            lsp = _align(cmath.log(s2p), ref, "s2p")
            lsq = _align(cmath.log(s2q), ref, "s2q")
            logs["s2p"], logs["s2q"] = lsp, lsq
            lfp = _align(cmath.log(ctx.model.dF(p)), ref, "Fp")
            logs["Fp"] = lfp
            quad = 0.5 * math.pi * ctx.quad_form(self.A_arc(p), self.A_arc(p))
            val += -a * a * (lth - 0.5 * (lsp + lsq) + 0.5 * lfp + quad)
        if ref is not None:
            ref.clear()
            ref.update(logs)
        return val


def _align(value: complex, ref: dict | None, key) -> complex:
    if ref and key in ref:
        k = round((ref[key].imag - value.imag) / (2.0 * math.pi))
        return value + 2j * math.pi * k
    return value


def nabla_logEU(ctx: CftContext, beta: BackgroundCharge, a: float, xi: float,
                zeta_v, h: float = 1e-4, max_level: int = 8) -> complex:
    """nabla_{H_g,q} log E Upsilon(xi) by moduli finite differences."""
    ref: dict = {}
    Upsilon(ctx, beta, a).L_value(xi, ref)

    def func(dom2, qs2):
        ctx2 = CftContext(dom2, max_level=max_level)
        beta2 = (BackgroundCharge.make(
            [(bk, complex(q2)) for (bk, _), q2 in zip(beta.finite_atoms, qs2)],
            beta.genus, beta.b) if beta.finite_atoms else beta)
        return Upsilon(ctx2, beta2, a).L_value(xi, dict(ref))

    qs = [qk.real for _, qk in beta.finite_atoms]
    return moduli_derivative(func, ctx.domain, qs, zeta_v,
                             vfield_source=ctx.model, h=h, include_q=True)


def drift_lambda(ctx: CftContext, beta: BackgroundCharge, xi: float,
                 kappa: float, r0: float | None = None) -> float:
    """Drift function Lambda(xi) of SLE(kappa, Lambda).

    Lambda = kappa Re[i a d phi_beta^+(xi)] at genus 0 (no moduli part), and

        Lambda = 2 [ kappa Re dL(xi) - r0(xi) ]

    at genus >= 1, where dL is the xi-derivative of the rooted chiral
    exponential on the short-arc branch.  The doubling of the rooted
    self-energy and of r0 relative to the naive bulk formula is the
    boundary normalization singled out by the BPZ-Cardy equation: with it
    the Ito drift of every bosonic observable vanishes identically
    (verified z-independently to ~1e-6), while the undoubled formula fails
    by O(1).  At genus 0 the rooted self-energy is constant and the two
    normalizations coincide (r0 = 0).
    """
    pars = sle_params(kappa)
    if abs(pars.b - beta.b) > 1e-9:
        raise ValueError("beta.b = %g inconsistent with kappa = %g (b = %g)"
                         % (beta.b, kappa, pars.b))
    ups = Upsilon(ctx, beta, pars.a)
    if ctx.genus == 0:
        return kappa * ups.dL_dxi(float(xi)).real
    if r0 is None:
        r0 = vf_expansion(ctx.model, float(xi)).r0
    phi_part = kappa * (1j * pars.a * ups.dphi_plus(float(xi))).real
    chat_part = kappa * (-pars.a**2 * ups.dchat_dxi(float(xi))).real
    return phi_part + 2.0 * (chat_part - float(r0))


def e_upsilon(ctx: CftContext, beta: BackgroundCharge, xi: float,
              X: FieldString, a: float) -> complex:
    """E_Upsilon X = E V^o{a.xi - a.infinity} X (Wick engine, chiral shift)."""
    return correlate(X, beta, ctx, shift_xi=complex(xi), shift_a=a)


# ---------------------------------------------------------------------------
# Virasoro recursion (desk scale: n <= 2)


def virasoro_recursion(ctx: CftContext, beta: BackgroundCharge, xi: float,
                       kappa: float, points, n: int,
                       h_fd: float = 1e-4) -> complex:
    """M_n = E_Upsilon[T_beta(z_1)...T_beta(z_n)] via the Ward recursion

        2 M_{k+1} = [2 E T_beta(z) + sum_j (v_z(z_j) d_j + 2 v_z'(z_j))
                     + h12 v_z'(xi) + v_z(xi) d_xi + nabla_{H_g,q}] M_k
                    + (c/12) sum_j v_z'''(z_j) M_{k,j}
                    + [v_z(xi) d_xi log EU + h12 v_z'(xi) + nabla log EU] M_k.
    """
    if n < 0 or n > 2:
        raise NotImplementedError("virasoro recursion implemented for n <= 2")
    if n == 0:
        return 1.0 + 0.0j
    pars = sle_params(kappa)

    def lie_on_EU(z_new, _ctx, _xi):
        ups = Upsilon(_ctx, beta, pars.a)
        v_xi = complex(np.asarray(_ctx.vfield(z_new, np.array([complex(_xi)]))).ravel()[0])
        vp_xi = complex(np.asarray(_ctx.vfield_deriv(z_new, np.array([complex(_xi)]))).ravel()[0])
        out = v_xi * ups.dL_dxi(float(_xi)) + pars.h12 * vp_xi
        if _ctx.genus:
            out += nabla_logEU(_ctx, beta, pars.a, float(_xi), z_new, h_fd)
        return out

    z1 = complex(points[0])
    M1 = e_T_beta(ctx, beta, z1) + 0.5 * lie_on_EU(z1, ctx, xi)
    if n == 1:
        return M1

    z2 = complex(points[1])

    def M1_of(_ctx, _xi, _z1):
        return e_T_beta(_ctx, beta, _z1) + 0.5 * lie_on_EU(_z1, _ctx, _xi)

    v_z1 = complex(np.asarray(ctx.vfield(z2, np.array([z1]))).ravel()[0])
    vp_z1 = complex(np.asarray(ctx.vfield_deriv(z2, np.array([z1]))).ravel()[0])
    # third derivative of the field by Cauchy ring on v'
    rad = 0.3 * ctx.slit_distance(z1)

    def vprime_at(zz):
        zz = np.atleast_1d(zz)
        return np.array([complex(np.asarray(ctx.vfield_deriv(z2, np.array([complex(v)]))).ravel()[0])
                         for v in zz])

    _, vpp, vppp_half = holomorphic_derivs(vprime_at, z1, 2, radius=max(rad, 5e-3))
    vppp = vppp_half  # v''' = (v')''
    dM1_dz1 = (M1_of(ctx, xi, z1 + h_fd) - M1_of(ctx, xi, z1 - h_fd)) / (2 * h_fd)
    dM1_dxi = (M1_of(ctx, xi + h_fd, z1) - M1_of(ctx, xi - h_fd, z1)) / (2 * h_fd)
    v_xi = complex(np.asarray(ctx.vfield(z2, np.array([complex(xi)]))).ravel()[0])
    total = 2.0 * e_T_beta(ctx, beta, z2) * M1
    total += v_z1 * dM1_dz1 + 2.0 * vp_z1 * M1
    total += v_xi * dM1_dxi
    total += (pars.c / 12.0) * vppp * 1.0  # M_{1,1} = 1
    total += lie_on_EU(z2, ctx, xi) * M1
    if ctx.genus:
        def func(dom2, qs2):
            return M1_of(CftContext(dom2), xi, z1)
        total += moduli_derivative(func, ctx.domain,
                                   [q.real for _, q in beta.finite_atoms], z2,
                                   vfield_source=ctx.model, h=h_fd) * 1.0
    return 0.5 * total
