"""SLE(kappa, Lambda) sampling in multiply connected domains and Monte Carlo
martingale-observable testing.

Driving: d xi = sqrt(kappa) dB + Lambda_{D_t}(xi) dt (Euler-Maruyama), with
per-path counter-based RNG substreams (Philox keyed by (seed, path index)) so
that results are independent of execution order and thread count.

Genus 0 uses closed forms throughout.  Genus 1 runs on a dedicated engine:
the circular model is a disk-minus-disk domain normalized to a concentric
annulus by a Mobius map, so harmonic measures, the Abel-Jacobi map, theta
functions and the drift are closed-form per step; the circular model is
re-fit to the evolved slits by a warm-started Newton iteration.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .domains import Circle, CircularDomain, ChordalStandardDomain, DomainError
from .greens import HalfPlane
from .loewner import CanonicalMap, MapError, fit_circular_model
from .cft import BackgroundCharge, sle_params

__all__ = [
    "SleConfig",
    "MoReport",
    "sample_driving",
    "bosonic_observable",
    "mo_test",
]


@dataclass(frozen=True)
class SleConfig:
    kappa: float
    dt: float
    T: float
    n_paths: int
    seed: int
    domain: object = None           # HalfPlane() | CanonicalMap | ChordalStandardDomain
    beta: BackgroundCharge | None = None
    xi0: float = 0.0
    drift_offset: float = 0.0       # negative-control knob: Lambda + offset

    def __post_init__(self):
        if self.dt > 1e-2:
            raise DomainError("dt must be <= 1e-2")
        if self.n_paths < 1:
            raise DomainError("n_paths must be >= 1")


@dataclass
class MoReport:
    observable: str
    t_grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    aborted: int
    passed: bool

    def as_dict(self):
        return {
            "schema": "mcd-cft/1",
            "observable": self.observable,
            "t_grid": list(map(float, self.t_grid)),
            "mean": list(map(float, self.mean)),
            "stderr": list(map(float, self.stderr)),
            "n_paths": self.n_paths,
            "aborted": self.aborted,
            "pass": bool(self.passed),
        }


def _rng_for_path(seed: int, idx: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, idx]))


# ---------------------------------------------------------------------------
# Genus 0: closed forms


class _G0Path:
    """Chordal SLE in H with charges q_k; tracked z with log g' accumulation."""

    def __init__(self, cfg: SleConfig, zs, rng):
        self.cfg = cfg
        self.pars = sle_params(cfg.kappa)
        self.xi = float(cfg.xi0)
        beta = cfg.beta if cfg.beta is not None else BackgroundCharge.at_infinity(
            self.pars.b)
        self.atoms = [(bk, qk.real) for bk, qk in beta.finite_atoms]
        self.b = beta.b
        self.zs = np.array([complex(z) for z in zs])
        self.logd = np.zeros(len(zs), dtype=complex)
        self.alive = np.ones(len(zs), dtype=bool)
        self.swallow_t = np.full(len(zs), np.nan)
        self.t = 0.0
        self.rng = rng

    def drift(self) -> float:
        out = self.cfg.drift_offset
        a = self.pars.a
        for bk, qk in self.atoms:
            out += self.cfg.kappa * a * bk / (self.xi - qk)
        return out

    def step(self, dt: float):
        k, xi = self.cfg.kappa, self.xi
        live = self.alive
        z = self.zs[live]
        # RK4 on dz/dt = 2/(z - xi) with xi frozen over the step
        f = lambda y: 2.0 / (y - xi)
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z_new = z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        self.logd[live] += -dt * 2.0 / (0.5 * (z + z_new) - xi) ** 2
        self.zs[live] = z_new
        new_atoms = []
        for bk, qk in self.atoms:
            new_atoms.append((bk, qk + dt * 2.0 / (qk - xi)))
        self.atoms = new_atoms
        dxi = math.sqrt(k * dt) * self.rng.standard_normal() + self.drift() * dt
        self.xi = xi + dxi
        self.t += dt
        for i in np.nonzero(live)[0]:
            zi = self.zs[i]
            if min(abs(zi - self.xi), zi.imag) < 1e-6 or any(
                    abs(zi - q) < 1e-6 for _, q in self.atoms):
                self.alive[i] = False
                self.swallow_t[i] = self.t

    def observable(self, i: int) -> float:
        """M = -2b arg g'(z) + 2a arg(g z - xi) + 2 sum beta_k arg(g z - q_k)."""
        z = self.zs[i]
        out = -2.0 * self.b * self.logd[i].imag
        out += 2.0 * self.pars.a * cmath.phase(z - self.xi)
        for bk, qk in self.atoms:
            out += 2.0 * bk * cmath.phase(z - qk)
        return out


# ---------------------------------------------------------------------------
# Genus 1: fast engine on the concentric-annulus normalization


def _annulus_mobius(circle: Circle):
    """Mobius T with |T| = 1 on C_0 and |T| = rho on the inner circle."""
    d = abs(circle.center)
    if d < 1e-13:
        return (0.0j, None, 1.0 + 0.0j), circle.radius  # T = z (identity-like)
    e = circle.center / d
    s = (1.0 + d * d - circle.radius**2) / d
    t_min = (s - math.sqrt(s * s - 4.0)) / 2.0
    z_in = t_min * e          # limit point inside the inner circle
    z_out = e / t_min         # its inversion, outside the unit disk
    # T0 = (z - z_in)/(z - z_out); normalize |T| = 1 on C_0 at the probe point
    probe = -e
    scale = 1.0 / abs((probe - z_in) / (probe - z_out))
    rho = abs((circle.center + circle.radius * e - z_in)
              / (circle.center + circle.radius * e - z_out)) * scale
    return (z_in, z_out, scale), rho


class _Theta1:
    """Scalar Jacobi theta_1 machinery for a fixed purely imaginary modulus."""

    def __init__(self, tau: complex, n_terms: int | None = None):
        self.tau = tau
        aa = math.pi * tau.imag
        n = 3
        while (n + 0.5) ** 2 * aa < 46.0 and n < 200:
            n += 1
        self.n = np.arange(0, n + 1)
        self.coeff = (-1.0) ** self.n * np.exp(1j * math.pi * tau * (self.n + 0.5) ** 2)
        self.k = (2 * self.n + 1) * math.pi

    def theta(self, v):
        return 2.0 * np.sum(self.coeff * np.sin(self.k * v))

    def dtheta(self, v):
        return 2.0 * np.sum(self.coeff * self.k * np.cos(self.k * v))

    def lt(self, v):
        return self.dtheta(v) / self.theta(v)


class _G1Engine:
    """Closed-form drift / field / observable machinery for one-slit domains."""

    def __init__(self, model: CanonicalMap, kappa: float):
        self.model = model
        self.kappa = kappa
        self.pars = sle_params(kappa)
        circ = model.domain.inner_circles[0]
        (z_in, z_out, scale), rho = _annulus_mobius(circ)
        self._zin, self._zout, self._scale = z_in, z_out, scale
        self.rho = rho
        self.r_mod = -math.log(rho)
        self.tau = 1j * self.r_mod / math.pi
        self.th = _Theta1(self.tau)
        # Theta(Z|tau) 1-d series terms
        nmax = 3
        while math.pi * self.tau.imag * nmax * nmax < 46.0 and nmax < 200:
            nmax += 1
        self._N = np.arange(-nmax, nmax + 1)
        self._qn = np.exp(1j * math.pi * self.tau * self._N**2)
        self.e_char = 0.5 * (1.0 + self.tau)

    # -- Mobius normalization -------------------------------------------------

    def T(self, z):
        if self._zout is None:
            return z * self._scale
        return self._scale * (z - self._zin) / (z - self._zout)

    def dT(self, z):
        if self._zout is None:
            return self._scale
        return self._scale * (self._zin - self._zout) * (-1.0) / (z - self._zout) ** 2

    def eta(self, z):
        return (1j / (2 * math.pi)) * self.dT(z) / self.T(z)

    def deta(self, z):
        if self._zout is None:
            return (1j / (2 * math.pi)) * (-1.0 / z**2) * self._scale**2 / self._scale**2
        t, dt = self.T(z), self.dT(z)
        d2t = 2.0 * self._scale * (self._zin - self._zout) / (z - self._zout) ** 3
        return (1j / (2 * math.pi)) * (d2t / t - (dt / t) ** 2)

    # -- theta -----------------------------------------------------------------

    def Theta(self, Z: complex) -> complex:
        return complex(np.sum(self._qn * np.exp(2j * math.pi * Z * self._N)))

    def dTheta(self, Z: complex) -> complex:
        return complex(np.sum(self._qn * 2j * math.pi * self._N
                              * np.exp(2j * math.pi * Z * self._N)))

    # -- boundary Abel-Jacobi (short arc from q) -------------------------------

    def A_arc(self, p: complex) -> complex:
        q = self.model.q
        tq, tp = cmath.phase(q), cmath.phase(p)
        dtheta = tp - tq
        while dtheta <= -math.pi:
            dtheta += 2 * math.pi
        while dtheta > math.pi:
            dtheta -= 2 * math.pi
        # integrate eta along the short arc with Gauss-Legendre
        nodes, wgt = _GL16
        ang = tq + 0.5 * dtheta * (nodes + 1.0)
        pts = np.exp(1j * ang)
        vals = (1j / (2 * math.pi)) * self.dT(pts) / self.T(pts)
        return complex(np.sum(wgt * vals * 1j * pts) * 0.5 * dtheta)

    # -- drift ------------------------------------------------------------------

    def dchat(self, xi: float, p: complex | None = None) -> complex:
        model = self.model
        if p is None:
            p = model.boundary_preimage(float(xi))
        dp = 1.0 / model.dF(p)
        W = self.A_arc(p) + self.e_char
        d_logtheta = self.dTheta(W) / self.Theta(W) * self.eta(p) * dp
        d_logsigma = 0.5 * self.deta(p) / self.eta(p) * dp
        d_logFp = 0.5 * model.d2F(p) / model.dF(p) * dp
        dquad = math.pi * (self.eta(p) * dp * np.conj(self.A_arc(p))).real \
            * (1.0 / self.tau.imag)
        return d_logtheta - d_logsigma + d_logFp + dquad

    def r0(self, xi: float, p: complex | None = None, d: float = 5e-3) -> float:
        vals = []
        for dd in (d, -d, 0.5 * d, -0.5 * d):
            v = complex(self.model.vector_field(xi + dd, None,
                                                u=np.array([self.model.boundary_preimage(xi)]),
                                                p=self.model.boundary_preimage(xi + dd)))
            vals.append(v - 2.0 / dd)
        # r0 + r1 d and r0 - r1 d averages; Richardson over the two scales
        f1 = 0.5 * (vals[0] + vals[1])
        f2 = 0.5 * (vals[2] + vals[3])
        return float((4.0 * f2 - f1).real / 3.0)

    def drift(self, xi: float) -> float:
        chat_part = -self.kappa * self.pars.a**2 * self.dchat(xi).real
        return 2.0 * (chat_part - self.r0(xi))


_GL16 = np.polynomial.legendre.leggauss(16)


class _Tracker:
    """Accumulates continuous arguments of complex factors across steps."""

    def __init__(self):
        self.prev: dict = {}
        self.acc: dict = {}

    def arg(self, key, value: complex) -> float:
        value = complex(value)
        if key not in self.prev:
            self.prev[key] = value
            self.acc[key] = cmath.phase(value)
            return self.acc[key]
        ratio = value / self.prev[key]
        self.acc[key] += cmath.phase(ratio)
        self.prev[key] = value
        return self.acc[key]


class _G1Path:
    """One SLE path in a one-slit chordal domain with warm-started re-fits.

    All Newton solves (boundary preimages, slit criticals, interior
    preimages, the circular-model re-fit) reuse the previous step's state,
    and the refit Jacobian is refreshed only periodically, so a step costs a
    handful of vectorized prime-function series evaluations.
    """

    def __init__(self, cfg: SleConfig, zs, rng, max_level: int = 6):
        if isinstance(cfg.domain, CanonicalMap):
            model = cfg.domain
        else:
            model = fit_circular_model(cfg.domain, max_level=max_level)
        if model.domain.genus != 1:
            raise NotImplementedError("fast path supports genus 1")
        self.cfg = cfg
        self.pars = sle_params(cfg.kappa)
        self.max_level = max_level
        self.theta_p = _params_of(model.domain)
        self.model = CanonicalMap(model.domain, model.q, max_level=max_level)
        self.engine = _G1Engine(self.model, cfg.kappa)
        self.xi = float(cfg.xi0)
        self.t = 0.0
        self.rng = rng
        self.zs = np.array([complex(z) for z in zs])
        self.logd = np.zeros(len(zs), dtype=complex)
        self.alive = np.ones(len(zs), dtype=bool)
        self.swallow_t = np.full(len(zs), np.nan)
        self.tracker = _Tracker()
        self.aborted = False
        # warm states
        self._crit_t = self._initial_crit_angles()
        self._p_angle = cmath.phase(self.model.boundary_preimage(self.xi))
        self._u_warm = np.array([self.model.inverse(complex(z)) for z in self.zs]) \
            if len(self.zs) else np.empty(0, dtype=complex)
        self._J = None
        self._steps_since_J = 0

    # -- batched Newton helpers ------------------------------------------------

    def _initial_crit_angles(self):
        crit = self.model.criticals()[0]
        c = self.model.domain.inner_circles[0]
        return np.array([cmath.phase(crit[0] - c.center),
                         cmath.phase(crit[1] - c.center)])

    def _crit_newton(self, model, t, iters=2):
        c = model.domain.inner_circles[0]
        for _ in range(iters):
            u = c.center + c.radius * np.exp(1j * t)
            e = 1j * c.radius * np.exp(1j * t)
            F1 = model.dF(u)
            F2 = model.d2F(u)
            g = np.real(F1 * e)
            gp = np.real(F2 * e * e + F1 * 1j * e)
            t = t - g / gp
        return t

    def _slits_of(self, model, t):
        c = model.domain.inner_circles[0]
        u = c.center + c.radius * np.exp(1j * t)
        w = model.F(u)
        if w[0].real > w[1].real:
            w = w[::-1]
            t = t[::-1]
        y = 0.5 * (w[0].imag + w[1].imag)
        return t, np.array([complex(w[0].real, y), complex(w[1].real, y)]), \
            float(abs(w[0].imag - w[1].imag))

    def _p_newton(self, model, xi_vals, t0, iters=3):
        t = np.full(len(xi_vals), t0, dtype=float) if np.ndim(t0) == 0 else np.array(t0)
        for _ in range(iters):
            p = np.exp(1j * t)
            r = np.real(model.F(p)) - xi_vals
            d = np.real(model.dF(p) * 1j * p)
            t = t - r / d
        return t

    def _refit(self, slit_targets, warm_t):
        """Newton on circle params so the canonical map hits the slit targets."""
        theta = self.theta_p.copy()
        targ = np.array([slit_targets[0].real, slit_targets[1].real,
                         slit_targets[0].imag])

        def resid(th, tc):
            dom = _domain_of(th)
            model = CanonicalMap(dom, self.model.q, max_level=self.max_level)
            tc = self._crit_newton(model, tc)
            tc, w, defect = self._slits_of(model, tc)
            return np.array([w[0].real, w[1].real, w[0].imag]) - targ, model, tc

        r, model, tc = resid(theta, self._crit_t)
        for it in range(14):
            if np.max(np.abs(r)) < 1e-9:
                break
            if self._J is None or self._steps_since_J > 25 or it >= 6:
                J = np.empty((3, 3))
                h = 1e-7
                for k in range(3):
                    tp = theta.copy()
                    tp[k] += h
                    rp, _, _ = resid(tp, tc)
                    J[:, k] = (rp - r) / h
                self._J = J
                self._steps_since_J = 0
            step = np.linalg.solve(self._J, r)
            theta = theta - step
            r, model, tc = resid(theta, tc)
        else:
            raise MapError("g1 refit did not converge")
        self.theta_p = theta
        self.model = model
        self.engine = _G1Engine(model, self.cfg.kappa)
        self._crit_t = tc
        self._steps_since_J += 1

    def _u_newton(self, model, w_vals, u0, iters=4):
        u = np.array(u0, dtype=complex)
        for _ in range(iters):
            r = model.F(u) - w_vals
            u = u - r / model.dF(u)
        return u

    # -- drift (closed-form pieces on the current model) -----------------------

    def _drift(self, xi, p):
        eng = self.engine
        model = self.model
        # r0 via two symmetric offsets + Richardson
        d = 5e-3
        offs = np.array([d, -d, 0.5 * d, -0.5 * d])
        tp = self._p_newton(model, xi + offs, self._p_angle)
        pp = np.exp(1j * tp)
        Lq = model.sk.log1(pp, np.full(4, model.q))
        Lu = model.sk.log1(pp, np.full(4, complex(p)))
        vals = -2.0 * (Lq - Lu) / model.dF(pp) - 2.0 / offs
        f1 = 0.5 * (vals[0] + vals[1])
        f2 = 0.5 * (vals[2] + vals[3])
        r0 = float((4.0 * f2 - f1).real) / 3.0
        chat = eng.dchat(xi, p)
        lam = 2.0 * (-self.cfg.kappa * self.pars.a**2 * chat.real - r0)
        return lam + self.cfg.drift_offset

    def step(self, dt: float):
        cfg, model = self.cfg, self.model
        xi = self.xi
        try:
            t_p = self._p_newton(model, np.array([xi]), self._p_angle)[0]
            self._p_angle = t_p
            p0 = np.exp(1j * t_p)
            live = self.alive
            crit_u = model.domain.inner_circles[0].center + \
                model.domain.inner_circles[0].radius * np.exp(1j * self._crit_t)
            if np.any(live):
                self._u_warm[live] = self._u_newton(model, self.zs[live],
                                                    self._u_warm[live])
            us = np.concatenate([self._u_warm[live], crit_u])
            v = np.asarray(model.vector_field(xi, None, u=us, p=p0))
            n_live = int(np.count_nonzero(live))
            dv = np.asarray(model.vector_field_deriv(xi, None, u=us[:n_live], p=p0)) \
                if n_live else np.empty(0, dtype=complex)
            lam = self._drift(xi, p0)
            dxi = math.sqrt(cfg.kappa * dt) * self.rng.standard_normal() + lam * dt
            self.zs[live] = self.zs[live] - dt * v[:n_live]
            self.logd[live] += -dt * dv
            ends = np.array([model.F(u) for u in crit_u]) - dt * v[n_live:]
            self._refit(ends, self._crit_t)
            self.xi = xi + dxi
            self.t += dt
        except (MapError, DomainError, FloatingPointError, np.linalg.LinAlgError):
            self.aborted = True
            return
        y = 0.5 * (ends[0].imag + ends[1].imag)
        lo, hi = sorted((ends[0].real, ends[1].real))
        slits = ChordalStandardDomain(((complex(lo, y), complex(hi, y)),))
        for i in np.nonzero(self.alive)[0]:
            zi = self.zs[i]
            d = min(abs(zi - self.xi), zi.imag)
            for zl, zr in slits.slits:
                if zl.real <= zi.real <= zr.real:
                    d = min(d, abs(zi.imag - zl.imag))
                else:
                    d = min(d, abs(zi - zl), abs(zi - zr))
            if d < 1e-6:
                self.alive[i] = False
                self.swallow_t[i] = self.t

    # -- bosonic observable -------------------------------------------------------

    def observable(self, i: int) -> float:
        """M = -2b Im log g' - a Im[calG(p,u) - calG(q,u)] + charge terms,
        with every multivalued factor arg-tracked along the path."""
        cfg, model, eng = self.cfg, self.model, self.engine
        a, b = self.pars.a, self.pars.b
        z = self.zs[i]
        u = self._u_newton(model, np.array([complex(z)]),
                           np.array([self._u_warm[i]]))[0] if self.alive[i] \
            else self._u_warm[i]
        p = np.exp(1j * self._p_newton(model, np.array([self.xi]), self._p_angle)[0])
        beta = cfg.beta if cfg.beta is not None else BackgroundCharge((), self.pars.b, 1)
        out = -2.0 * b * self.logd[i].imag
        out += -a * self._im_calG_diff(i, "xi", p, u)
        for k, (bk, qk) in enumerate(beta.finite_atoms):
            tk_angle = self._p_newton(model, np.array([qk.real]), self._p_angle)[0]
            pk = np.exp(1j * tk_angle)
            out += -bk * self._im_calG_diff(i, ("q", k), pk, u)
        return out

    def _im_calG_diff(self, idx, tag, p, u):
        model, eng = self.model, self.engine
        sk = model.sk
        tk = self.tracker
        us = 1.0 / np.conj(u)
        q = model.q
        val = 0.0
        val += tk.arg((idx, tag, "w1"), sk.omega(p, us))
        val -= tk.arg((idx, tag, "w2"), sk.omega(p, u))
        val -= tk.arg((idx, tag, "w1q"), sk.omega(q, us))
        val += tk.arg((idx, tag, "w2q"), sk.omega(q, u))
        h_u = -math.log(abs(eng.T(u))) / eng.r_mod
        argTp = tk.arg((idx, tag, "Tp"), eng.T(p))
        argTq = tk.arg((idx, tag, "Tq"), eng.T(q))
        val += (argTp - argTq) * h_u
        return val


def _params_of(domain: CircularDomain) -> np.ndarray:
    c = domain.inner_circles[0]
    return np.array([c.center.real, c.center.imag, math.log(c.radius)])


def _domain_of(theta: np.ndarray) -> CircularDomain:
    return CircularDomain((Circle(complex(theta[0], theta[1]), math.exp(theta[2])),))


# ---------------------------------------------------------------------------
# Public operations


def sample_driving(config: SleConfig, path_index: int = 0, record_every: int = 1):
    """One driving path: list of (t, xi) plus the final path object."""
    rng = _rng_for_path(config.seed, path_index)
    genus = 0
    if isinstance(config.domain, CanonicalMap):
        genus = config.domain.domain.genus
    elif isinstance(config.domain, ChordalStandardDomain):
        genus = config.domain.genus
    if genus == 0:
        path = _G0Path(config, [], rng)
    elif genus == 1:
        path = _G1Path(config, [], rng)
    else:
        raise NotImplementedError("sampling implemented for genus <= 1")
    n_steps = int(round(config.T / config.dt))
    out = [(0.0, config.xi0)]
    for k in range(n_steps):
        path.step(config.dt)
        if getattr(path, "aborted", False):
            break
        if (k + 1) % record_every == 0:
            out.append((path.t, path.xi))
    return out, path


def bosonic_observable(path, i: int = 0) -> float:
    """Current value of the bosonic martingale observable for tracked point i."""
    return path.observable(i)


def _run_one_path(args):
    config, z_list, t_grid, idx = args
    rng = _rng_for_path(config.seed, idx)
    genus = 0
    if isinstance(config.domain, CanonicalMap):
        genus = config.domain.domain.genus
    elif isinstance(config.domain, ChordalStandardDomain):
        genus = config.domain.genus
    path = _G0Path(config, z_list, rng) if genus == 0 else _G1Path(config, z_list, rng)
    m0 = np.array([path.observable(i) for i in range(len(z_list))])
    stopped = m0.copy()
    n_steps = int(round(config.T / config.dt))
    grid_vals = np.empty((len(t_grid), len(z_list)))
    gi = 0
    eps = 1e-12
    while gi < len(t_grid) and t_grid[gi] <= eps:
        grid_vals[gi] = 0.0
        gi += 1
    for k in range(n_steps):
        path.step(config.dt)
        if getattr(path, "aborted", False):
            return None
        for i in range(len(z_list)):
            if path.alive[i]:
                stopped[i] = path.observable(i)
        while gi < len(t_grid) and path.t >= t_grid[gi] - eps:
            grid_vals[gi] = stopped - m0
            gi += 1
    while gi < len(t_grid):
        grid_vals[gi] = stopped - m0
        gi += 1
    return grid_vals


def mo_test(config: SleConfig, z_list, t_grid, observable: str = "bosonic",
            processes: int = 1) -> MoReport:
    """Monte Carlo martingale test: pass iff |mean(M_t - M_0)| <= 3 SE for all t."""
    t_grid = np.asarray(t_grid, dtype=float)
    jobs = [(config, list(z_list), t_grid, idx) for idx in range(config.n_paths)]
    if processes > 1:
        import multiprocessing as mp

        with mp.Pool(processes) as pool:
            results = pool.map(_run_one_path, jobs, chunksize=8)
    else:
        results = [_run_one_path(j) for j in jobs]
    ok = [r for r in results if r is not None]
    aborted = len(results) - len(ok)
    if aborted > 0.2 * config.n_paths:
        raise ArithmeticError(
            "mo_test inconclusive: %d of %d paths aborted" % (aborted, config.n_paths))
    data = np.stack(ok)  # (paths, times, zs)
    flat = data.reshape(data.shape[0], -1)
    mean = flat.mean(axis=0)
    stderr = flat.std(axis=0, ddof=1) / math.sqrt(flat.shape[0])
    passed = bool(np.all(np.abs(mean) <= 3.0 * np.maximum(stderr, 1e-300)))
    return MoReport(observable, t_grid, mean, stderr, len(ok), aborted, passed)
