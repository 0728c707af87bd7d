"""Command-line front end: Green's function evaluation and grids, Loewner
vector fields and flows, period data, the SLE drift, martingale tests, and
the verification suite.  CSV output uses full double precision (%.17g);
JSON reports carry the schema tag "mcd-cft/1".
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .domains import ChordalStandardDomain, CircularDomain, DomainError, domain_from_json
from .greens import Cylinder, HalfPlane, make_evaluator
from .loewner import CanonicalMap,fit_circular_model, make_state, loewner_step, vf_expansion
from .cft import BackgroundCharge, CftContext, drift_lambda, sle_params
from .sle import MoReport, SleConfig, mo_test, sample_driving
from .special import build_period_data
from .verify import run_suite

FMT = "%.17g"


def _fmt(x) -> str:
    return FMT % float(x)


def _load_domain(path: str):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise SystemExit2("cannot read domain file %s: %s" % (path, exc))
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemExit2("invalid domain JSON in %s: %s" % (path, exc))
    kind = data.get("type")
    if kind == "halfplane":
        return HalfPlane()
    if kind == "cylinder":
        return Cylinder(float(data["r"]))
    try:
        return domain_from_json(text)
    except DomainError as exc:
        raise SystemExit2(str(exc))


class SystemExit2(SystemExit):
    def __init__(self, msg):
        print("error: %s" % msg, file=sys.stderr)
        super().__init__(2)


def _load_beta(path: str | None, genus: int, kappa: float | None):
    if path is None:
        b = sle_params(kappa).b if kappa else 0.0
        return BackgroundCharge.at_infinity(b, genus)
    with open(path) as fh:
        data = json.load(fh)
    atoms = [(float(a["beta"]), complex(a["q"][0], a["q"][1]) if isinstance(a["q"], list)
              else complex(a["q"])) for a in data.get("atoms", [])]
    return BackgroundCharge.make(atoms, genus, data.get("b"))


def _parse_complex(text: str) -> complex:
    re_, im = (text.split(",") + ["0"])[:2]
    return complex(float(re_), float(im))


def _write(out, lines):
    if out in (None, "-"):
        sys.stdout.write("\n".join(lines) + "\n")
    else:
        with open(out, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _parse_grid(spec: str):
    a, b, n = spec.split(":")
    return np.linspace(float(a), float(b), int(n))


# ---------------------------------------------------------------------------
# subcommands


def cmd_green(args):
    domain = _load_domain(args.domain)
    method = {"sk": "sk", "theta": "theta", "colloc": "colloc", None: None}[args.method]
    kind = {"diri": "dirichlet", "er": "er"}[args.kind]
    ev = make_evaluator(domain, kind, method)
    if args.grid:
        xs = _parse_grid(args.grid_x)
        ys = _parse_grid(args.grid_y)
        zeta = _parse_complex(args.zeta)
        lines = ["x,y,G"]
        for y in ys:
            for x in xs:
                z = complex(x, y)
                try:
                    g = ev.G(zeta, z)
                except Exception:
                    g = math.nan
                lines.append(",".join([_fmt(x), _fmt(y), _fmt(g)]))
        _write(args.out, lines)
        return 0
    zeta = _parse_complex(args.zeta)
    z = _parse_complex(args.z)
    print(_fmt(ev.G(zeta, z)))
    return 0


def cmd_vfield(args):
    domain = _load_domain(args.domain)
    if isinstance(domain, CircularDomain):
        target = CanonicalMap(domain, max_level=args.trunc_level)
    elif isinstance(domain, ChordalStandardDomain):
        target = (fit_circular_model(domain, max_level=args.trunc_level)
                  if domain.genus else HalfPlane())
    else:
        target = domain
    from .loewner import vector_field

    zeta = float(args.zeta)
    lines = ["x,y,re,im"]
    for y in _parse_grid(args.grid_y):
        for x in _parse_grid(args.grid_x):
            z = complex(x, y)
            try:
                v = complex(np.asarray(vector_field(target, zeta, np.array([z]))).ravel()[0])
            except Exception:
                v = complex(math.nan, math.nan)
            lines.append(",".join([_fmt(x), _fmt(y), _fmt(v.real), _fmt(v.imag)]))
    _write(args.out, lines)
    return 0


def cmd_flow(args):
    domain = _load_domain(args.domain)
    tracked = [_parse_complex(t) for t in (args.track.split(";") if args.track else [])]
    st = make_state(domain if not isinstance(domain, HalfPlane) else HalfPlane(),
                    xi=args.xi0, tracked=tracked)
    if args.driving:
        drive = np.loadtxt(args.driving, delimiter=",", ndmin=2)
        increments = np.diff(drive[:, 1])
        dts = np.diff(drive[:, 0])
    else:
        n = int(round(args.T / args.dt))
        increments = np.zeros(n)
        dts = np.full(n, args.dt)
    header = ["t", "xi"]
    for k in range(st.genus):
        header += ["zl%d_re" % k, "zl%d_im" % k, "zr%d_re" % k, "zr%d_im" % k]
    for i in range(len(tracked)):
        header += ["z%d_re" % i, "z%d_im" % i, "alive%d" % i]
    lines = [",".join(header)]

    def emit(state):
        row = [_fmt(state.t), _fmt(state.xi)]
        for zl, zr in state.domain.slits:
            row += [_fmt(zl.real), _fmt(zl.imag), _fmt(zr.real), _fmt(zr.imag)]
        for p in state.tracked:
            row += [_fmt(p.z.real), _fmt(p.z.imag), "1" if p.alive else "0"]
        lines.append(",".join(row))

    emit(st)
    for dxi, dt in zip(increments, dts):
        st = loewner_step(st, float(dxi), float(dt))
        emit(st)
    _write(args.out, lines)
    return 0


def cmd_drift(args):
    domain = _load_domain(args.domain)
    if isinstance(domain, CircularDomain):
        ctx = CftContext(CanonicalMap(domain, max_level=args.trunc_level))
    elif isinstance(domain, ChordalStandardDomain) and domain.genus:
        ctx = CftContext(fit_circular_model(domain, max_level=args.trunc_level))
    else:
        ctx = CftContext(HalfPlane())
    beta = _load_beta(args.beta, ctx.genus, args.kappa)
    lines = ["xi,Lambda"]
    for xi in _parse_grid(args.xi_grid):
        lines.append(",".join([_fmt(xi), _fmt(drift_lambda(ctx, beta, float(xi), args.kappa))]))
    _write(args.out, lines)
    return 0


def cmd_dump_periods(args):
    domain = _load_domain(args.domain)
    if not isinstance(domain, CircularDomain) or domain.genus < 1:
        raise SystemExit2("dump-periods needs a circular domain of genus >= 1")
    pd = build_period_data(domain)
    payload = {
        "schema": "mcd-cft/1",
        "genus": pd.genus,
        "P": [[float(x) for x in row] for row in pd.P],
        "tau_re": [[float(x.real) for x in row] for row in pd.tau],
        "tau_im": [[float(x.imag) for x in row] for row in pd.tau],
        "e_char": {"m": list(pd.e_char[0]), "n": list(pd.e_char[1])},
        "e_re": [float(x.real) for x in pd.e],
        "e_im": [float(x.imag) for x in pd.e],
        "boundary_error": pd.solver.boundary_error,
        "P_symmetry_defect": pd.solver.symmetry_defect,
        "theta_truncation_radius": pd.trunc.radius,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    _write(args.out, [text])
    return 0


def cmd_sle_sample(args):
    domain = _load_domain(args.domain)
    if isinstance(domain, (CircularDomain, ChordalStandardDomain)) and domain.genus:
        domain = (CanonicalMap(domain, max_level=args.trunc_level)
                  if isinstance(domain, CircularDomain)
                  else fit_circular_model(domain, max_level=args.trunc_level))
    cfg = SleConfig(kappa=args.kappa, dt=args.dt, T=args.T, n_paths=args.n_paths,
                    seed=args.seed, domain=domain, xi0=args.xi0,
                    beta=_load_beta(args.beta, getattr(domain, "genus", 0) if not
                                    isinstance(domain, CanonicalMap)
                                    else domain.domain.genus, args.kappa))
    lines = ["path,t,xi"]
    for idx in range(cfg.n_paths):
        traj, _ = sample_driving(cfg, idx, record_every=args.record_every)
        for t, xi in traj:
            lines.append(",".join([str(idx), _fmt(t), _fmt(xi)]))
    _write(args.out, lines)
    return 0


def cmd_mo_test(args):
    domain = _load_domain(args.domain)
    genus = domain.genus if hasattr(domain, "genus") else 0
    if isinstance(domain, CircularDomain) and genus:
        domain = CanonicalMap(domain, max_level=args.trunc_level)
    elif isinstance(domain, ChordalStandardDomain) and genus:
        domain = fit_circular_model(domain, max_level=args.trunc_level)
    cfg = SleConfig(kappa=args.kappa, dt=args.dt, T=args.T, n_paths=args.n_paths,
                    seed=args.seed, domain=domain, xi0=args.xi0,
                    beta=_load_beta(args.beta, genus, args.kappa),
                    drift_offset=args.drift_offset)
    zs = [_parse_complex(t) for t in args.z.split(";")]
    tgrid = _parse_grid(args.tgrid)
    report = mo_test(cfg, zs, tgrid, processes=args.threads)
    text = json.dumps(report.as_dict(), indent=2, sort_keys=True)
    _write(args.out, [text])
    return 0 if report.passed else 1


def cmd_verify(args):
    reports = run_suite(quick=args.quick)
    for r in reports:
        print(r.line())
    if args.out:
        payload = {"schema": "mcd-cft/1", "checks": [r.as_dict() for r in reports]}
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    return 0 if all(r.passed for r in reports) else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mcdcft",
        description="Green's functions, Loewner flows, GFF correlations and "
                    "SLE drift in multiply connected domains")
    ap.add_argument("--version", action="version", version="mcdcft " + __version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--trunc-level", type=int, default=8,
                       help="Schottky product truncation level")
        p.add_argument("--theta-radius", type=int, default=None,
                       help="theta lattice radius override")
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("green", help="evaluate a Green's function (G = -log|z-w| + harmonic)")
    common(p)
    p.add_argument("--domain", required=True)
    p.add_argument("--kind", choices=["diri", "er"], default="diri")
    p.add_argument("--method", choices=["sk", "theta", "colloc"], default=None)
    p.add_argument("--zeta", required=True, help="a,b for a+bi")
    p.add_argument("--z", default=None)
    p.add_argument("--grid", action="store_true")
    p.add_argument("--grid-x", default="-1:1:21")
    p.add_argument("--grid-y", default="0.05:1:11")
    p.set_defaults(func=cmd_green)

    p = sub.add_parser("vfield", help="Loewner vector field v_zeta(z) = 2i H^{ER+}(z, zeta)")
    common(p)
    p.add_argument("--domain", required=True)
    p.add_argument("--zeta", type=float, required=True)
    p.add_argument("--grid-x", default="-2:2:21")
    p.add_argument("--grid-y", default="0.05:2:11")
    p.set_defaults(func=cmd_vfield)

    p = sub.add_parser("flow", help="chordal Loewner flow dg/dt = -v_xi(g)")
    common(p)
    p.add_argument("--domain", required=True)
    p.add_argument("--driving", default=None, help="CSV t,xi file")
    p.add_argument("--track", default=None, help="semicolon-separated a,b points")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--T", type=float, default=0.1)
    p.add_argument("--xi0", type=float, default=0.0)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("drift", help="SLE drift Lambda(xi) = kappa d log E Upsilon - r0")
    common(p)
    p.add_argument("--domain", required=True)
    p.add_argument("--beta", default=None)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--xi-grid", dest="xi_grid", default="-1:1:11")
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("dump-periods", help="P, tau = (i/pi) P^{-1}, theta characteristic")
    common(p)
    p.add_argument("--domain", required=True)
    p.set_defaults(func=cmd_dump_periods)

    p = sub.add_parser("sle-sample", help="sample SLE(kappa, Lambda) driving paths")
    common(p)
    p.add_argument("--domain", required=True)
    p.add_argument("--beta", default=None)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--T", type=float, default=0.2)
    p.add_argument("--n-paths", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--xi0", type=float, default=0.0)
    p.add_argument("--record-every", type=int, default=1)
    p.set_defaults(func=cmd_sle_sample)

    p = sub.add_parser("mo-test", help="Monte Carlo martingale-observable test (3 SE)")
    common(p)
    p.add_argument("--domain", required=True)
    p.add_argument("--beta", default=None)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--T", type=float, default=0.2)
    p.add_argument("--n-paths", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--xi0", type=float, default=0.0)
    p.add_argument("--observable", default="bosonic", choices=["bosonic"])
    p.add_argument("--z", required=True, help="semicolon-separated a,b points")
    p.add_argument("--tgrid", default="0.02:0.2:10")
    p.add_argument("--drift-offset", type=float, default=0.0)
    p.set_defaults(func=cmd_mo_test)

    p = sub.add_parser("verify", help="run the structural-identity suite "
                       "(Ward/Eguchi-Ooguri, BPZ-Cardy, Hadamard, crucial identity)")
    common(p)
    p.add_argument("--fixtures", default="default")
    p.add_argument("--quick", action="store_true")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors already
        raise
    try:
        return args.func(args)
    except SystemExit2 as exc:
        return 2
    except DomainError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
