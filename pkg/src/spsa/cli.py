"""Command-line front end.

Exit codes: 0 when an analysis completes (an infeasible verdict is a result),
1 on runtime failure, 2 on invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import sys

import numpy as np

from . import __version__, lmi
from .exceptions import (DimensionMismatch, GridTooCoarse, SchemaError, SpecUnachievable,
                         SpsaError)
from .io import load_loss, load_system, parse_number, read_json, to_jsonable, write_json, atomic_open
from .model import FoLeadLag, LossParams, LtiAdmittance, LtvAdmittanceGrid


class ConfigError(Exception):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


def _positive(name):
    def conv(text):
        try:
            x = parse_number(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not x > 0:
            raise argparse.ArgumentTypeError(f"{name} must be > 0, got {text}")
        return x
    return conv


def _nonneg(name):
    def conv(text):
        try:
            x = parse_number(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not x >= 0:
            raise argparse.ArgumentTypeError(f"{name} must be >= 0, got {text}")
        return x
    return conv


def _number(name):
    def conv(text):
        try:
            return parse_number(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
    return conv


def _list(name, positive=True, allow_inf=False, allow_zero=False):
    """Comma-separated numbers, or ``start:stop:count`` for an evenly spaced range."""
    def conv(text):
        try:
            if text.count(":") == 2:
                a, b, n = text.split(":")
                vals = list(np.linspace(float(a), float(b), int(n)))
            else:
                vals = [parse_number(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name}: cannot parse {text!r}") from None
        if not vals:
            raise argparse.ArgumentTypeError(f"{name}: empty list")
        for v in vals:
            if math.isinf(v) and not allow_inf:
                raise argparse.ArgumentTypeError(f"{name}: infinite entries not allowed")
            if positive and not (v > 0 or (allow_zero and v == 0)):
                raise argparse.ArgumentTypeError(f"{name}: entries must be positive, got {v:g}")
        return vals
    return conv


def _add_loss_args(p, tau_r=True):
    p.add_argument("--loss", help="loss-parameter JSON (flags below override it)")
    p.add_argument("--R", type=_list("--R"), help="diagonal actuator resistances, ohm (comma list, default 1 per port)")
    p.add_argument("--tau-s", type=_positive("--tau-s"), help="leakage time constant, s ('inf' allowed)")
    if tau_r:
        p.add_argument("--tau-r", type=_nonneg("--tau-r"),
                       help="transmission time constant, s ('inf' allowed)")
    p.add_argument("--C-s", type=_positive("--C-s"), help="storage capacitance, F (reporting only)")


def _add_common(p):
    p.add_argument("--tol", type=_positive("--tol"), default=lmi.DEFAULT_TOL,
                   help="LMI feasibility tolerance (default %(default)g)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spsa", description=(
        "Feasibility analysis of self-powered synthetic admittances."))
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="sufficient and necessary feasibility verdicts")
    p.add_argument("--system", required=True, help="system JSON (lti, ltv or fo)")
    _add_loss_args(p)
    _add_common(p)
    p.add_argument("--fd-scheme", choices=("central", "one_sided"), default="central")
    p.add_argument("--no-certificate", action="store_true", help="omit certificate matrices")
    p.add_argument("--out", help="write the verdict JSON here instead of stdout")

    p = sub.add_parser("simulate", help="integrate the storage dynamics for a port-voltage input")
    p.add_argument("--system", required=True)
    _add_loss_args(p)
    p.add_argument("--signal", default="sine", help="sine, noise or a CSV file of t,v1,v2,...")
    p.add_argument("--amplitude", type=_positive("--amplitude"), default=1.0)
    p.add_argument("--omega", type=_positive("--omega"), default=1.0, help="sine frequency, rad/s")
    p.add_argument("--band", type=_list("--band"), default=[0.1, 10.0], help="noise band lo,hi (rad/s)")
    p.add_argument("--duration", type=_positive("--duration"), default=10.0)
    p.add_argument("--dt", type=_positive("--dt"))
    p.add_argument("--E0", type=_positive("--E0"), default=1e-3, help="initial stored energy, J")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="trajectory CSV (default stdout)")
    p.add_argument("--summary", help="summary JSON path")
    p.add_argument("--plot", help="SVG output path")

    p = sub.add_parser("pareto", help="max tau_r over a grid of R scalings and leakage rates")
    p.add_argument("--system", required=True)
    p.add_argument("--R-grid", type=_list("--R-grid"), required=True, help="R scalings")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--tau-s-grid", type=_list("--tau-s-grid", allow_inf=True),
                   help="leakage time constants, s ('inf' allowed)")
    g.add_argument("--tau-s-inv-grid", type=_list("--tau-s-inv-grid", allow_zero=True),
                   help="leakage rates 1/tau_s, 1/s (0 allowed)")
    p.add_argument("--base-R", type=_list("--base-R"), help="resistances scaled by the grid (default ones)")
    p.add_argument("--tol-rel", type=_positive("--tol-rel"), default=1e-3)
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--json", help="JSON report path")
    p.add_argument("--plot", help="SVG output path")

    p = sub.add_parser("fo", help="fractional-order lead-lag feasibility")
    p.add_argument("--system", help="fo system JSON (alternative to the design flags)")
    p.add_argument("--phi-m", type=_number("--phi-m"), help="peak phase, degrees")
    p.add_argument("--gamma-m", type=_positive("--gamma-m"), default=1.0)
    p.add_argument("--omega-m", type=_positive("--omega-m"), default=1.0)
    p.add_argument("--mu", type=_number("--mu"))
    p.add_argument("--R", type=_positive("--R"), required=True)
    p.add_argument("--tau-s", type=_positive("--tau-s"), default=math.inf)
    p.add_argument("--tol-rel", type=_positive("--tol-rel"), default=1e-3)
    p.add_argument("--out", help="JSON path (default stdout)")

    p = sub.add_parser("backbone", help="corner points of FO feasible regions over mu")
    p.add_argument("--mu-grid", type=_list("--mu-grid", positive=False), required=True,
                   help="comma list or start:stop:count")
    p.add_argument("--phi-m", type=_number("--phi-m"), default=30.0)
    p.add_argument("--gamma-m", type=_positive("--gamma-m"), default=1.0)
    p.add_argument("--omega-m", type=_positive("--omega-m"), default=1.0)
    p.add_argument("--R", type=_list("--R"), required=True, help="one backbone per value")
    p.add_argument("--tau-s", type=_positive("--tau-s"), default=math.inf)
    p.add_argument("--tol-rel", type=_positive("--tol-rel"), default=1e-3)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--plot", help="SVG output path")

    p = sub.add_parser("verify", help="re-check the certificate in a verdict JSON")
    p.add_argument("verdict", help="JSON written by 'check'")
    return ap


def resolve_loss(args, n_p, need_tau_r=True) -> LossParams:
    doc = {}
    if getattr(args, "loss", None):
        doc = read_json(args.loss)
        base = load_loss(args.loss)
        doc = {"R": base.R.tolist(), "tau_s": base.tau_s, "tau_r": base.tau_r, "C_s": base.C_s}
    if args.R is not None:
        doc["R"] = args.R
    if args.tau_s is not None:
        doc["tau_s"] = args.tau_s
    if need_tau_r and getattr(args, "tau_r", None) is not None:
        doc["tau_r"] = args.tau_r
    if getattr(args, "C_s", None) is not None:
        doc["C_s"] = args.C_s
    if "R" not in doc:
        doc["R"] = [1.0]
    if len(doc["R"]) == 1 and n_p > 1:
        doc["R"] = doc["R"] * n_p
    if len(doc["R"]) != n_p:
        raise ConfigError("--R", f"expected {n_p} entries for a {n_p}-port system, got {len(doc['R'])}")
    return LossParams(doc["R"], tau_s=doc.get("tau_s", math.inf), tau_r=doc.get("tau_r", 0.0),
                      C_s=doc.get("C_s", 1.0))


def _config(args, **extra) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "loss"}
    if getattr(args, "loss", None):
        cfg["loss_file"] = args.loss
    cfg.update(extra)
    return cfg


def _emit_json(doc, path):
    if path:
        write_json(path, doc)
    else:
        json.dump(to_jsonable(doc), sys.stdout, indent=2)
        sys.stdout.write("\n")


def _emit_text(writer, path):
    if path:
        with atomic_open(path, encoding="utf-8") as fh:
            writer(fh)
    else:
        buf = _io.StringIO()
        writer(buf)
        sys.stdout.write(buf.getvalue())


def cmd_check(args):
    from .fo import best_parameters, check_analyticity

    system, path = load_system(args.system)
    if isinstance(system, FoLeadLag):
        loss = resolve_loss(args, 1)
        check_analyticity(system, loss.tau_s)
        s = best_parameters(system, float(loss.R[0]), loss.tau_s, loss.tau_r)
        verdict = {"sufficient": "feasible" if s.margin >= -1e-9 else "infeasible",
                   "margins": s.margins,
                   "params": None if s.params is None else s.params.to_dict()}
    elif isinstance(system, LtvAdmittanceGrid):
        from .feas_ltv import check_ltv

        loss = resolve_loss(args, system.n_p)
        verdict = check_ltv(system, loss, args.fd_scheme, args.tol).to_dict(not args.no_certificate)
    else:
        from .feas_lti import check_lti

        loss = resolve_loss(args, system.n_p)
        verdict = check_lti(system, loss, args.tol).to_dict(not args.no_certificate)
    doc = {"tool": "spsa", "version": __version__,
           "config": _config(args, system_path=str(path), loss=loss.to_dict()),
           "system": system.to_dict(), **verdict}
    _emit_json(doc, args.out)
    return 0


def _make_signal(args, n_p, dt):
    from .energy import Signal, bandlimited_noise, sine_signal

    t = np.arange(0.0, args.duration + dt / 2, dt)
    if args.signal == "sine":
        return sine_signal(t, n_p, args.amplitude, args.omega)
    if args.signal == "noise":
        if len(args.band) != 2 or args.band[0] >= args.band[1]:
            raise ConfigError("--band", "expected lo,hi with lo < hi")
        return bandlimited_noise(t, n_p, tuple(args.band), rms=args.amplitude, seed=args.seed)
    try:
        data = np.loadtxt(args.signal, delimiter=",", comments="#", ndmin=2)
    except OSError as exc:
        raise ConfigError("--signal", str(exc)) from None
    except ValueError:
        data = np.loadtxt(args.signal, delimiter=",", comments="#", ndmin=2, skiprows=1)
    if data.shape[1] != n_p + 1:
        raise ConfigError("--signal", f"CSV needs {n_p + 1} columns (t and one per port)")
    return Signal(data[:, 0], data[:, 1:])


def cmd_simulate(args):
    from .energy import _max_rate, simulate

    system, path = load_system(args.system)
    if isinstance(system, FoLeadLag):
        raise ConfigError("--system", "simulation needs a state-space (lti or ltv) system")
    loss = resolve_loss(args, system.n_p)
    rate = _max_rate(system)
    dt = args.dt if args.dt is not None else min(0.01, 0.1 / rate if rate > 0 else 0.01)
    if rate > 0 and dt > 0.1 / rate * (1 + 1e-12):
        raise ConfigError("--dt", f"must not exceed a tenth of the fastest time constant ({0.1 / rate:g} s)")
    sig = _make_signal(args, system.n_p, dt)
    traj = simulate(system, sig, args.E0, loss, dt)
    _emit_text(traj.write_csv, args.out)
    summary = {"tool": "spsa", "version": __version__,
               "config": _config(args, system_path=str(path), loss=loss.to_dict(), dt=dt),
               "choked": traj.choked,
               "choke": None if traj.choke is None else dict(zip(("t", "E_s", "P_e"), traj.choke)),
               "final_energy": float(traj.E_s[-1]), "relative_residual": traj.relative_residual(),
               "samples": int(traj.t.size)}
    if args.summary:
        write_json(args.summary, summary)
    else:
        sys.stderr.write(json.dumps(to_jsonable(summary)) + "\n")
    if args.plot:
        from . import plotting

        plotting.trajectory(traj, args.plot)
    return 0


def cmd_pareto(args):
    from .pareto import sweep

    system, path = load_system(args.system)
    if not isinstance(system, LtiAdmittance):
        raise ConfigError("--system", "pareto sweeps need an lti system")
    if args.tau_s_grid is not None:
        rates = [0.0 if math.isinf(x) else 1.0 / x for x in args.tau_s_grid]
    else:
        rates = args.tau_s_inv_grid
    base = args.base_R
    if base is not None and len(base) != system.n_p:
        raise ConfigError("--base-R", f"expected {system.n_p} entries")
    if not 0 < args.tol_rel <= 0.1:
        raise ConfigError("--tol-rel", "must lie in (0, 0.1]")
    if args.workers < 1:
        raise ConfigError("--workers", "must be >= 1")
    front = sweep(system, args.R_grid, rates, base, args.tol_rel, tol=args.tol, workers=args.workers)
    _emit_text(front.write_csv, args.out)
    if args.json:
        write_json(args.json, {"tool": "spsa", "version": __version__,
                               "config": _config(args, system_path=str(path)),
                               "front": front.to_dict()})
    if args.plot:
        from . import plotting

        plotting.pareto_regions(front, args.plot)
    return 0


def cmd_fo(args):
    from .fo import design_from_specs, fo_max_tau_r, max_leakage_rate

    if args.system:
        f, path = load_system(args.system)
        if not isinstance(f, FoLeadLag):
            raise ConfigError("--system", "expected a system of kind 'fo'")
    else:
        if args.phi_m is None or args.mu is None:
            raise ConfigError("--phi-m", "give --system or both --phi-m and --mu")
        f = design_from_specs(args.phi_m, args.gamma_m, args.omega_m, args.mu)
    res = fo_max_tau_r(f, args.R, args.tau_s, args.tol_rel)
    rate = max_leakage_rate(f, args.R, args.tol_rel)
    doc = {"tool": "spsa", "version": __version__, "config": _config(args),
           "filter": f.to_dict(), "z11": f.z11, "tau_r_max": res.to_dict(),
           "tau_s_inv_max": rate}
    _emit_json(doc, args.out)
    return 0


def cmd_backbone(args):
    from .fo import CSV_COLUMNS, backbone

    curves = {r: backbone(args.mu_grid, args.phi_m, args.gamma_m, args.omega_m, r,
                          args.tau_s, args.tol_rel) for r in args.R}

    def writer(fh):
        w = csv.writer(fh)
        multi = len(curves) > 1
        w.writerow(list(CSV_COLUMNS) + (["R"] if multi else []))
        for r, pts in curves.items():
            for p in pts:
                w.writerow([f"{x:.12g}" for x in p.row()] + ([f"{r:g}"] if multi else []))

    _emit_text(writer, args.out)
    if args.plot:
        from . import plotting

        plotting.backbones({f"R = {r:g} ohm": pts for r, pts in curves.items()}, args.plot)
    return 0


def cmd_verify(args):
    from .feas_lti import assemble_sufficient
    from .io import loss_from_dict, system_from_dict

    doc = read_json(args.verdict)
    for key in ("system", "config", "certificate"):
        if key not in doc:
            raise SchemaError(f"/{key}", "missing (was the verdict written with certificates?)")
    system = system_from_dict(doc["system"])
    loss = loss_from_dict(doc["config"]["loss"])
    cert = doc["certificate"]
    if isinstance(system, LtvAdmittanceGrid):
        from .feas_ltv import node_margins

        ly, tr = node_margins(system, loss, np.array(cert["P"]), np.array(cert["X"]),
                              cert["grid"]["fd_scheme"], cert["scale"])
        stored = cert["node_margins"]
        ok = (np.allclose(ly, stored["lyapunov"], atol=1e-9)
              and np.allclose(tr, stored["transmission"], atol=1e-9))
        margin = float(min(np.min(ly), np.min(tr)))
    else:
        prob = assemble_sufficient(system, loss, doc["config"].get("tol", lmi.DEFAULT_TOL))
        values = {k: np.array(v) for k, v in cert["values"].items()}
        fresh = lmi.evaluate(prob, prob.pack(values) if prob.n_free else None, cert["scale"])
        ok = all(abs(fresh.worst_eigs[k] - e) <= 1e-9 * max(1.0, abs(e))
                 for k, e in cert["worst_eigs"].items())
        margin = fresh.margin
    status = lmi.classify(margin, doc["config"].get("tol", lmi.DEFAULT_TOL))
    out = {"verified": bool(ok), "recomputed_margin": margin, "status": status,
           "claimed": doc.get("sufficient")}
    _emit_json(out, None)
    return 0 if ok and status == doc.get("sufficient") else 1


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "pareto": cmd_pareto,
            "fo": cmd_fo, "backbone": cmd_backbone, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SchemaError, DimensionMismatch, GridTooCoarse, SpecUnachievable) as exc:
        sys.stderr.write(f"spsa {args.command}: invalid configuration: {exc}\n")
        return 2
    except FileNotFoundError as exc:
        sys.stderr.write(f"spsa {args.command}: invalid configuration: {exc}\n")
        return 2
    except (SpsaError, ArithmeticError, ValueError, OSError) as exc:
        sys.stderr.write(f"spsa {args.command}: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
