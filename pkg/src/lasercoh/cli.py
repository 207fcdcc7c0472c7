"""Command-line surface.

Every data file starts with a reproducibility header: CSV files carry a
leading `# lasercoh <version> config=...` comment; JSON files carry the same
information in a `meta` object (JSON has no comments).  Times are in units
where the flux is 1 unless a flux option says otherwise.  Exit codes:
0 success, 1 validation error, 2 numerical failure.
"""

import argparse
import json
import math
import sys
import time

from . import __version__
from . import bounds as bd
from . import control as ct
from . import discrete as dc
from . import glauber as gl
from .coherence import (DEFAULT_FIT_WINDOW, coherence, coherence_quadrature,
                        fit_power_law, optimize_loss_profile, sql_crossover,
                        sweep)
from .errors import NumericalError, ValidationError
from .model import build_model
from .superop import build_liouvillian, export_matrix_market

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse that exits with code 1 on bad usage (default would be 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _config_string(args):
    cfg = {k: v for k, v in vars(args).items() if k != "func" and v is not None}
    return json.dumps(cfg, sort_keys=True, default=str)


def _meta(args):
    return {"tool": "lasercoh", "version": __version__,
            "config": json.loads(_config_string(args))}


def _write_csv(path, args, columns, rows):
    lines = [f"# lasercoh {__version__} config={_config_string(args)}",
             ",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x)
                              for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path, args, payload, meta_last=False):
    doc = dict(payload)
    if meta_last:
        doc["meta"] = _meta(args)
    else:
        doc = {"meta": _meta(args)}
        doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_model(args):
    model = build_model(args.dim)
    if args.with_linewidth:
        coherence(model)
    payload = json.loads(model.to_json())
    if args.out:
        _write_json(args.out, args, payload, meta_last=True)
    print(f"model dim={model.dim} mu={model.mu:g} flux={model.flux:.12g} "
          f"linewidth={model.linewidth}")
    return 0


def _cmd_coherence(args):
    model = build_model(args.dim)
    sup = build_liouvillian(model)
    if args.export_liouvillian:
        export_matrix_market(sup, args.export_liouvillian)
    c = coherence(model, tol=args.tol, method=args.method, liouvillian=sup)
    payload = {"dim": model.dim, "mu": model.mu, "coherence": c,
               "linewidth": model.linewidth, "flux": model.flux}
    if args.quadrature:
        payload["coherence_quadrature"] = coherence_quadrature(
            model, horizon=args.horizon)
    if args.out:
        _write_json(args.out, args, payload)
    extra = (f" quadrature={payload['coherence_quadrature']:.10g}"
             if args.quadrature else "")
    print(f"coherence={c:.10g} linewidth={model.linewidth:.6g} "
          f"mu={model.mu:g}{extra}")
    return 0


def _cmd_sweep(args):
    dims = [int(x) for x in args.dims.split(",") if x.strip()]
    points = sweep(dims, tol=args.tol, threads=args.threads,
                   progress=lambda d, c, dt:
                       _progress(f"dim {d}: coherence {c:.6g} ({dt:.2f}s)"))
    if args.csv:
        _write_csv(args.csv, args,
                   ["dim", "mu", "coherence", "flux", "linewidth", "seconds"],
                   [(p.dim, p.mu, p.coherence, p.flux, p.linewidth,
                     round(p.seconds, 3)) for p in points])
    crossover = sql_crossover(points)
    summary = f"swept {len(points)} dims; SQL crossover at dim={crossover}"
    if args.fit:
        window = tuple(args.fit_window) if args.fit_window else DEFAULT_FIT_WINDOW
        fit = fit_power_law([(p.mu, p.coherence) for p in points], window=window)
        fit_dim = fit_power_law(
            [(p.dim, p.coherence) for p in points
             if window[0] <= p.mu <= window[1]])
        payload = {"exponent": fit.exponent, "coefficient": fit.coefficient,
                   "rms_log_residual": fit.rms_log_residual,
                   "window": [fit.window[0],
                              None if math.isinf(fit.window[1]) else fit.window[1]],
                   "exponent_vs_dim": fit_dim.exponent,
                   "points": fit.points,
                   "sql_crossover_dim": crossover}
        if args.out:
            _write_json(args.out, args, payload)
        summary += (f"; fit exponent={fit.exponent:.4f} "
                    f"coefficient={fit.coefficient:.5f} "
                    f"rms_log_residual={fit.rms_log_residual:.2e}")
    elif args.out:
        _write_json(args.out, args,
                    {"points": [vars(p) for p in points],
                     "sql_crossover_dim": crossover})
    print(summary)
    return 0


def _cmd_g1(args):
    model = build_model(args.dim)
    coherence(model, tol=args.tol)
    s_max = args.smax / model.linewidth
    s, gm, gi, delta, max_delta = gl.delta_g1_profile(
        model, s_max=s_max, points=args.points)
    if args.out:
        _write_csv(args.out, args, ["s", "g1_model", "g1_ideal", "delta"],
                   list(zip(map(float, s), map(float, gm),
                            map(float, gi), map(float, delta))))
    print(f"g1 profile dim={args.dim}: max |g1_model - g1_ideal| = {max_delta:.6e} "
          f"over s in [0, {args.smax:g}/ell]")
    return 0


def _cmd_g2max(args):
    model = build_model(args.dim)
    coherence(model, tol=args.tol)
    _progress(f"scanning {args.grid}^3 lattice (refine={args.refine})")
    times, delta, corner_delta = gl.max_delta_g2(
        model, grid=args.grid, refine=args.refine, corner_eps=args.eps)
    tau = gl.ideality_tau(model)
    payload = {"dim": args.dim, "tau": tau,
               "argmax": list(times.as_tuple()),
               "delta": delta, "corner_delta": corner_delta}
    if args.out:
        _write_json(args.out, args, payload)
    c = 4.0 * model.flux / model.linewidth
    print(f"max |delta g2| = {delta:.6e} at dim={args.dim} "
          f"(corner {corner_delta:.6e}, coherence^-1/2 = {c**-0.5:.6e})")
    return 0


def _cmd_discrete(args):
    model = build_model(args.dim)
    dm = dc.build_discrete(model, args.gamma)
    payload = {
        "dim": args.dim,
        "gamma": args.gamma,
        "isometry_residual": dc.isometry_residual(dm),
        "fixed_point_residual": dc.fixed_point_residual(dm),
        "liouvillian_residual": dc.liouvillian_residual(dm),
        "discrete_coherence": dc.discrete_coherence(dm, tol=args.tol),
        "one_site_term": dc.one_site_term(dm),
    }
    if args.dt:
        payload["choi_distance"] = dc.channel_equivalence(model, args.dt)
    if args.out:
        _write_json(args.out, args, payload)
    print(f"discrete dim={args.dim} gamma={args.gamma:g}: "
          f"coherence={payload['discrete_coherence']:.10g} "
          f"isometry={payload['isometry_residual']:.2e} "
          f"fixed_point={payload['fixed_point_residual']:.2e}")
    return 0


def _cmd_bounds(args):
    payload = {"mu": args.mu,
               "heisenberg": bd.heisenberg_bound(args.mu),
               "sql": bd.sql_bound(args.mu),
               "airy_zero": bd.airy_zero(),
               "mse_constant": bd.phase_mse_constant(),
               "heisenberg_coefficient": bd.heisenberg_coefficient()}
    line = (f"heisenberg={payload['heisenberg']:.10g} sql={payload['sql']:.10g} "
            f"(z_A={payload['airy_zero']:.8f})")
    if args.coherence is not None:
        payload["chain"] = bd.bound_chain(args.mu, args.coherence)
        line += (f" chain: satisfied={payload['chain']['satisfied']} "
                 f"slack={payload['chain']['slack']:.4g}")
    if args.out:
        _write_json(args.out, args, payload)
    print(line)
    return 0


def _cmd_msse(args):
    if (args.sigma is None) == (args.tau is None):
        raise ValidationError("give exactly one of --sigma or --tau")
    if args.sigma is not None:
        setup = bd.HeterodyneSetup.from_sigma(args.flux, args.linewidth, args.sigma)
    else:
        setup = bd.HeterodyneSetup.from_tau(args.flux, args.linewidth, args.tau)
    payload = {"flux": setup.flux, "linewidth": setup.linewidth,
               "tau": setup.tau, "sigma": setup.sigma,
               "msse_exact": bd.msse_exact(setup)}
    if args.quadrature:
        payload["msse_quadrature"] = bd.msse_quadrature(setup, order=args.order)
    if args.out:
        _write_json(args.out, args, payload)
    extra = (f" quadrature={payload['msse_quadrature']:.10g}"
             if args.quadrature else "")
    print(f"msse={payload['msse_exact']:.10g} (sigma={setup.sigma:.6g}, "
          f"ell*tau={setup.linewidth * setup.tau:.6g}){extra}")
    return 0


def _cmd_asymmetry(args):
    total, tail = bd.g_asymmetry(args.nbar, cutoff=args.cutoff,
                                 return_tail_bound=True)
    payload = {"nbar": args.nbar, "cutoff": args.cutoff,
               "asymmetry": total, "tail_bound": tail,
               "half_log_nbar": 0.5 * math.log(args.nbar) if args.nbar > 0 else None}
    if args.out:
        _write_json(args.out, args, payload)
    print(f"G-asymmetry(nbar={args.nbar:g}) = {total:.8f} (tail bound {tail:.2e})")
    return 0


def _cmd_control(args):
    model = build_model(args.dim)
    which = ["gain", "loss"] if args.which == "both" else [args.which]
    rows = []
    for w in which:
        residual = ct.reconstruct_generator(model, w, precision=args.precision)
        system = ct.solve_vandermonde(
            args.dim, model.gain if w == "gain" else model.loss,
            precision=args.precision)
        rows.append((args.dim, w, residual, system.precision))
        print(f"{w}: residual={residual:.3e} precision={system.precision} "
              f"||v||_inf={system.solution_norm_inf:.6g}")
    ct.det_positive(args.dim, precision=args.precision)
    if args.out:
        _write_csv(args.out, args, ["dim", "which", "residual", "precision"], rows)
    return 0


def _cmd_optimize(args):
    t0 = time.perf_counter()
    result = optimize_loss_profile(args.dim, args.budget,
                                   restarts=args.restarts, seed=args.seed)
    payload = {"dim": args.dim, "coherence": result.coherence,
               "fidelity_to_ansatz": result.fidelity,
               "converged": result.converged,
               "evaluations": result.evaluations,
               "loss": [float(x) for x in result.model.loss],
               "steady": [float(x) for x in result.model.steady]}
    if args.out:
        _write_json(args.out, args, payload)
    print(f"optimized dim={args.dim}: coherence={result.coherence:.6g} "
          f"fidelity={result.fidelity:.4f} converged={result.converged} "
          f"({result.evaluations} evals, {time.perf_counter() - t0:.1f}s)")
    return 0


# ---------------------------------------------------------------------------

def _build_parser():
    parser = _Parser(
        prog="lasercoh",
        description="Heisenberg-limited laser model toolkit",
        epilog="All times are in units where the flux is 1 unless a flux "
               "option overrides; --smax and --horizon are in units of the "
               "coherence time 1/ell.")
    parser.add_argument("--version", action="version",
                        version=f"lasercoh {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("model", _cmd_model, "build the sin^4 family model and emit JSON")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--with-linewidth", action="store_true",
                   help="also compute the coherence to fill the linewidth")
    p.add_argument("--out")

    p = add("coherence", _cmd_coherence, "projected-inverse beam coherence")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--method", choices=["auto", "gmres", "bicgstab", "lu"],
                   default="auto")
    p.add_argument("--quadrature", action="store_true",
                   help="also run the time-integral oracle")
    p.add_argument("--horizon", type=float, default=12.0)
    p.add_argument("--export-liouvillian", metavar="PATH",
                   help="write the sparse Liouvillian in Matrix Market format")
    p.add_argument("--out")

    p = add("sweep", _cmd_sweep, "coherence sweep over dims, optional power-law fit")
    p.add_argument("--dims", required=True, help="comma-separated dims")
    p.add_argument("--fit", action="store_true")
    p.add_argument("--fit-window", type=float, nargs=2, metavar=("MU_MIN", "MU_MAX"))
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--threads", type=int)
    p.add_argument("--csv", help="write the sweep table as CSV")
    p.add_argument("--out", help="write the fit (or points) as JSON")

    p = add("g1", _cmd_g1, "first-order correlator vs ideal exponential decay")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--smax", type=float, default=10.0,
                   help="window in units of 1/ell (default 10)")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", help="CSV: s,g1_model,g1_ideal,delta")

    p = add("g2max", _cmd_g2max, "largest deviation of g2 from the phase-diffusing ideal")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--eps", type=float, default=1e-3,
                   help="epsilon of the corner candidate")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")

    p = add("discrete", _cmd_discrete, "finite-step model: residuals and coherence")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--gamma", type=float, default=1e-3)
    p.add_argument("--dt", type=float,
                   help="also run the unitary channel comparison at this dt")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")

    p = add("bounds", _cmd_bounds, "Heisenberg/SQL bounds and the chain check")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--coherence", type=float,
                   help="also evaluate the bound chain at this coherence")
    p.add_argument("--out")

    p = add("msse", _cmd_msse, "heterodyne phase MSE, closed form and oracle")
    p.add_argument("--flux", type=float, default=1.0)
    p.add_argument("--linewidth", type=float, required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--quadrature", action="store_true")
    p.add_argument("--order", type=int, default=24)
    p.add_argument("--out")

    p = add("asymmetry", _cmd_asymmetry, "entropic G-asymmetry of a thermal mode")
    p.add_argument("--nbar", type=float, required=True)
    p.add_argument("--cutoff", type=int)
    p.add_argument("--out")

    p = add("control", _cmd_control, "Vandermonde control synthesis residuals")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--which", choices=["gain", "loss", "both"], default="both")
    p.add_argument("--precision", choices=["double", "extended"])
    p.add_argument("--out", help="CSV: dim,which,residual,precision")

    p = add("optimize", _cmd_optimize, "maximize coherence over loss profiles")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--budget", type=int, default=20000,
                   help="function evaluations per Nelder-Mead run")
    p.add_argument("--restarts", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"lasercoh: validation error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"lasercoh: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
