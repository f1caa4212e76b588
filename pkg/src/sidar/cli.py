"""Command-line front end.

Every command prints one machine-greppable line of key=value pairs and optionally writes CSVs
into --out. Exit status: 0 success, 1 solver failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis
from .lambda_opt import solve_finite
from .model import GenerationError, ProblemInstance, SystemFileError, load_system, sym_sqrt, validate
from .riccati import RiccatiError
from .sdp import SdpError
from .steady_state import (SteadyStateError, classify, g_residual, hinf_gamma_oracle, solve_steady_lmi,
                           solve_steady_scan)

SOLVER_ERRORS = (RiccatiError, SteadyStateError, SdpError, GenerationError, analysis.SimulationError,
                 np.linalg.LinAlgError)
FIGURE_KINDS = ("regions", "recursion", "lambda_sweep", "regions2d")


class UsageError(Exception):
    pass


def _fmt(v, precise=False) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{float(v):.15g}" if precise else f"{float(v):.6f}"
    if isinstance(v, np.ndarray):
        return ";".join(_fmt(float(e), precise) for e in v.ravel())
    return str(v)


def _summary(pairs: dict, precise: bool) -> str:
    return " ".join(f"{k}={_fmt(v, precise)}" for k, v in pairs.items())


def _csv_float(v) -> str:
    return repr(float(v)) if np.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_csv_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _int_list(text: str) -> list[int]:
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sidar", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["validate", "finite", "steady", "classify", "region", "sweep",
                                       "turnpike", "simulate", "bench", "hinf", "figure"])
    p.add_argument("--system", type=Path)
    p.add_argument("--N", type=int)
    p.add_argument("--N-list", type=_int_list, dest="N_list")
    p.add_argument("--N-max", type=int, dest="N_max")
    p.add_argument("--x0", type=_float_list)
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=_int_list)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--out", type=Path)
    p.add_argument("--method", choices=["lmi", "scan"], default="lmi")
    p.add_argument("--policy", choices=list(analysis.POLICIES), default="zero")
    p.add_argument("--T", type=int, default=20)
    p.add_argument("--finite-fallback", type=int, dest="finite_fallback")
    p.add_argument("--kind", choices=FIGURE_KINDS)
    p.add_argument("--time-budget", type=float, dest="time_budget")
    p.add_argument("--precise", action="store_true", help="print summary values with 15 significant digits")
    return p


def _instance(args) -> ProblemInstance:
    if args.system is None:
        raise UsageError("--system is required")
    inst = load_system(args.system)
    x0 = inst.x0 if args.x0 is None else np.asarray(args.x0, dtype=float)
    if x0.shape != (inst.system.n,):
        raise UsageError(f"--x0 needs {inst.system.n} values")
    alpha = inst.alpha if args.alpha is None else args.alpha
    try:
        return inst.replace(x0=x0, alpha=alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for '{args.command}'")


def _steady_pairs(sol, inst) -> dict:
    s = inst.system
    Qh = sym_sqrt(s.Q)
    Rinv_h = np.linalg.inv(sym_sqrt(s.R))
    return {
        "lambda_bar": sol.lambda_bar,
        "pi_bar_norm": float(np.linalg.norm(sol.Pi_bar)),
        "slack": sol.slack,
        "g_residual": sol.g_residual,
        "value": sol.value,
        "pi_bar": sol.Pi_bar,
        "qpq_max": float(np.linalg.eigvalsh(Qh @ sol.P @ Qh)[-1]),
        "f_norm": float(np.linalg.norm(sol.F, 2)),
        "f_bound": float(np.linalg.norm(Rinv_h, 2) * np.sqrt(np.linalg.norm(np.linalg.inv(s.Q), 2))),
        "method": sol.method,
    }


def cmd_validate(args):
    inst = _instance(args)
    rep = validate(inst.system)
    fails = [k for k in ("stabilizable", "detectable", "range_inclusion", "terminal_coupling", "q_pd", "pf_pd")
             if not getattr(rep, k)]
    return {"n": inst.system.n, "m": inst.system.m, "q": inst.system.q,
            "stabilizable": rep.stabilizable, "detectable": rep.detectable,
            "range_inclusion": rep.range_inclusion, "terminal_coupling": rep.terminal_coupling,
            "q_pd": rep.q_pd, "pf_pd": rep.pf_pd, "all_ok": rep.all_ok,
            "violations": ",".join(fails) if fails else "none"}


def cmd_finite(args):
    _need(args, "N")
    inst = _instance(args)
    sol = solve_finite(inst, args.N)
    if args.out:
        _write_csv(args.out / "recursion.csv", ["N", "k", "frobenius_pi_k", "pi_bar_ref"],
                   [(args.N, k, float(np.linalg.norm(P)), float("nan")) for k, P in enumerate(sol.trajectory.pis)])
    return {"N": args.N, "lambda_star": sol.lambda_star, "lambda_lo": sol.lambda_lo, "value": sol.value,
            "region": sol.region.value, "worst_energy": sol.worst_energy,
            "pi0_norm": float(np.linalg.norm(sol.Pi0))}


def cmd_steady(args):
    inst = _instance(args)
    sol = solve_steady_lmi(inst) if args.method == "lmi" else solve_steady_scan(inst)
    return _steady_pairs(sol, inst)


def cmd_classify(args):
    inst = _instance(args)
    rep = validate(inst.system)
    fails = [k for k in ("stabilizable", "detectable", "range_inclusion") if not getattr(rep, k)]
    c = classify(inst.system, inst.alpha)
    return {"kind": c.kind, "slack": c.slack_at_origin, "tolerance": c.tolerance_used,
            "lambda_bar": c.lmi.lambda_bar, "pi_bar_norm": float(np.linalg.norm(c.lmi.Pi_bar)),
            "scan_lambda_bar": c.scan.lambda_bar, "assumptions": "ok" if not fails else ",".join(fails)}


def _region_rows(inst, N_list):
    lows = analysis.lambda_lo_sequence(inst.system, max(N_list))
    return [(N, analysis.region_linear(inst, N, lows[N - 1])) for N in N_list]


def cmd_region(args):
    inst = _instance(args)
    if args.N is None and args.N_list is None:
        raise UsageError("--N or --N-list is required for 'region'")
    N_list = args.N_list or [args.N]
    rows = _region_rows(inst, N_list)
    N, ell = rows[-1]
    out = {"N": N}
    if inst.system.n == 1:
        h = ell.extent([1.0])
        out.update(x_lo=-h, x_hi=h)
    w = np.linalg.eigvalsh(ell.shape)
    out.update(shape_eigmin=float(w[0]), shape_eigmax=float(w[-1]), x0_member=ell.contains(inst.x0))
    if args.N_max is not None:
        lim = analysis.region_limit_membership(inst, args.N_max)
        first = lim.first_exclusion(inst.x0)
        out.update(N_max=args.N_max, limit_member=first is None, first_exclusion=first)
    if args.out:
        _emit_regions(args.out, inst, rows)
    return out


def _emit_regions(out: Path, inst, rows):
    if inst.system.n == 1:
        _write_csv(out / "regions.csv", ["N", "x_lo", "x_hi"],
                   [(N, -e.extent([1.0]), e.extent([1.0])) for N, e in rows])
    elif inst.system.n == 2:
        data = []
        for N, e in rows:
            theta, x1, x2 = e.boundary(100)
            data += [(N, float(t), float(a), float(b)) for t, a, b in zip(theta, x1, x2)]
        _write_csv(out / "regions2d.csv", ["N", "theta", "x1", "x2"], data)
    else:
        raise UsageError("region CSVs are only defined for n = 1 or n = 2")


def cmd_sweep(args):
    _need(args, "N_list")
    inst = _instance(args)
    rows, steady = analysis.convergence_sweep(inst, args.N_list)
    if args.out:
        _write_csv(args.out / "lambda_sweep.csv", ["N", "lambda_star", "lambda_bar_ref"],
                   [(r.N, r.lambda_star, steady.lambda_bar) for r in rows])
    lam = [r.lambda_star for r in rows]
    last = rows[-1]
    return {"N_last": last.N, "lambda_star_last": last.lambda_star, "pi_dev_last": last.pi_deviation,
            "lambda_dev_last": last.lambda_deviation, "region_last": last.region,
            "lambda_bar": steady.lambda_bar,
            "nondecreasing": bool(all(b >= a - 1e-9 * max(1.0, abs(a)) for a, b in zip(lam, lam[1:])))}


def cmd_turnpike(args):
    _need(args, "N")
    inst = _instance(args)
    prof = analysis.turnpike_profile(inst, args.N, args.eps)
    g = g_residual(prof.lambda_star, prof.pis[0], inst.system)
    if args.out:
        _write_csv(args.out / "recursion.csv", ["N", "k", "frobenius_pi_k", "pi_bar_ref"],
                   [(args.N, k, float(np.linalg.norm(P)), float(np.linalg.norm(prof.plateau_value)))
                    for k, P in enumerate(prof.pis)])
    return {"N": args.N, "lambda_star": prof.lambda_star, "plateau_fraction": prof.plateau_fraction,
            "plateau_length": prof.plateau_length, "plateau_start": prof.plateau_start,
            "plateau_end": prof.plateau_end, "entry_layer": prof.entry_layer, "exit_layer": prof.exit_layer,
            "plateau_norm": float(np.linalg.norm(prof.plateau_value)), "plateau_source": prof.plateau_source,
            "g_eigmin": float(np.linalg.eigvalsh(g)[0]), "eps": prof.epsilon_used}


def cmd_simulate(args):
    inst = _instance(args)
    tr = analysis.simulate_receding(inst, args.T, args.policy, args.seed, args.finite_fallback)
    budgets = [s.budget for s in tr.steps]
    if args.out:
        _write_csv(args.out / "sim.csv", ["k", "x_norm", "u_norm", "w_norm", "budget", "lambda_k"],
                   [(s.k, float(np.linalg.norm(s.x)), float(np.linalg.norm(s.u)), float(np.linalg.norm(s.w)),
                     float(s.budget), float(s.lambda_k)) for s in tr.steps])
    return {"T": args.T, "policy": args.policy, "final_x_norm": float(np.linalg.norm(tr.final_state)),
            "final_budget": budgets[-1] - float(tr.steps[-1].w @ tr.steps[-1].w),
            "min_budget": min(budgets), "budget_nonincreasing": bool(np.all(np.diff(budgets) <= 1e-12)),
            "lambda_first": tr.steps[0].lambda_k, "lambda_last": tr.steps[-1].lambda_k}


def cmd_bench(args):
    _need(args, "dims")
    t0 = time.perf_counter()
    res = analysis.bench_complexity(args.dims, args.samples, args.seed, args.time_budget)
    if args.out:
        _write_csv(args.out / "bench.csv", ["n", "sample", "seconds"], res.rows)
    out = {f"median_n{n}": t for n, t in res.medians.items()}
    out.update(slope=res.slope, complete=res.complete, elapsed=time.perf_counter() - t0)
    return out


def cmd_hinf(args):
    inst = _instance(args)
    return {"gamma2": hinf_gamma_oracle(inst.system)}


def cmd_figure(args):
    _need(args, "kind", "out")
    inst = _instance(args)
    if args.kind in ("regions", "regions2d"):
        _need(args, "N_list")
        rows = _region_rows(inst, args.N_list)
        want = 1 if args.kind == "regions" else 2
        if inst.system.n != want:
            raise UsageError(f"{args.kind} needs an n = {want} system")
        _emit_regions(args.out, inst, rows)
        return {"kind": args.kind, "rows": len(rows)}
    if args.kind == "recursion":
        _need(args, "N_list")
        steady = solve_steady_lmi(inst)
        ref = float(np.linalg.norm(steady.Pi_bar))
        data = []
        for N in args.N_list:
            sol = solve_finite(inst, N)
            data += [(N, k, float(np.linalg.norm(P)), ref) for k, P in enumerate(sol.trajectory.pis)]
        _write_csv(args.out / "recursion.csv", ["N", "k", "frobenius_pi_k", "pi_bar_ref"], data)
        return {"kind": args.kind, "rows": len(data), "pi_bar_norm": ref}
    _need(args, "N_list")
    rows, steady = analysis.convergence_sweep(inst, args.N_list)
    _write_csv(args.out / "lambda_sweep.csv", ["N", "lambda_star", "lambda_bar_ref"],
               [(r.N, r.lambda_star, steady.lambda_bar) for r in rows])
    return {"kind": args.kind, "rows": len(rows), "lambda_bar": steady.lambda_bar}


COMMANDS = {"validate": cmd_validate, "finite": cmd_finite, "steady": cmd_steady, "classify": cmd_classify,
            "region": cmd_region, "sweep": cmd_sweep, "turnpike": cmd_turnpike, "simulate": cmd_simulate,
            "bench": cmd_bench, "hinf": cmd_hinf, "figure": cmd_figure}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        pairs = COMMANDS[args.command](args)
    except SOLVER_ERRORS as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (UsageError, SystemFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(_summary(pairs, args.precise))
    return 0


if __name__ == "__main__":
    sys.exit(main())
