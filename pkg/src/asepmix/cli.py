"""Command-line front door: experiment orchestration and result persistence.

Every subcommand writes one delimited payload (CSV by default, JSON mirror
via --format json), a sidecar ``<out>.meta.json`` holding the resolved
configuration, tool version, RNG name and wall clock, and optionally a PNG
figure next to the payload (--plot).  Payload bytes depend only on the
configuration and seed; timestamps live in the sidecar only.

Exit codes: 0 success, 2 argument error, 3 enumeration cap exceeded,
4 numerical assertion failure, 5 write failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .chains import ExclusionSpace, ModelParams, ShuffleSpace, vee, wedge
from .errors import CapExceeded, NumericsError
from . import dynamics, exact, hydro, spectral

RNG_NAME = "numpy Philox4x64, key=(seed, replica)"
ENV_SEED = "ASEPMIX_SEED"


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asepmix",
        description="biased card shuffle / segment exclusion process toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--out", type=Path, default=None,
                       help="output path (default asepmix_<cmd>.csv)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--plot", action="store_true",
                       help="also render a PNG next to the payload")
        p.add_argument("--seed", type=int, default=None,
                       help=f"RNG seed (falls back to ${ENV_SEED}, then 0)")
        p.add_argument("--force-large", action="store_true",
                       help="override enumeration caps")
        return p

    p = add_common(sub.add_parser("gap", help="formula vs exact spectral gap"))
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--k", type=int, default=None, help="default: all k")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--model", choices=("asep", "shuffle"), default="asep")

    p = add_common(sub.add_parser("mix-exact", help="exact distance curve and mixing time"))
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--t-grid", type=_floats, default=None,
                   help="comma list of chain times")
    p.add_argument("--model", choices=("asep", "shuffle"), default="asep")

    p = add_common(sub.add_parser("mix-mc", help="Monte-Carlo distance bounds"))
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--t-grid", type=_floats, required=True,
                   help="comma list of chain times")
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--eps", type=float, default=0.05,
                   help="frontier window half-width for the lower bound")

    p = add_common(sub.add_parser("simulate", help="single trajectory with trackers"))
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--t-grid", type=_floats, default=None,
                   help="sample times (chain units)")
    p.add_argument("--init", choices=("wedge", "vee"), default="wedge")
    p.add_argument("--cells", type=int, default=None,
                   help="append density columns on this many cells")

    p = add_common(sub.add_parser("couple", help="coupled extremal trajectories"))
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--t-grid", type=_floats, default=None)

    p = add_common(sub.add_parser("hydro", help="finite-volume density evolution"))
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--grid-M", type=int, default=2000)
    p.add_argument("--cfl", type=float, default=0.45)
    p.add_argument("--t-grid", type=_floats, default=None,
                   help="snapshot times (macroscopic units)")
    p.add_argument("--tol", type=float, default=1e-3)

    p = add_common(sub.add_parser("profile", help="closed-form limit shape and frontiers"))
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--t-grid", type=_floats, default=None)
    p.add_argument("--grid-M", type=int, default=None,
                   help="append limit-shape values on this many intervals")

    p = add_common(sub.add_parser("line", help="exclusion process on the integer line"))
    p.add_argument("--N", type=int, required=True, help="number of particles")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--mu", type=float, default=None,
                   help="run the gap-stationary comparison system")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--t-grid", type=_floats, default=None)

    p = add_common(sub.add_parser("predict", help="mixing-time prediction from macroscopic data"))
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--grid-M", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-3)

    p = add_common(sub.add_parser("sweep", help="Cartesian Monte-Carlo sweep (crash-safe append)"))
    p.add_argument("--N", type=_ints, required=True, help="comma list")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--p", type=_floats, required=True, help="comma list")
    p.add_argument("--t-grid", type=_floats, required=True,
                   help="normalized times, chain time = t * N/(p-q)")
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--eps", type=float, default=0.05)

    return parser


# ---------------------------------------------------------------------------
# output handling
# ---------------------------------------------------------------------------

def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_payload(path: Path, fmt: str, header: list[str], rows: list,
                   meta: dict, t0: float):
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    else:
        clean = [[None if (isinstance(v, float) and math.isnan(v)) else
                  (float(v) if isinstance(v, (float, np.floating)) else
                   int(v) if isinstance(v, (int, np.integer, bool, np.bool_)) else v)
                  for v in row] for row in rows]
        with open(path, "w") as fh:
            json.dump({"meta": meta, "columns": header, "rows": clean},
                      fh, sort_keys=True, indent=1)
            fh.write("\n")
    sidecar = {
        "config": meta,
        "tool_version": __version__,
        "rng": RNG_NAME,
        "wall_clock_s": round(time.monotonic() - t0, 6),
        "written_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(path.with_name(path.name + ".meta.json"), "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_summary(path: Path, fmt: str, summary: dict):
    spath = path.with_name(path.stem + ".summary." + ("csv" if fmt == "csv" else "json"))
    if fmt == "csv":
        with open(spath, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(summary))
            writer.writerow([_cell(v) for v in summary.values()])
    else:
        with open(spath, "w") as fh:
            json.dump(summary, fh, sort_keys=True, indent=1)
            fh.write("\n")
    return spath


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(ENV_SEED)
    return int(env) if env else 0


def _resolve_k(args) -> int:
    if args.k is not None:
        return args.k
    if getattr(args, "alpha", None) is not None:
        return max(1, min(args.N - 1, round(args.alpha * args.N)))
    raise ValueError("provide --k or --alpha")


# ---------------------------------------------------------------------------
# subcommand handlers; each returns (header, rows, summary | None, meta)
# ---------------------------------------------------------------------------

def _cmd_gap(args, seed):
    params = ModelParams(args.p)
    ks = [args.k] if args.k is not None else list(range(1, args.N))
    rows = []
    if args.model == "shuffle":
        gen = exact.build_generator(ShuffleSpace(args.N, force=args.force_large), params)
        formula = spectral.gap_formula(args.N, params)
        ex = exact.exact_gap(gen)
        rows.append([args.N, 0, args.p, formula, ex, abs(formula - ex)])
    else:
        formula = spectral.gap_formula(args.N, params)
        for k in ks:
            gen = exact.build_generator(
                ExclusionSpace(args.N, k, force=args.force_large), params)
            ex = exact.exact_gap(gen)
            rows.append([args.N, k, args.p, formula, ex, abs(formula - ex)])
    meta = {"subcommand": "gap", "N": args.N, "k": args.k, "p": args.p,
            "model": args.model, "seed": seed}
    return ["N", "k", "p", "formula_gap", "exact_gap", "abs_diff"], rows, None, meta


def _cmd_mix_exact(args, seed):
    params = ModelParams(args.p)
    if args.model == "shuffle":
        space = ShuffleSpace(args.N, force=args.force_large)
        k = 0
    else:
        k = _resolve_k(args)
        space = ExclusionSpace(args.N, k, force=args.force_large)
    gen = exact.build_generator(space, params)
    pi = gen.stationary()
    tmix = exact.mixing_time(gen, pi, args.eps)
    grid = args.t_grid or list(np.linspace(0.0, 1.5 * max(tmix, 1e-3), 31))
    rows = []
    for t in grid:
        wd = exact.worst_distance(gen, pi, t, pairwise=True)
        if args.model == "asep" and not params.totally_asymmetric:
            bound = spectral.contraction_bound(t, args.N, k, params)
        else:
            bound = math.nan
        rows.append([t, wd.d, wd.dbar, bound])
    summary = {"N": args.N, "k": k, "p": args.p, "eps": args.eps,
               "T_mix": tmix, "exact_gap": exact.exact_gap(gen, pi),
               "formula_gap": spectral.gap_formula(args.N, params)}
    meta = {"subcommand": "mix-exact", "N": args.N, "k": k, "p": args.p,
            "eps": args.eps, "model": args.model, "t_grid": grid, "seed": seed}
    return ["t_chain", "d", "dbar", "bound"], rows, summary, meta


def _cmd_mix_mc(args, seed):
    params = ModelParams(args.p)
    k = _resolve_k(args)
    grid = sorted(args.t_grid)
    upper = dynamics.estimate_tv_upper(args.N, k, params, grid, args.replicas, seed)
    rows = []
    for i, t in enumerate(grid):
        low = dynamics.estimate_tv_lower(args.N, k, params, t, args.eps,
                                         args.replicas, seed)
        rows.append([t, upper.raw[i], upper.adjusted[i], upper.radius[i],
                     low.estimate, low.conservative, low.pi_term,
                     int(low.pi_is_exact)])
    meta = {"subcommand": "mix-mc", "N": args.N, "k": k, "p": args.p,
            "t_grid": grid, "replicas": args.replicas, "eps": args.eps,
            "seed": seed}
    header = ["t_chain", "tv_upper", "tv_upper_adjusted", "tv_upper_radius",
              "tv_lower", "tv_lower_conservative", "pi_term", "pi_exact"]
    return header, rows, None, meta


def _default_horizon(n, alpha, params):
    a = min(max(alpha, 1.0 / n), 0.5)
    return 1.2 * hydro.terminal_time(a) * n / (params.p - params.q)


def _trajectory_rows(traj, cells):
    rows = []
    for s, t in enumerate(traj.times):
        row = [float(t)]
        for i in range(len(traj.heights)):
            row.extend([int(traj.ell[i, s]), int(traj.r[i, s])])
        row.append(int(traj.times[s] >= traj.merge_time))
        if cells:
            dens = dynamics.empirical_density(traj.heights[0][s], cells)
            row.extend(dens.cells.tolist())
        rows.append(row)
    return rows


def _cmd_simulate(args, seed):
    params = ModelParams(args.p)
    k = _resolve_k(args)
    horizon = args.horizon if args.horizon is not None else \
        _default_horizon(args.N, k / args.N, params)
    init = wedge(args.N, k) if args.init == "wedge" else vee(args.N, k)
    samples = args.t_grid or list(np.linspace(0.0, horizon, 25))
    traj = dynamics.run_coupled([init], params, horizon, seed=seed,
                                sample_times=samples)
    header = ["t_chain", "ell", "r", "merged_flag"]
    if args.cells:
        header += [f"rho_{i}" for i in range(args.cells)]
    meta = {"subcommand": "simulate", "N": args.N, "k": k, "p": args.p,
            "horizon": horizon, "init": args.init, "cells": args.cells,
            "t_grid": [float(t) for t in samples], "seed": seed}
    return header, _trajectory_rows(traj, args.cells), None, meta


def _cmd_couple(args, seed):
    params = ModelParams(args.p)
    k = _resolve_k(args)
    horizon = args.horizon if args.horizon is not None else \
        2.0 * _default_horizon(args.N, k / args.N, params)
    samples = args.t_grid or list(np.linspace(0.0, horizon, 25))
    traj = dynamics.run_coupled([wedge(args.N, k), vee(args.N, k)], params,
                                horizon, seed=seed, sample_times=samples)
    rows = []
    for s, t in enumerate(traj.times):
        rows.append([float(t), int(traj.ell[0, s]), int(traj.r[0, s]),
                     int(traj.ell[1, s]), int(traj.r[1, s]),
                     int(traj.times[s] >= traj.merge_time)])
    header = ["t_chain", "ell_top", "r_top", "ell_bottom", "r_bottom",
              "merged_flag"]
    summary = {"N": args.N, "k": k, "p": args.p, "horizon": horizon,
               "merge_time": traj.merge_time,
               "order_violations": traj.order_violations}
    meta = {"subcommand": "couple", "N": args.N, "k": k, "p": args.p,
            "horizon": horizon, "t_grid": [float(t) for t in samples],
            "seed": seed}
    return header, rows, summary, meta


def _cmd_hydro(args, seed):
    rho0 = hydro.indicator(0.0, args.alpha, args.grid_M)
    tstar = hydro.terminal_time(min(args.alpha, 1 - args.alpha)) if 0 < args.alpha < 1 else 1.0
    grid = args.t_grid or list(np.linspace(0.0, 1.2 * tstar, 5))
    sol = hydro.solve_burgers(rho0, max(grid), cfl=args.cfl, snapshot_times=grid)
    stab = hydro.stabilization_time(rho0, tol_l1=args.tol, cfl=args.cfl)
    seen = set()
    rows = []
    for t, f in zip(sol.times, sol.fields):
        key = round(t, 12)
        if key in seen:
            continue
        seen.add(key)
        rows.append([t] + f.cells.tolist())
    header = ["t_macro"] + [f"cell_{i}" for i in range(args.grid_M)]
    summary = {"alpha": args.alpha, "t_rho0": stab.time,
               "censored": int(stab.censored), "grid_M": args.grid_M,
               "tol": args.tol, "cfl": args.cfl, "mass_drift": sol.mass_drift,
               "min_cell": sol.min_cell, "max_cell": sol.max_cell}
    meta = {"subcommand": "hydro", "alpha": args.alpha, "grid_M": args.grid_M,
            "cfl": args.cfl, "tol": args.tol, "t_grid": grid, "seed": seed}
    return header, rows, summary, meta


def _cmd_profile(args, seed):
    if args.t is None and not args.t_grid:
        raise ValueError("provide --t or --t-grid")
    grid = args.t_grid or [args.t]
    header = ["alpha", "t_macro", "ell", "r"]
    xs = None
    if args.grid_M:
        xs = np.linspace(0.0, 1.0, args.grid_M + 1)
        header += [f"g_{i}" for i in range(xs.size)]
    rows = []
    for t in grid:
        ell, r = hydro.limit_frontiers(args.alpha, t)
        row = [args.alpha, t, ell, r]
        if xs is not None:
            row.extend(hydro.limit_profile(args.alpha, t, xs).tolist())
        rows.append(row)
    meta = {"subcommand": "profile", "alpha": args.alpha, "t_grid": grid,
            "grid_M": args.grid_M, "seed": seed}
    return header, rows, None, meta


def _cmd_line(args, seed):
    params = ModelParams(args.p)
    n = args.N
    horizon = args.horizon if args.horizon is not None else 50.0 * n
    samples = args.t_grid or list(np.linspace(0.0, horizon, 25))
    summary = {"n": n, "p": args.p, "mu": args.mu}
    if args.mu is not None:
        system = dynamics.ComparisonSystem(n, args.mu, params)
        init = system.sample_initial(seed)
        rates = system.right_rates()
        summary.update({"p1": system.p1, "p2": system.p2})
    else:
        init = dynamics.LinePositions(tuple(range(1, n + 1)))
        rates = None
    traj = dynamics.run_line(init, params, horizon, rates_override=rates,
                             seed=seed, sample_times=samples)
    rows = [[float(t), int(pos[0]), int(pos[-1]), float(pos.mean())]
            for t, pos in zip(traj.times, traj.positions)]
    if horizon > 0:
        summary["first_particle_speed"] = \
            (rows[-1][1] - rows[0][1]) / float(traj.times[-1])
    meta = {"subcommand": "line", "N": n, "p": args.p, "mu": args.mu,
            "horizon": horizon, "t_grid": [float(t) for t in samples],
            "seed": seed}
    return ["t_chain", "pos_first", "pos_last", "pos_mean"], rows, summary, meta


def _cmd_predict(args, seed):
    params = ModelParams(args.p)
    rho0 = hydro.indicator(0.0, args.alpha, args.grid_M)
    predicted = hydro.predict_mixing(rho0, args.ell, args.r, args.N, params,
                                     tol_l1=args.tol)
    if args.alpha > 0:
        stab = hydro.stabilization_time(rho0, tol_l1=args.tol)
        t_rho0 = stab.time
    else:
        t_rho0 = 0.0
    rows = [[args.alpha, args.ell, args.r, args.N, args.p, t_rho0, predicted]]
    header = ["alpha", "ell", "r", "N", "p", "t_rho0_macro", "predicted_mixing_chain"]
    meta = {"subcommand": "predict", "alpha": args.alpha, "ell": args.ell,
            "r": args.r, "N": args.N, "p": args.p, "grid_M": args.grid_M,
            "tol": args.tol, "seed": seed}
    return header, rows, None, meta


SWEEP_HEADER = ["N", "alpha", "p", "t_norm", "t_chain", "tv_upper",
                "tv_upper_radius", "tv_lower", "tv_lower_conservative"]


def _sweep_point_hash(point: dict) -> str:
    return hashlib.sha1(json.dumps(point, sort_keys=True).encode()).hexdigest()


def _cmd_sweep(args, seed, out: Path, fmt: str):
    """Cartesian sweep over (N, p, t); rows append incrementally and a
    progress file makes reruns skip completed points."""
    if fmt != "csv":
        raise ValueError("sweep writes csv only")
    progress_path = out.with_name(out.name + ".progress")
    done = set()
    if progress_path.exists():
        done = set(progress_path.read_text().split())
    new_file = not out.exists()
    meta = {"subcommand": "sweep", "N": args.N, "alpha": args.alpha,
            "p": args.p, "t_grid": args.t_grid, "replicas": args.replicas,
            "eps": args.eps, "seed": seed}
    t0 = time.monotonic()
    with open(out, "a", newline="") as fh, open(progress_path, "a") as pfh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(SWEEP_HEADER)
            fh.flush()
        for n in args.N:
            for p in args.p:
                params = ModelParams(p)
                k = max(1, min(n - 1, round(args.alpha * n)))
                scale = n / (params.p - params.q)
                points = []
                for t_norm in args.t_grid:
                    point = {"N": n, "alpha": args.alpha, "p": p,
                             "t_norm": t_norm, "replicas": args.replicas,
                             "eps": args.eps, "seed": seed}
                    points.append((t_norm, _sweep_point_hash(point)))
                todo = [(t, h) for t, h in points if h not in done]
                if not todo:
                    continue
                chain_times = [t * scale for t, _ in todo]
                upper = dynamics.estimate_tv_upper(n, k, params, chain_times,
                                                   args.replicas, seed)
                for t_norm, hsh in todo:
                    t_chain = t_norm * scale
                    i = int(np.searchsorted(upper.times, t_chain))
                    low = dynamics.estimate_tv_lower(n, k, params, t_chain,
                                                     args.eps, args.replicas,
                                                     seed)
                    writer.writerow([_cell(v) for v in
                                     [n, args.alpha, p, t_norm, t_chain,
                                      upper.raw[i], upper.radius[i],
                                      low.estimate, low.conservative]])
                    fh.flush()
                    pfh.write(hsh + "\n")
                    pfh.flush()
    sidecar = {"config": meta, "tool_version": __version__, "rng": RNG_NAME,
               "wall_clock_s": round(time.monotonic() - t0, 6),
               "written_at": datetime.now(timezone.utc).isoformat()}
    with open(out.with_name(out.name + ".meta.json"), "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return meta


_HANDLERS = {
    "gap": _cmd_gap,
    "mix-exact": _cmd_mix_exact,
    "mix-mc": _cmd_mix_mc,
    "simulate": _cmd_simulate,
    "couple": _cmd_couple,
    "hydro": _cmd_hydro,
    "profile": _cmd_profile,
    "line": _cmd_line,
    "predict": _cmd_predict,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    seed = _resolve_seed(args)
    out = args.out or Path(f"asepmix_{args.subcommand.replace('-', '_')}.csv")
    t0 = time.monotonic()
    try:
        if args.subcommand == "sweep":
            _cmd_sweep(args, seed, out, args.format)
            return 0
        header, rows, summary, meta = _HANDLERS[args.subcommand](args, seed)
        _write_payload(out, args.format, header, rows, meta, t0)
        if summary:
            _write_summary(out, args.format, summary)
        if args.plot:
            from . import plotting
            plotting.render(args.subcommand, header, rows,
                            out.with_suffix(".png"), meta)
        return 0
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
