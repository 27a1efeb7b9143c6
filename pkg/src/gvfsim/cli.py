"""Command-line front end.

Verbs: ``run``, ``compare``, ``singular-map``, ``verify``.  Global flags
``--seed``, ``--out-dir``, ``--dt`` and ``--quiet`` may appear before or
after the verb.  Exit codes: 0 success, 1 a verification claim failed,
2 input error, 3 runtime abort.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import find_singular_points_2d, report_json, smoothness_metrics
from .field import EPS_NORM, PlanarField, SpatialField, eval_planar, min_field_norm
from .geometry import ImplicitPath2D, UnknownPathError, builtin_path, lift_to_surfaces
from .scenario import ScenarioError, load_scenario
from .sim import atomic_write, run_scenario
from .verify import SUITES, comparison_runs, point_gaps, run_suite

EXIT_OK, EXIT_CLAIM_FAILED, EXIT_INPUT, EXIT_ABORT = 0, 1, 2, 3
DEFAULT_OUT = "gvfsim_out"
COMPARE_TIMES = (0.0, 2.0, 30.0)


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="override the scenario seed")
    parser.add_argument("--out-dir", default=default, help="directory for traces and reports")
    parser.add_argument("--dt", type=float, default=default, help="override the integration step")
    parser.add_argument("--quiet", action="store_true",
                        default=argparse.SUPPRESS if suppress else False, help="suppress summaries")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gvfsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="simulate one scenario and write its trace")
    p.add_argument("scenario", help="scenario file or bundled scenario name")
    _global_flags(p, suppress=True)

    p = sub.add_parser("compare", help="guidance controller vs trajectory tracking")
    p.add_argument("scenario")
    _global_flags(p, suppress=True)

    p = sub.add_parser("singular-map", help="quiver data and singular points of a path's field")
    p.add_argument("path", help="catalog path name")
    p.add_argument("--k", type=float, default=1.0, help="field gain (k1 = k2 = k when lifted)")
    p.add_argument("--box", type=float, nargs=4, default=(-2.0, 2.0, -2.0, 2.0),
                   metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--grid", type=int, default=33, help="samples per axis")
    p.add_argument("--lifted", action="store_true", help="use the lifted 3D field of the path")
    _global_flags(p, suppress=True)

    p = sub.add_parser("verify", help="run a claim suite and write a JSON report")
    p.add_argument("suite", choices=[*SUITES, "all"])
    _global_flags(p, suppress=True)
    return parser


def _say(args, *lines):
    if not args.quiet:
        for line in lines:
            print(line)


def _load(args):
    try:
        sf = load_scenario(args.scenario)
    except FileNotFoundError as exc:
        raise _Exit(EXIT_INPUT, str(exc)) from None
    except ScenarioError as exc:
        raise _Exit(EXIT_INPUT, str(exc)) from None
    sc = sf.scenario
    try:
        if args.dt is not None:
            sc = replace(sc, dt=args.dt, control_period=max(sc.control_period, args.dt))
        if args.seed is not None:
            sc = replace(sc, seed=args.seed)
    except ValueError as exc:
        key = "dt" if args.dt is not None else "seed"
        raise _Exit(EXIT_INPUT, f"--{key}: {exc}") from None
    out_dir = Path(args.out_dir or sf.out_dir or DEFAULT_OUT)
    return sc, sf.stem, out_dir


def _summary(trace) -> str:
    if len(trace) == 0:
        return "samples=0"
    err = trace["err_norm"]
    tail = err[trace.tail_mask()]
    return (f"samples={len(trace)} t_end={trace['t'][-1]:.6g} err_norm: initial={err[0]:.6g} "
            f"final={err[-1]:.6g} tail_max={np.max(tail):.6g}")


def cmd_run(args) -> int:
    sc, stem, out_dir = _load(args)
    trace = run_scenario(sc)
    csv_path, _ = trace.save(out_dir, stem)
    _say(args, f"{stem}: {_summary(trace)}", f"wrote {csv_path}")
    if trace.aborted:
        raise _Exit(EXIT_ABORT, f"simulation aborted: {trace.error}")
    return EXIT_OK


def _metrics_dict(m) -> dict:
    return {"heading_total_variation": m.heading_total_variation,
            "reversal_count": m.reversal_count, "err_rms": m.err_rms}


def cmd_compare(args) -> int:
    sc, stem, out_dir = _load(args)
    if not sc.controller.has_traj_gains:
        raise _Exit(EXIT_INPUT, "compare needs k1t, k2t and k3t in [controller]")
    runs = {"noisy": comparison_runs(sc, noise=True)} if sc.noise is not None and sc.noise.power > 0 else {}
    runs["noise_free"] = comparison_runs(sc, noise=False)
    report = {"scenario": sc.to_dict(), "seed": sc.seed, "version": __version__}
    for label, (gvf, tt) in runs.items():
        gvf.save(out_dir, f"{stem}_{label}_gvf")
        tt.save(out_dir, f"{stem}_{label}_traj_track")
        report[label] = {
            "gvf": _metrics_dict(smoothness_metrics(gvf)),
            "traj_track": _metrics_dict(smoothness_metrics(tt)),
            "guiding_point": point_gaps(gvf, COMPARE_TIMES),
            "desired_point": point_gaps(tt, COMPARE_TIMES),
            "aborted": {"gvf": gvf.error, "traj_track": tt.error},
        }
    path = Path(out_dir) / f"{stem}_comparison.json"
    atomic_write(path, json.dumps(report, indent=2, default=str) + "\n")
    for label in runs:
        r = report[label]
        _say(args, f"[{label}] heading TV gvf={r['gvf']['heading_total_variation']:.6g} "
                   f"traj_track={r['traj_track']['heading_total_variation']:.6g}; "
                   f"tail err_rms gvf={r['gvf']['err_rms']:.6g} traj_track={r['traj_track']['err_rms']:.6g}; "
                   f"reversals gvf={r['gvf']['reversal_count']} traj_track={r['traj_track']['reversal_count']}")
    _say(args, f"wrote {path}")
    if any(v for r in runs.values() for v in (r[0].error, r[1].error)):
        raise _Exit(EXIT_ABORT, "a comparison run aborted")
    return EXIT_OK


def cmd_singular_map(args) -> int:
    try:
        path = builtin_path(args.path)
    except UnknownPathError as exc:
        raise _Exit(EXIT_INPUT, str(exc)) from None
    if args.grid < 8 or not args.k > 0:
        raise _Exit(EXIT_INPUT, "--grid must be >= 8 and --k positive")
    xmin, xmax, ymin, ymax = args.box
    if not (xmin < xmax and ymin < ymax):
        raise _Exit(EXIT_INPUT, "--box needs XMIN < XMAX and YMIN < YMAX")
    out_dir = Path(args.out_dir or DEFAULT_OUT)
    out_dir.mkdir(parents=True, exist_ok=True)
    lifted = args.lifted or not isinstance(path, ImplicitPath2D)

    if lifted:
        param = path.parametric if isinstance(path, ImplicitPath2D) else path
        if param is None:
            raise _Exit(EXIT_INPUT, f"{args.path} has no parametric form to lift")
        fld = SpatialField(lift_to_surfaces(param), args.k, args.k)
        box = ((xmin, xmax), (ymin, ymax), tuple(param.param_hint))
        norm = min_field_norm(fld, box, grid=min(args.grid, 41))
        doc = {"path": args.path, "mode": "lifted", "singular_points": [], "min_field_norm": norm}
        atomic_write(out_dir / f"{args.path}_singular.json", json.dumps(doc, indent=2) + "\n")
        _say(args, "singular points: []", f"min |chi| = {norm:.12g}")
        return EXIT_OK

    fld = PlanarField(path, k=args.k)
    roots = find_singular_points_2d(fld, ((xmin, xmax), (ymin, ymax)), grid=max(args.grid, 16))
    xs, ys = np.linspace(xmin, xmax, args.grid), np.linspace(ymin, ymax, args.grid)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    chi = eval_planar(fld, pts)
    norm = np.linalg.norm(chi, axis=1)
    ok = norm >= EPS_NORM
    unit = np.zeros_like(chi)
    unit[ok] = chi[ok] / norm[ok, None]
    cell = max(xs[1] - xs[0], ys[1] - ys[0])
    near = ~ok
    for r in roots:
        near |= np.linalg.norm(pts - r, axis=1) <= cell
    lines = ["x,y,u,v,is_near_singular"]
    for (x, y), (u, v), flag in zip(pts, unit, near):
        lines.append(",".join(repr(float(c)) for c in (x, y, u, v)) + f",{int(flag)}")
    atomic_write(out_dir / f"{args.path}_quiver.csv", "\n".join(lines) + "\n")
    doc = {"path": args.path, "mode": "planar", "k": args.k,
           "singular_points": [[float(c) + 0.0 for c in r] for r in roots]}
    atomic_write(out_dir / f"{args.path}_singular.json", json.dumps(doc, indent=2) + "\n")
    _say(args, f"singular points ({len(roots)}):",
         *(f"  ({r[0] + 0.0:.10f}, {r[1] + 0.0:.10f})" for r in roots),
         f"wrote {out_dir / (args.path + '_quiver.csv')}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suite(args.suite)
    out_dir = Path(args.out_dir or DEFAULT_OUT)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"verify_{args.suite}.json"
    atomic_write(path, report_json(results, args.suite))
    for r in results:
        _say(args, f"{'PASS' if r.passed else 'FAIL'} {r.claim_id}: measured={r.measured} tolerance={r.tolerance}")
    _say(args, f"wrote {path}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CLAIM_FAILED


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "singular-map": cmd_singular_map, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except _Exit as exc:
        print(f"gvfsim {args.verb}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
