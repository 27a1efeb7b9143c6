"""Claim checks grouped into suites.  Each check returns a
:class:`~gvfsim.analysis.ClaimResult`; sizes are parameters so the CLI can
run quick versions and the acceptance tests the full ones.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .analysis import (
    ClaimResult,
    LimitClass,
    classify_limit,
    finite_diff_check,
    find_singular_points_2d,
    lyapunov_series,
    observed_order,
    smoothness_metrics,
)
from .control import GvfController, TrajTrackController, UnicycleState, gvf_control, traj_track_law
from .field import (
    PlanarField,
    ProjectionOperator,
    SpatialField,
    chi_closed_form,
    eval_planar,
    eval_spatial,
    jacobian_chi_p,
    min_field_norm,
    planar_direction,
)
from .geometry import (
    ImplicitPath2D,
    ParametricPath,
    builtin_path,
    distance_to_lifted_path,
    distance_to_path,
    lift_to_surfaces,
    rescale_to_unit_box,
)
from .scenario import load_scenario
from .sim import (
    ControllerSpec,
    DisturbanceModel,
    InitialState,
    PathSpec,
    Scenario,
    run_closed_loop,
    run_integral_curve,
    run_perturbed,
    run_projected,
)

__all__ = ["SUITES", "run_suite", "catalog_lifts"]

PARAMETRIC_NAMES = ("circle", "line", "lemniscate", "trefoil_projection", "lissajous")


def catalog_lifts(k1: float = 1.0, k2: float = 1.0, rescale: bool = True) -> dict:
    """Lifted fields of every parametric catalog path (and the figure-8 twin)."""
    paths = {name: builtin_path(name) for name in PARAMETRIC_NAMES}
    paths["figure8_parametric"] = builtin_path("figure8_implicit").parametric
    out = {}
    for name, path in paths.items():
        if rescale:
            path = rescale_to_unit_box(path)
        out[name] = SpatialField(lift_to_surfaces(path), k1, k2)
    return out


# -- fields --------------------------------------------------------------------

def check_singularity_free(grid: int = 41, half: float = 3.0) -> ClaimResult:
    box = ((-half, half),) * 3
    norms = {name: min_field_norm(f, box, grid) for name, f in catalog_lifts().items()}
    worst = min(norms.values())
    return ClaimResult("fields.nonvanishing", worst >= 1.0 - 1e-9, worst, ">= 1 - 1e-9",
                       f"min |chi| over a {grid}^3 grid on [-{half},{half}]^3", {"per_path": norms})


def check_singular_points(grid: int = 64) -> ClaimResult:
    fld = PlanarField(builtin_path("figure8_implicit"), k=1.0)
    roots = find_singular_points_2d(fld, ((-2.0, 2.0), (-2.0, 2.0)), grid=grid)
    # grad phi = (2x, -8y + 16y^3) vanishes at y in {0, +-1/sqrt(2)}
    analytic = np.array([[0.0, -math.sqrt(0.5)], [0.0, 0.0], [0.0, math.sqrt(0.5)]])
    err = math.inf
    if len(roots) == 3:
        err = float(np.max(np.abs(np.array(roots) - analytic)))
    return ClaimResult("fields.singular_points_figure8", len(roots) == 3 and err < 1e-6,
                       {"count": len(roots), "max_abs_error": err}, "3 roots within 1e-6",
                       extra={"roots": [r.tolist() for r in roots]})


def check_decomposition(n: int = 10_000, seed: int = 0, half: float = 3.0) -> ClaimResult:
    rng = np.random.default_rng(seed)
    worst_orth = worst_sum = worst_closed = 0.0
    for fld in catalog_lifts().values():
        p = rng.uniform(-half, half, size=(n, 3))
        chi, tau, iota = eval_spatial(fld, p)
        scale = 1.0 + np.linalg.norm(tau, axis=1) * np.linalg.norm(iota, axis=1)
        worst_orth = max(worst_orth, float(np.max(np.abs(np.sum(tau * iota, axis=1)) / scale)))
        worst_sum = max(worst_sum, float(np.max(np.linalg.norm(chi - tau - iota, axis=1))))
        worst_closed = max(worst_closed, float(np.max(np.abs(chi - chi_closed_form(fld, p)))))
    ok = worst_orth < 1e-9 and worst_sum < 1e-12 and worst_closed < 1e-12
    return ClaimResult("fields.decomposition", ok,
                       {"orthogonality": worst_orth, "chi_minus_tau_iota": worst_sum,
                        "closed_form": worst_closed},
                       {"orthogonality": 1e-9, "chi_minus_tau_iota": 1e-12, "closed_form": 1e-12})


def check_projection() -> ClaimResult:
    worst = 0.0
    for a in ((0, 0, 1), (1, 1, 1), (0.3, -2.0, 0.5)):
        P = ProjectionOperator(a).matrix
        worst = max(worst, float(np.max(np.abs(P @ P - P))), float(np.max(np.abs(P - P.T))),
                    float(np.max(np.abs(P @ np.asarray(a, float)))),
                    abs(float(np.linalg.norm(P, 2)) - 1.0))
    return ClaimResult("fields.projection", worst < 1e-12, worst, 1e-12,
                       "idempotent, symmetric, annihilates its axis, 2-norm 1")


def _path_derivative_errors(path: ParametricPath, w) -> float:
    pairs = ((path.f1, path.df1), (path.f2, path.df2), (path.df1, path.ddf1), (path.df2, path.ddf2))
    worst = 0.0
    for f, df in pairs:
        for wi in w:
            worst = max(worst, finite_diff_check(lambda v, f=f: np.atleast_1d(f(v[0])),
                                                 lambda v, df=df: np.atleast_1d(df(v[0])),
                                                 [wi], step=1e-5 * (1.0 + abs(wi))))
    return worst


def check_derivatives(n: int = 100, seed: int = 0) -> ClaimResult:
    """Finite-difference oracle for every analytic derivative in the library."""
    rng = np.random.default_rng(seed)
    worst = {"path": 0.0, "grad_phi": 0.0, "surface_gradients": 0.0, "jacobian_chi_p": 0.0}
    for name in PARAMETRIC_NAMES:
        path = builtin_path(name)
        lo, hi = path.param_hint
        worst["path"] = max(worst["path"], _path_derivative_errors(path, rng.uniform(lo, hi, n)))
    for name in ("figure8_implicit", "circle_implicit"):
        imp: ImplicitPath2D = builtin_path(name)
        for q in rng.uniform(-1.5, 1.5, size=(n, 2)):
            worst["grad_phi"] = max(worst["grad_phi"], finite_diff_check(
                lambda v: imp.phi(v[0], v[1]), lambda v: imp.grad_phi(v[0], v[1]), q, step=1e-6))
    for fld in catalog_lifts().values():
        s = fld.surfaces
        for p in rng.uniform(-3, 3, size=(n, 3)):
            for phi, grad in ((s.phi1, s.grad_phi1), (s.phi2, s.grad_phi2)):
                worst["surface_gradients"] = max(worst["surface_gradients"],
                                                 finite_diff_check(phi, grad, p, step=1e-6))
            try:
                jac = jacobian_chi_p(fld, p)
            except ArithmeticError:
                continue
            fd = jacobian_chi_p(fld, p, method="fd")
            worst["jacobian_chi_p"] = max(worst["jacobian_chi_p"],
                                          float(np.max(np.abs(jac - fd) / np.maximum(1.0, np.abs(jac)))))
    return ClaimResult("numerics.finite_differences", max(worst.values()) < 1e-5, worst, 1e-5)


def check_prop1_crossing() -> ClaimResult:
    path = builtin_path("figure8_implicit")
    grad = float(np.linalg.norm(path.grad_phi(0.0, 0.0)))
    chi = float(np.linalg.norm(eval_planar(PlanarField(path), np.zeros(2))))
    return ClaimResult("fields.crossing_is_singular", grad == 0.0 and chi == 0.0,
                       {"grad_norm": grad, "chi_norm": chi}, 0.0,
                       "figure-8 surface function at its self-intersection")


# -- control -------------------------------------------------------------------

def check_control_examples() -> ClaimResult:
    fld = SpatialField(lift_to_surfaces(builtin_path("circle")), 1.0, 1.0)
    ctrl = GvfController(fld, s=1.0, k_theta=1.0, w=0.0)
    out = gvf_control(ctrl, UnicycleState(1.0, 0.0, math.pi / 2), (0.0, 1.0 / math.sqrt(2)))
    r = 1.0 / math.sqrt(2)
    gvf_err = max(abs(out.w_dot - r), abs(out.v_u - r), abs(out.beta),
                  abs(out.omega_u - out.theta_d_dot))
    tt = TrajTrackController(builtin_path("circle"), 1.0, 1.0, 1.0)
    out_t = traj_track_law(tt, UnicycleState(0.0, 0.0, 0.0), 1.0, 2.0, 0.0, 1.0, 0.0)
    tt_err = max(abs(out_t.v_u - 2.0), abs(out_t.omega_u - 2.0))
    return ClaimResult("control.examples", max(gvf_err, tt_err) < 1e-12,
                       {"gvf": gvf_err, "traj_track": tt_err}, 1e-12)


def check_speed_and_scaling(n: int = 200, seed: int = 0) -> ClaimResult:
    rng = np.random.default_rng(seed)
    fld = catalog_lifts(0.7, 1.3)["lemniscate"]
    speed_err = scale_err = 0.0
    for _ in range(n):
        x, y, w = rng.uniform(-2, 2, 3)
        th, s = rng.uniform(-math.pi, math.pi), rng.uniform(0.5, 5.0)
        st, vel = UnicycleState(x, y, th), rng.normal(size=2)
        a = gvf_control(GvfController(fld, s=s, k_theta=2.0, w=w), st, vel)
        b = gvf_control(GvfController(fld.scaled(rng.uniform(0.1, 10.0)), s=s, k_theta=2.0, w=w), st, vel)
        speed_err = max(speed_err, abs(a.v_u ** 2 + a.w_dot ** 2 - s * s))
        scale_err = max(scale_err, max(abs(a.v_u - b.v_u), abs(a.w_dot - b.w_dot),
                                       abs(a.omega_u - b.omega_u)) / (1.0 + abs(a.omega_u)))
    return ClaimResult("control.speed_and_scaling", speed_err < 1e-9 and scale_err < 1e-9,
                       {"speed": speed_err, "scaling": scale_err}, 1e-9)


def random_aligned_scenarios(n: int = 20, seed: int = 0, dt: float = 0.001, T: float = 5.0,
                             margin: float = 0.1):
    """Trefoil closed-loop scenarios with random pose, ``w0`` and ``beta(0)``."""
    base = load_scenario("trefoil").scenario
    fld = base.spatial_field()
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        x, y = rng.uniform([350.0, 100.0], [850.0, 600.0])
        w = rng.uniform(*base.path.build().param_hint)
        beta0 = rng.uniform(-math.pi + margin, math.pi - margin)
        c = planar_direction(fld, np.array([x, y, w]))[2]
        theta = math.atan2(c[1], c[0]) + beta0
        out.append(replace(base, init=InitialState(x, y, theta, w), dt=dt, control_period=dt, T=T))
    return out


def check_lyapunov(n: int = 20, seed: int = 0, dt: float = 0.001, T: float = 5.0,
                   tol: float = 1e-4, include_trefoil: bool = True) -> ClaimResult:
    runs = []
    if include_trefoil:
        runs.append(("trefoil", run_closed_loop(load_scenario("trefoil").scenario, dist_resolution=64)))
    for i, sc in enumerate(random_aligned_scenarios(n, seed, dt, T)):
        runs.append((f"random{i}", run_closed_loop(sc, dist_resolution=64)))
    per = {}
    for name, tr in runs:
        L = lyapunov_series(tr)
        per[name] = {"max_dV": L.max_increment, "max_dabs_beta": L.max_abs_beta_increase,
                     "aborted": tr.aborted}
    worst_v = max(v["max_dV"] for v in per.values())
    worst_b = max(v["max_dabs_beta"] for v in per.values())
    ok = worst_v < tol and worst_b < tol and not any(v["aborted"] for v in per.values())
    return ClaimResult("control.lyapunov", ok, {"max_dV": worst_v, "max_dabs_beta": worst_b}, tol,
                       extra={"runs": per})


# -- convergence ---------------------------------------------------------------

def check_trefoil(threshold: float = 5.0) -> ClaimResult:
    tr = run_closed_loop(load_scenario("trefoil").scenario, dist_resolution=64)
    err = tr["err_norm"]
    below = np.nonzero(err < threshold)[0]
    first = float(tr["t"][below[0]]) if below.size else math.inf
    tail_max = float(np.max(err[tr.tail_mask()]))
    ok = not tr.aborted and below.size > 0 and tail_max < threshold
    return ClaimResult("convergence.trefoil_closed_loop", ok,
                       {"first_time_below": first, "tail_max_err": tail_max, "initial_err": float(err[0])},
                       threshold)


def check_global_convergence(n: int = 50, seed: int = 0, dt: float = 0.01, T: float = 200.0,
                             eps: float = 1e-3, half: float = 3.0) -> ClaimResult:
    fld = SpatialField(lift_to_surfaces(builtin_path("lemniscate")), 1.0, 1.0)
    p0 = np.random.default_rng(seed).uniform(-half, half, size=(n, 3))
    traces = run_integral_curve(fld, p0, dt, T, record_every=max(1, int(round(0.5 / dt))),
                                dist_resolution=64)
    first = []
    labels = []
    for tr in traces:
        hit = np.nonzero(tr["err_norm"] < eps)[0]
        first.append(float(tr["t"][hit[0]]) if hit.size else math.inf)
        labels.append(classify_limit(tr, (), eps))
    ok = all(math.isfinite(t) and t < T for t in first) and all(c is LimitClass.PATH for c in labels)
    return ClaimResult("convergence.global_lifted", ok,
                       {"latest_first_time_below": max(first),
                        "n_converged": sum(c is LimitClass.PATH for c in labels)},
                       {"eps": eps, "T": T, "n": n})


def check_dichotomy(n: int = 100, seed: int = 0, dt: float = 0.005, T: float = 200.0,
                    eps: float = 1e-2, half: float = 1.5) -> ClaimResult:
    fld = PlanarField(builtin_path("figure8_implicit"), k=1.0)
    singular = find_singular_points_2d(fld, ((-2.0, 2.0), (-2.0, 2.0)), grid=32)
    p0 = np.random.default_rng(seed).uniform(-half, half, size=(n, 2))
    traces = run_integral_curve(fld, p0, dt, T, record_every=max(1, int(round(0.5 / dt))),
                                dist_resolution=64)
    counts = {c.value: 0 for c in LimitClass}
    for tr in traces:
        counts[classify_limit(tr, singular, eps).value] += 1
    return ClaimResult("convergence.dichotomy", counts[LimitClass.UNDECIDED.value] == 0, counts,
                       {"undecided": 0, "eps": eps}, f"{n} starts in [-{half},{half}]^2")


def check_extended_dynamics(n: int = 20, seed: int = 0, dt: float = 0.01, T: float = 20.0,
                            slack: float = 1e-9, record_every: int = 10) -> ClaimResult:
    path = builtin_path("lemniscate")
    fld = SpatialField(lift_to_surfaces(path), 1.0, 1.0)
    p0 = np.random.default_rng(seed).uniform(-3.0, 3.0, size=(n, 3))
    pairs = run_projected(fld, ProjectionOperator((0, 0, 1)), p0, dt, T, record_every=record_every,
                          dist_resolution=4096)
    max_w = 0.0
    worst_gap = -math.inf
    for full, proj in pairs:
        max_w = max(max_w, float(np.max(np.abs(proj["w"]))))
        pts = np.column_stack([full["x"], full["y"], full["w"]])
        d_full = distance_to_lifted_path(pts, path, resolution=4096)
        worst_gap = max(worst_gap, float(np.max(proj["dist"] - d_full)))
    ok = max_w == 0.0 and worst_gap <= slack
    return ClaimResult("convergence.extended_dynamics", ok,
                       {"max_abs_projected_w": max_w, "max_dist_gap": worst_gap},
                       {"projected_w": 0.0, "slack": slack})


# -- robustness ----------------------------------------------------------------

def check_iss(seed: int = 0, dt: float = 0.01, T: float = 60.0, radii=(0.05, 0.1, 0.2),
              tau: float = 2.0, vanish_tol: float = 1e-2) -> ClaimResult:
    fld = SpatialField(lift_to_surfaces(builtin_path("circle")), 1.0, 1.0)
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.0, 2 * math.pi)
    e = rng.uniform(-0.3, 0.3, size=2)
    p0 = np.array([math.cos(w) + e[0], math.sin(w) + e[1], w])
    sups = [run_perturbed(fld, DisturbanceModel("constant_bound", r), p0, dt, T, seed=seed,
                          record_every=10, dist_resolution=16).meta["tail_sup_err"] for r in radii]
    dec = run_perturbed(fld, DisturbanceModel("decaying", max(radii), tau=tau), p0, dt, T, seed=seed,
                        record_every=10, dist_resolution=16)
    final = float(dec["err_norm"][-1])
    mono = bool(np.all(np.isfinite(sups)) and np.all(np.diff(sups) >= 0))
    return ClaimResult("robustness.iss", mono and final < vanish_tol,
                       {"tail_sup_err": dict(zip(map(str, radii), sups)), "decaying_final_err": final,
                        "initial_err": float(np.hypot(*e))},
                       {"monotone_in_r": True, "decaying_final": vanish_tol})


# -- numerics ------------------------------------------------------------------

def check_rk4_order(dt: float = 0.1, T: float = 5.0) -> ClaimResult:
    fld = SpatialField(lift_to_surfaces(builtin_path("circle")), 1.0, 1.0)
    p0 = np.array([1.6, -0.4, 0.3])

    def final(h):
        tr = run_integral_curve(fld, p0, h, T, record_every=10 ** 9, dist_resolution=2)
        return np.array([tr["x"][-1], tr["y"][-1], tr["w"][-1]])

    order = observed_order(final, dt)
    return ClaimResult("numerics.rk4_order", order >= 3.5, order, ">= 3.5")


def check_determinism(name: str = "lissajous_compare", T: float = 20.0) -> ClaimResult:
    sc = replace(load_scenario(name).scenario, T=T)
    texts = [run_closed_loop(sc, dist_resolution=64).to_csv_text() for _ in range(2)]
    return ClaimResult("numerics.determinism", texts[0] == texts[1], texts[0] == texts[1], "byte-identical")


# -- comparison ----------------------------------------------------------------

def comparison_runs(scenario: Scenario, noise: bool = True):
    """GVF and trajectory-tracking runs sharing init, seed and noise."""
    sc = scenario if noise else replace(scenario, noise=None)
    gvf = run_closed_loop(replace(sc, controller=replace(sc.controller, kind="gvf")))
    tt = run_closed_loop(replace(sc, controller=replace(sc.controller, kind="traj_track")))
    return gvf, tt


def point_gaps(trace, times=(0.0, 2.0, 30.0)) -> list:
    """Robot position and its guiding / desired point at the sample nearest each time."""
    out = []
    for t in times:
        i = int(np.argmin(np.abs(trace["t"] - t)))
        robot = np.array([trace["x"][i], trace["y"][i]])
        err = np.array([trace["phi1"][i], trace["phi2"][i]])
        target = robot - err
        out.append({"t": float(trace["t"][i]), "robot": robot.tolist(), "point": target.tolist(),
                    "distance": float(np.linalg.norm(err))})
    return out


def check_comparison(name: str = "lissajous_compare") -> ClaimResult:
    sc = load_scenario(name).scenario
    gvf, tt = comparison_runs(sc, noise=True)
    gvf0, tt0 = comparison_runs(sc, noise=False)
    m = {k: smoothness_metrics(tr) for k, tr in
         (("gvf", gvf), ("traj_track", tt), ("gvf_noise_free", gvf0), ("traj_track_noise_free", tt0))}
    d_g = point_gaps(gvf, (2.0,))[0]["distance"]
    d_t = point_gaps(tt, (2.0,))[0]["distance"]
    a = m["gvf"].heading_total_variation < m["traj_track"].heading_total_variation
    b = d_g < d_t
    c = m["gvf_noise_free"].err_rms < 1.0 and m["traj_track_noise_free"].err_rms < 1.0
    return ClaimResult("comparison.lissajous", a and b and c and not (gvf.aborted or tt.aborted),
                       {"tv_gvf": m["gvf"].heading_total_variation,
                        "tv_traj_track": m["traj_track"].heading_total_variation,
                        "dist_t2_gvf": d_g, "dist_t2_traj_track": d_t,
                        "noise_free_err_rms_gvf": m["gvf_noise_free"].err_rms,
                        "noise_free_err_rms_traj_track": m["traj_track_noise_free"].err_rms},
                       {"a": "tv_gvf < tv_tt", "b": "dist_gvf < dist_tt at t=2", "c": "err_rms < 1"})


# -- suites --------------------------------------------------------------------

SUITES = {
    "fields": lambda: [check_singularity_free(), check_singular_points(), check_decomposition(),
                       check_projection(), check_prop1_crossing(), check_derivatives(n=20)],
    "control": lambda: [check_control_examples(), check_speed_and_scaling(),
                        check_lyapunov(n=5, include_trefoil=False)],
    "convergence": lambda: [check_global_convergence(n=20), check_dichotomy(n=30),
                            check_extended_dynamics(n=5), check_trefoil()],
    "robustness": lambda: [check_iss()],
}


def run_suite(name: str) -> list:
    """Run one suite (or ``"all"``) and return its claim results."""
    if name == "all":
        return [r for key in SUITES for r in SUITES[key]()]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join([*SUITES, 'all'])}")
    return SUITES[name]()
