import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvfsim.analysis import (
    ClaimResult,
    LimitClass,
    classify_limit,
    find_singular_points_2d,
    finite_diff_check,
    lyapunov_series,
    observed_order,
    report_json,
    smoothness_metrics,
)
from gvfsim.control import ContractError
from gvfsim.field import PlanarField, eval_planar
from gvfsim.geometry import builtin_path, lift_to_surfaces
from gvfsim.sim import (
    COLUMNS,
    ControllerSpec,
    InitialState,
    PathSpec,
    Scenario,
    Trace,
    run_closed_loop,
    run_integral_curve,
)


def figure8_roots():
    # oracle: grad phi = (2x, -8y + 16y^3) = 0
    ys = np.sort(np.roots([16.0, 0.0, -8.0, 0.0]).real)
    return np.column_stack([np.zeros(3), ys])


@pytest.mark.parametrize("grid", [16, 17, 24, 33, 64, 100])
def test_figure8_singular_points_complete(grid):
    roots = find_singular_points_2d(PlanarField(builtin_path("figure8_implicit")), grid=grid)
    assert len(roots) == 3
    np.testing.assert_allclose(np.array(roots), figure8_roots(), atol=1e-6)
    fld = PlanarField(builtin_path("figure8_implicit"))
    assert max(np.linalg.norm(eval_planar(fld, r)) for r in roots) < 1e-10


def test_circle_single_singular_point():
    roots = find_singular_points_2d(PlanarField(builtin_path("circle_implicit"), k=1.0), grid=16)
    assert len(roots) == 1
    assert np.allclose(roots[0], 0.0, atol=1e-12)


def test_singular_points_independent_of_gain():
    # (E - k phi I) is invertible, so the zeros are those of grad phi for every k
    for k in (0.1, 1.0, 10.0):
        roots = find_singular_points_2d(PlanarField(builtin_path("figure8_implicit"), k=k), grid=32)
        np.testing.assert_allclose(np.array(roots), figure8_roots(), atol=1e-6)


def test_singular_finder_validation():
    fld = PlanarField(builtin_path("circle_implicit"))
    with pytest.raises(ValueError):
        find_singular_points_2d(fld, grid=4)
    with pytest.raises(ValueError):
        find_singular_points_2d(fld, tol=0.0)


def test_singular_finder_respects_box():
    roots = find_singular_points_2d(PlanarField(builtin_path("figure8_implicit")), ((-1, 1), (0.2, 1.5)), grid=20)
    assert len(roots) == 1 and roots[0][1] == pytest.approx(math.sqrt(0.5))


def test_classify_origin_is_singular():
    fld = PlanarField(builtin_path("figure8_implicit"))
    tr = run_integral_curve(fld, np.zeros(2), 0.01, 5.0)
    assert classify_limit(tr, figure8_roots(), 1e-2) is LimitClass.SINGULAR


def test_classify_lifted_random_starts_converge(lemniscate_field, rng):
    traces = run_integral_curve(lemniscate_field, rng.uniform(-3, 3, (5, 3)), 0.01, 60.0, record_every=20)
    for tr in traces:
        assert classify_limit(tr, (), 1e-3) is LimitClass.PATH
        # stable under eps halving
        assert classify_limit(tr, (), 5e-4) is LimitClass.PATH


def test_classify_undecided_when_too_short(lemniscate_field):
    tr = run_integral_curve(lemniscate_field, np.array([3.0, 3.0, 0.0]), 0.01, 0.2)
    assert classify_limit(tr, (), 1e-3) is LimitClass.UNDECIDED


def test_classify_empty_trace_rejected(lemniscate_field):
    tr = run_integral_curve(lemniscate_field, np.zeros(3), 0.1, 0.1)
    tr.data = tr.data[:0]
    with pytest.raises(ContractError):
        classify_limit(tr)


def _circle_scenario(init, T=5.0, cp=0.01):
    return Scenario(PathSpec("circle"), ControllerSpec("gvf", s=1.0, k1=1.0, k2=1.0, k_theta=2.0),
                    init, dt=cp, control_period=cp, T=T)


def test_lyapunov_aligned_start_is_zero():
    tr = run_closed_loop(_circle_scenario(InitialState(1.0, 0.0, math.pi / 2)))
    L = lyapunov_series(tr)
    assert np.max(L.V) < 1e-12 and not L.excluded


def test_lyapunov_excluded_start():
    tr = run_closed_loop(_circle_scenario(InitialState(1.0, 0.0, -math.pi / 2), T=0.1))
    L = lyapunov_series(tr)
    assert L.V[0] == pytest.approx(2.0) and L.excluded


def test_lyapunov_decreases_off_path():
    tr = run_closed_loop(_circle_scenario(InitialState(2.0, 0.5, 2.0), T=10.0))
    L = lyapunov_series(tr)
    assert L.V[0] > 0.1 and L.V[-1] < 1e-6
    assert L.max_increment < 1e-4 and L.max_abs_beta_increase < 1e-4


def test_lyapunov_needs_beta():
    spec = ControllerSpec("traj_track", k1t=1.0, k2t=1.0, k3t=1.0)
    tr = run_closed_loop(Scenario(PathSpec("circle"), spec, InitialState(1.0, 0.0, 0.0), dt=0.01, T=1.0))
    with pytest.raises(ContractError):
        lyapunov_series(tr)


def test_smoothness_straight_line():
    # total variation -> |theta(0) - theta_path| as the heading gain grows
    theta0 = 1.0
    excess = []
    for k_theta in (2.0, 20.0, 200.0):
        sc = Scenario(PathSpec("line", {"half_length": 1000.0}),
                      ControllerSpec("gvf", s=1.0, k1=1.0, k2=1.0, k_theta=k_theta),
                      InitialState(0.0, 0.0, theta0, 0.0), dt=0.001, control_period=0.001, T=8.0)
        m = smoothness_metrics(run_closed_loop(sc, dist_resolution=8))
        assert m.reversal_count == 0
        excess.append(m.heading_total_variation - theta0)
    assert excess[0] > excess[1] > excess[2] >= 0
    assert excess[2] < 1e-2


def test_smoothness_counts_reversals_and_unwraps():
    data = np.zeros((4, len(COLUMNS)))
    data[:, 0] = [0, 1, 2, 3]
    data[:, 3] = [3.1, -3.1, 3.1, 3.0]  # crosses the branch cut twice
    data[:, 5] = [1.0, -0.5, -0.1, 2.0]
    m = smoothness_metrics(Trace(data))
    assert m.heading_total_variation == pytest.approx(2 * (2 * math.pi - 6.2) + 0.1)
    assert m.reversal_count == 2


def test_finite_diff_examples(rng):
    surf = lift_to_surfaces(builtin_path("lissajous"))
    for p in rng.uniform(-100, 100, size=(20, 3)):
        assert finite_diff_check(surf.phi1, surf.grad_phi1, p, step=1e-6) < 1e-6
    f8 = builtin_path("figure8_implicit")
    err = finite_diff_check(lambda q: f8.phi(q[0], q[1]), lambda q: np.array([2.0, 8.0]), [1.0, 1.0])
    assert err < 1e-6
    with pytest.raises(ValueError):
        finite_diff_check(surf.phi1, surf.grad_phi1, np.zeros(3), step=0.0)


def test_finite_diff_catches_wrong_derivative():
    assert finite_diff_check(lambda x: x ** 3, lambda x: 2 * x ** 2, np.array([1.5])) > 0.1


@given(p=st.integers(1, 6))
@settings(max_examples=6, deadline=None)
def test_observed_order_of_known_schemes(p):
    # synthetic end states with error exactly h^p
    assert observed_order(lambda h: np.array([1.0 + h ** p]), 0.1) == pytest.approx(p, abs=1e-6)


def test_report_json_roundtrip():
    text = report_json([ClaimResult("a", True, np.float64(0.5), 1.0), ClaimResult("b", False, math.inf, 1.0)], "demo")
    doc = json.loads(text)
    assert doc["suite"] == "demo" and doc["passed"] is False
    assert doc["claims"][0]["measured"] == 0.5
    assert set(doc["claims"][0]) >= {"claim_id", "passed", "measured", "tolerance"}
