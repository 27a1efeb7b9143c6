import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvfsim.field import PlanarField, ProjectionOperator, SpatialField, chi_closed_form, planar_direction
from gvfsim.geometry import builtin_path, distance_to_path, lift_to_surfaces
from gvfsim.sim import (
    COLUMNS,
    DISTURBANCE_STREAM,
    NOISE_STREAM,
    ControllerSpec,
    DisturbanceModel,
    DisturbanceSource,
    InitialState,
    NoiseModel,
    NoiseSource,
    PathSpec,
    Scenario,
    Trace,
    load_trace,
    make_rng,
    rk4_step,
    run_closed_loop,
    run_integral_curve,
    run_perturbed,
    run_projected,
    run_scenario,
)


def circle_scenario(**kw):
    base = dict(path=PathSpec("circle"), controller=ControllerSpec("gvf", s=1.0, k1=1.0, k2=1.0, k_theta=2.0),
                init=InitialState(1.0, 0.0, math.pi / 2, 0.0), dt=0.01, control_period=0.05, T=10.0)
    base.update(kw)
    return Scenario(**base)


# -- random sources --------------------------------------------------------

def test_noise_power_zero_is_silent():
    src = NoiseSource(NoiseModel(0.0, 0.1), make_rng(1, NOISE_STREAM))
    assert np.all(src.sample(3.7) == 0.0)


def test_noise_std_statistics():
    model = NoiseModel(10.0, 0.1)
    assert model.std == pytest.approx(10.0)
    src = NoiseSource(model, make_rng(5, NOISE_STREAM))
    draws = np.array([src.sample(0.1 * k) for k in range(50_000)]).ravel()  # 1e5 values
    assert abs(draws.std() / 10.0 - 1.0) < 0.02
    assert abs(draws.mean()) < 0.2


def test_noise_zero_order_hold():
    src = NoiseSource(NoiseModel(10.0, 0.1), make_rng(2, NOISE_STREAM))
    a, b = src.sample(0.30), src.sample(0.399)
    c = src.sample(0.40)
    assert np.array_equal(a, b) and not np.array_equal(b, c)


def test_hold_boundaries_are_exact_multiples():
    # 0.3 / 0.1 is 2.9999999999999996 in floating point; the hold must still switch at 0.3
    src = NoiseSource(NoiseModel(10.0, 0.1), make_rng(2, NOISE_STREAM))
    before = src.sample(0.29)
    assert not np.array_equal(before, src.sample(0.1 * 3))


def test_streams_are_independent():
    n1 = NoiseSource(NoiseModel(1.0, 0.1), make_rng(9, NOISE_STREAM)).sample(0.0)
    d = DisturbanceSource(DisturbanceModel("constant_bound", 1.0), make_rng(9, DISTURBANCE_STREAM)).sample(0.0)
    n2 = NoiseSource(NoiseModel(1.0, 0.1), make_rng(9, NOISE_STREAM)).sample(0.0)
    assert np.array_equal(n1, n2)
    assert not np.allclose(d[:2], n1)


@given(seed=st.integers(0, 2 ** 32), t=st.floats(0, 100))
@settings(max_examples=50)
def test_disturbance_bounded(seed, t):
    for kind in ("constant_bound", "decaying"):
        src = DisturbanceSource(DisturbanceModel(kind, 0.3, tau=2.0), make_rng(seed, DISTURBANCE_STREAM))
        assert np.linalg.norm(src.sample(t)) <= 0.3 + 1e-15


def test_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(-1.0, 0.1)
    with pytest.raises(ValueError):
        DisturbanceModel("gusty", 1.0)
    with pytest.raises(ValueError):
        DisturbanceModel("constant_bound", -1.0)


# -- scenarios and traces ----------------------------------------------------

def test_scenario_validation():
    with pytest.raises(ValueError):
        circle_scenario(dt=0.0)
    with pytest.raises(ValueError):
        circle_scenario(T=-1.0)
    with pytest.raises(ValueError):
        circle_scenario(control_period=0.015)
    with pytest.raises(ValueError):
        circle_scenario(seed=-1)
    with pytest.raises(ValueError):
        ControllerSpec("pid")


def test_scenario_digest_tracks_content():
    a, b = circle_scenario(), circle_scenario()
    assert a.digest() == b.digest()
    assert a.digest() != circle_scenario(seed=1).digest()


def test_trace_roundtrip(tmp_path):
    tr = run_closed_loop(circle_scenario(T=1.0))
    csv_path, json_path = tr.save(tmp_path, "run")
    assert csv_path.read_text().splitlines()[0] == "t,x,y,theta,w,v_u,omega_u,phi1,phi2,err_norm,beta,dist"
    side = json.loads(json_path.read_text())
    assert side["scenario_hash"] == circle_scenario(T=1.0).digest()
    assert side["seed"] == 0 and side["version"]
    back = load_trace(csv_path)
    assert np.array_equal(back.data, tr.data)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["run.csv", "run.json"]


def test_trace_columns_and_time():
    tr = run_closed_loop(circle_scenario(T=2.0))
    assert tr.data.shape[1] == len(COLUMNS)
    assert np.all(np.diff(tr["t"]) > 0)
    assert tr["t"][-1] == pytest.approx(2.0)
    assert len(tr) == 41  # one row per control update


# -- integrators ---------------------------------------------------------------

def test_rk4_step_exact_for_cubic():
    f = lambda t, y: np.array([3 * t ** 2])  # noqa: E731
    assert rk4_step(f, 0.0, np.array([0.0]), 0.5)[0] == pytest.approx(0.125, abs=1e-15)


def test_rk4_order_on_circle_lift(circle_field):
    p0 = np.array([1.6, -0.4, 0.3])

    def final(h):
        tr = run_integral_curve(circle_field, p0, h, 5.0, record_every=10 ** 9, dist_resolution=2)
        return np.array([tr["x"][-1], tr["y"][-1], tr["w"][-1]])

    a, b, c = final(0.1), final(0.05), final(0.025)
    assert math.log2(np.linalg.norm(a - b) / np.linalg.norm(b - c)) >= 3.5


def test_figure8_origin_is_stationary():
    fld = PlanarField(builtin_path("figure8_implicit"), k=1.0)
    tr = run_integral_curve(fld, np.zeros(2), 0.01, 10.0)
    assert np.all(tr["x"] == 0.0) and np.all(tr["y"] == 0.0)


def test_lemniscate_from_origin_converges(lemniscate_field):
    tr = run_integral_curve(lemniscate_field, np.zeros(3), 0.01, 20.0, record_every=10)
    assert tr["err_norm"][-1] < 1e-3


def test_on_path_start_stays_and_w_advances(circle_field):
    tr = run_integral_curve(circle_field, np.array([1.0, 0.0, 0.0]), 0.01, 10.0)
    assert np.max(tr["err_norm"]) < 1e-9
    assert np.all(np.diff(tr["w"]) > 0)
    assert tr["w"][-1] == pytest.approx(10.0, rel=1e-9)


def test_batch_matches_single(lemniscate_field, rng):
    p0 = rng.uniform(-2, 2, size=(3, 3))
    batch = run_integral_curve(lemniscate_field, p0, 0.02, 2.0)
    for i in range(3):
        single = run_integral_curve(lemniscate_field, p0[i], 0.02, 2.0)
        np.testing.assert_array_equal(batch[i].data, single.data)


def test_finite_escape_flag():
    fld = PlanarField(builtin_path("figure8_implicit"), k=1.0)
    tr = run_integral_curve(fld, np.array([40.0, 40.0]), 0.01, 1.0)
    assert "finite_escape" in tr.flags


def test_projected_third_coordinate_and_distance(lemniscate_field, rng):
    path = lemniscate_field.path
    for p0 in rng.uniform(-3, 3, size=(3, 3)):
        full, proj = run_projected(lemniscate_field, ProjectionOperator((0, 0, 1)), p0, 0.02, 10.0,
                                   record_every=5)
        assert np.all(proj["w"] == 0.0)
        np.testing.assert_array_equal(proj["x"], full["x"])
        assert np.all(proj["dist"] <= full["err_norm"] + 1e-9)


def test_projected_on_path_traverses(circle_field):
    full, proj = run_projected(circle_field, ProjectionOperator((0, 0, 1)), np.array([1.0, 0.0, 0.0]),
                               0.01, 2 * math.pi, record_every=10)
    assert np.max(proj["dist"]) < 1e-9
    angles = np.unwrap(np.arctan2(proj["y"], proj["x"]))
    # on the unit circle the angle advances at unit rate
    assert angles[-1] - angles[0] == pytest.approx(proj["t"][-1], abs=1e-6)


def test_perturbed_r0_matches_integral_curve(circle_field):
    p0 = np.array([1.2, 0.1, 0.0])
    a = run_perturbed(circle_field, DisturbanceModel("constant_bound", 0.0), p0, 0.01, 5.0, seed=3)
    b = run_integral_curve(circle_field, p0, 0.01, 5.0)
    np.testing.assert_array_equal(a.data, b.data)


def test_perturbed_decaying_vanishes(circle_field):
    tr = run_perturbed(circle_field, DisturbanceModel("decaying", 0.2, tau=1.0), np.array([1.3, 0.0, 0.0]),
                       0.01, 30.0, seed=1, record_every=10)
    assert tr["err_norm"][-1] < 1e-2
    assert tr.meta["tail_sup_err"] == pytest.approx(np.max(tr["err_norm"][tr["t"] >= 15.0]))


# -- closed loop -----------------------------------------------------------

def test_closed_loop_aligned_on_path_stays():
    tr = run_closed_loop(circle_scenario(T=20.0, control_period=0.01))
    assert np.max(tr["err_norm"]) < 1e-3


def test_closed_loop_determinism():
    sc = circle_scenario(init=InitialState(1.5, 0.5, 0.3, 0.0), noise=NoiseModel(0.01, 0.1),
                         disturbance=DisturbanceModel("constant_bound", 0.05), seed=42)
    assert run_closed_loop(sc).to_csv_text() == run_closed_loop(sc).to_csv_text()
    assert run_closed_loop(sc).to_csv_text() != run_closed_loop(replace(sc, seed=43)).to_csv_text()


def test_noise_perturbs_only_perception():
    # the recorded error is measured at the true position
    sc = circle_scenario(noise=NoiseModel(1.0, 0.1), T=1.0, seed=3)
    tr = run_closed_loop(sc)
    e = lift_to_surfaces(builtin_path("circle")).errors(np.column_stack([tr["x"], tr["y"], tr["w"]]))
    np.testing.assert_allclose(np.hypot(e[:, 0], e[:, 1]), tr["err_norm"], atol=1e-12)


def test_w_follows_euler_update():
    sc = circle_scenario(init=InitialState(1.4, -0.3, 0.0, 0.0), T=1.0)
    tr = run_closed_loop(sc)
    fld = sc.spatial_field()
    s = sc.controller.s
    for i in range(5):
        chi_hat = planar_direction(fld, np.array([tr["x"][i], tr["y"][i], tr["w"][i]]))[0]
        assert tr["w"][i + 1] == pytest.approx(tr["w"][i] + s * chi_hat[2] * 0.05, rel=1e-12)


def test_excluded_initial_condition_flag():
    sc = circle_scenario(init=InitialState(1.0, 0.0, -math.pi / 2, 0.0), T=0.5)
    tr = run_closed_loop(sc)
    assert "excluded_initial_condition" in tr.flags
    assert tr["beta"][0] == pytest.approx(math.pi)


def test_singular_heading_aborts_with_partial_trace():
    sc = circle_scenario(init=InitialState(1.0, 1.0, 0.0, 0.0), T=1.0)
    tr = run_closed_loop(sc)
    assert tr.aborted and "vanishes" in tr.error
    assert tr.data.shape == (0, len(COLUMNS))


def test_traj_track_records_desired_point_error():
    spec = ControllerSpec("traj_track", k1t=1.0, k2t=1.0, k3t=1.0)
    tr = run_closed_loop(circle_scenario(controller=spec, init=InitialState(0.5, 0.0, 0.0), T=2.0))
    assert np.all(np.isnan(tr["beta"]))
    np.testing.assert_allclose(tr["w"], tr["t"])
    assert tr["phi1"][0] == pytest.approx(0.5 - 1.0)


def test_dist_column_matches_distance_to_path():
    tr = run_closed_loop(circle_scenario(init=InitialState(1.5, 0.5, 0.3, 0.0), T=2.0))
    pts = np.column_stack([tr["x"], tr["y"]])
    np.testing.assert_allclose(tr["dist"], distance_to_path(pts, builtin_path("circle"), resolution=1024))
    np.testing.assert_allclose(tr["dist"], np.abs(np.hypot(tr["x"], tr["y"]) - 1.0), atol=1e-9)


def test_run_scenario_dispatch():
    sc = circle_scenario(controller=ControllerSpec("integral_curve"), init=InitialState(2.0, 0.0, 0.0, 0.0), T=1.0)
    tr = run_scenario(sc)
    assert tr.meta["kind"] == "integral_curve" and len(tr) == 21
    planar = replace(sc, path=PathSpec("figure8_implicit"), init=InitialState(0.5, 0.5))
    assert np.all(run_scenario(planar)["phi2"] == 0.0)
    assert isinstance(tr, Trace)
