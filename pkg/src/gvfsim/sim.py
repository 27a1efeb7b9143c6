"""Fixed-step simulation: open-loop integral curves, extended (projected)
dynamics, disturbed fields, and the closed-loop unicycle.

Everything integrates with classical RK4 at a fixed step.  The closed loop
re-evaluates its controller every ``control_period`` and holds the commands
in between; the virtual coordinate advances by an Euler step at the control
rate.

Random numbers come from numpy's PCG64 generator.  Each consumer gets its own
stream, derived as ``SeedSequence(seed, spawn_key=(stream_id,))`` with
``NOISE_STREAM = 0`` and ``DISTURBANCE_STREAM = 1``, so enabling one consumer
never shifts the draws of the other.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import __version__
from .control import (
    GvfController,
    StalledTrajectoryError,
    TrajTrackController,
    UnicycleState,
    desired_state,
    gvf_control,
    traj_track_law,
    wrap_angle,
)
from .field import (
    AnySpatial,
    PlanarField,
    ProjectionOperator,
    SingularHeadingError,
    SpatialField,
    chi_closed_form,
    eval_planar,
)
from .geometry import (
    ImplicitPath2D,
    ParametricPath,
    builtin_path,
    distance_to_path,
    lift_to_surfaces,
)

__all__ = [
    "COLUMNS",
    "NOISE_STREAM",
    "DISTURBANCE_STREAM",
    "make_rng",
    "NoiseModel",
    "NoiseSource",
    "DisturbanceModel",
    "DisturbanceSource",
    "PathSpec",
    "ControllerSpec",
    "InitialState",
    "Scenario",
    "Trace",
    "load_trace",
    "rk4_step",
    "run_closed_loop",
    "run_integral_curve",
    "run_projected",
    "run_perturbed",
    "run_scenario",
]

COLUMNS = ("t", "x", "y", "theta", "w", "v_u", "omega_u",
           "phi1", "phi2", "err_norm", "beta", "dist")
_COL = {name: i for i, name in enumerate(COLUMNS)}

NOISE_STREAM = 0
DISTURBANCE_STREAM = 1

NOISE_SEMANTICS = "zero-order-held Gaussian, per-axis variance = power / sample_time"

OVERFLOW_BOUND = 1e12

DIST_RESOLUTION = 1024


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent PCG64 generator for consumer ``stream`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(stream,))))


def _hold_index(t: float, period: float) -> int:
    # tolerance absorbs n*dt round-off at hold boundaries
    return int(math.floor(t / period + 1e-9))


# -- noise and disturbances --------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Band-limited white noise on the perceived position."""

    power: float = 0.0
    sample_time: float = 0.1

    def __post_init__(self):
        if self.power < 0 or not self.sample_time > 0:
            raise ValueError("noise needs power >= 0 and sample_time > 0")

    @property
    def std(self) -> float:
        return math.sqrt(self.power / self.sample_time)


class NoiseSource:
    """Seeded, zero-order-held noise sampler.  Query times must not decrease."""

    def __init__(self, model: NoiseModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self._index = -1
        self._value = np.zeros(2)

    def sample(self, t: float) -> np.ndarray:
        if self.model.power == 0.0:
            return np.zeros(2)
        k = _hold_index(t, self.model.sample_time)
        while self._index < k:
            self._value = self.rng.normal(0.0, self.model.std, size=2)
            self._index += 1
        return self._value.copy()


@dataclass(frozen=True)
class DisturbanceModel:
    """Additive field disturbance ``d(t)`` with ``|d(t)| <= r``.

    ``constant_bound``: ``d = r u(t)``; ``decaying``: ``d = r exp(-t/tau) u(t)``.
    ``u(t)`` is uniform in the unit ball, redrawn every ``sample_time``.
    """

    kind: str = "constant_bound"
    r: float = 0.0
    tau: float = 1.0
    sample_time: float = 0.1

    def __post_init__(self):
        if self.kind not in ("constant_bound", "decaying"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.r < 0 or not self.tau > 0 or not self.sample_time > 0:
            raise ValueError("disturbance needs r >= 0, tau > 0, sample_time > 0")


class DisturbanceSource:
    def __init__(self, model: DisturbanceModel, rng: np.random.Generator, dim: int = 3):
        self.model = model
        self.rng = rng
        self.dim = dim
        self._index = -1
        self._unit = np.zeros(dim)

    def _draw(self):
        v = self.rng.normal(size=self.dim)
        v /= np.linalg.norm(v)
        return v * self.rng.uniform() ** (1.0 / self.dim)

    def sample(self, t: float) -> np.ndarray:
        k = _hold_index(t, self.model.sample_time)
        while self._index < k:
            self._unit = self._draw()
            self._index += 1
        scale = self.model.r
        if self.model.kind == "decaying":
            scale *= math.exp(-t / self.model.tau)
        return scale * self._unit


# -- scenarios ---------------------------------------------------------------

@dataclass(frozen=True)
class PathSpec:
    name: str
    params: dict = field(default_factory=dict)

    def build(self):
        return builtin_path(self.name, **self.params)


@dataclass(frozen=True)
class ControllerSpec:
    """``kind`` is ``gvf``, ``traj_track`` or ``integral_curve`` (open loop)."""

    kind: str = "gvf"
    s: float = 1.0
    k1: float = 1.0
    k2: float = 1.0
    k_theta: float = 1.0
    k1t: Optional[float] = None
    k2t: Optional[float] = None
    k3t: Optional[float] = None
    velocity_source: str = "measured"

    def __post_init__(self):
        if self.kind not in ("gvf", "traj_track", "integral_curve"):
            raise ValueError(f"unknown controller kind {self.kind!r}")

    @property
    def has_traj_gains(self) -> bool:
        return None not in (self.k1t, self.k2t, self.k3t)


@dataclass(frozen=True)
class InitialState:
    x: float
    y: float
    theta: float = 0.0
    w: float = 0.0


@dataclass(frozen=True)
class Scenario:
    path: PathSpec
    controller: ControllerSpec
    init: InitialState
    dt: float = 0.005
    control_period: float = 0.05
    T: float = 10.0
    noise: Optional[NoiseModel] = None
    disturbance: Optional[DisturbanceModel] = None
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        ratio = self.control_period / self.dt
        if self.control_period < self.dt or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("control_period must be an integer multiple of dt")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def spatial_field(self) -> SpatialField:
        return SpatialField(lift_to_surfaces(self.path.build()), self.controller.k1, self.controller.k2)


# -- traces ------------------------------------------------------------------

@dataclass
class Trace:
    """Sampled run record; ``data`` has one row per sample in ``COLUMNS`` order."""

    data: np.ndarray
    meta: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    error: Optional[str] = None

    def __len__(self):
        return len(self.data)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, _COL[name]]

    @property
    def aborted(self) -> bool:
        return self.error is not None

    def tail_mask(self, fraction: float = 0.25) -> np.ndarray:
        """Samples in the final ``fraction`` of the covered time span."""
        t = self["t"]
        start = t[0] + (1.0 - fraction) * (t[-1] - t[0])
        return t >= start - 1e-12

    def to_csv_text(self) -> str:
        lines = [",".join(COLUMNS)]
        for row in self.data:
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    def sidecar(self) -> dict:
        out = dict(self.meta)
        out["flags"] = list(self.flags)
        out["error"] = self.error
        out["columns"] = list(COLUMNS)
        return out

    def save(self, out_dir, stem: str):
        """Write ``<stem>.csv`` and ``<stem>.json`` atomically; return both paths."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{stem}.csv"
        json_path = out_dir / f"{stem}.json"
        atomic_write(csv_path, self.to_csv_text())
        atomic_write(json_path, json.dumps(self.sidecar(), indent=2, sort_keys=True, default=str) + "\n")
        return csv_path, json_path


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_trace(csv_path) -> Trace:
    csv_path = Path(csv_path)
    with open(csv_path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != ",".join(COLUMNS):
            raise ValueError(f"unexpected trace header: {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    meta = {}
    side = csv_path.with_suffix(".json")
    if side.exists():
        meta = json.loads(side.read_text())
    return Trace(data=data.reshape(-1, len(COLUMNS)), meta=meta,
                 flags=meta.pop("flags", []), error=meta.pop("error", None))


def _planar_path_of(field_or_path):
    path = getattr(field_or_path, "path", field_or_path)
    if isinstance(path, ImplicitPath2D):
        return path.parametric
    return path


def _fill_dist(data: np.ndarray, path, resolution: int = DIST_RESOLUTION) -> None:
    if path is None or len(data) == 0:
        data[:, _COL["dist"]] = np.nan
        return
    data[:, _COL["dist"]] = distance_to_path(data[:, 1:3], path, resolution=resolution)


# -- integrators -------------------------------------------------------------

def rk4_step(f, t: float, y, h: float):
    """One classical Runge-Kutta step of ``y' = f(t, y)``."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _vector_field(fld):
    if isinstance(fld, PlanarField):
        return lambda p: eval_planar(fld, p)
    return lambda p: chi_closed_form(fld, p)


def _integrate(rhs, y0: np.ndarray, dt: float, T: float, record_every: int = 1,
               forcing=None, overflow: float = OVERFLOW_BOUND):
    """Fixed-step RK4 over ``[0, T]`` for a batch ``y0`` of shape ``(N, d)``.

    ``forcing(t)`` (optional) returns an additive term held constant over each
    step.  Trajectories whose norm exceeds ``overflow`` are frozen and
    reported in the returned ``escaped`` mask.  The run takes
    ``round(T / dt)`` steps, so it ends at ``round(T / dt) * dt``.
    """
    if not (dt > 0 and T > 0):
        raise ValueError("dt and T must be positive")
    n_steps = int(round(T / dt))
    y = np.array(y0, dtype=float)
    escaped = np.zeros(len(y), dtype=bool)
    times, states = [0.0], [y.copy()]
    for n in range(n_steps):
        t = n * dt
        if forcing is None:
            f = lambda _t, z: rhs(z)  # noqa: E731
        else:
            d = forcing(t)
            f = lambda _t, z, d=d: rhs(z) + d  # noqa: E731
        with np.errstate(over="ignore", invalid="ignore"):
            y_new = rk4_step(f, t, y, dt)
        bad = ~np.all(np.isfinite(y_new), axis=1) | (np.linalg.norm(y_new, axis=1) > overflow)
        escaped |= bad
        y = np.where(escaped[:, None], y, y_new)
        if (n + 1) % record_every == 0 or n + 1 == n_steps:
            times.append((n + 1) * dt)
            states.append(y.copy())
    return np.array(times), np.stack(states, axis=1), escaped  # states: (N, n_rec, d)


def _open_loop_rows(fld, t, pts):
    """Trace rows for open-loop samples ``pts`` of shape ``(n, 2|3)``."""
    n = len(pts)
    data = np.full((n, len(COLUMNS)), np.nan)
    data[:, _COL["t"]] = t
    data[:, _COL["x"]] = pts[:, 0]
    data[:, _COL["y"]] = pts[:, 1]
    if isinstance(fld, PlanarField):
        chi = eval_planar(fld, pts)
        phi = fld.path.phi(pts[:, 0], pts[:, 1])
        data[:, _COL["phi1"]] = phi
        data[:, _COL["phi2"]] = 0.0
        data[:, _COL["err_norm"]] = np.abs(phi)
    else:
        chi = chi_closed_form(fld, pts)
        e = fld.surfaces.errors(pts)
        data[:, _COL["w"]] = pts[:, 2]
        data[:, _COL["phi1"]] = e[:, 0]
        data[:, _COL["phi2"]] = e[:, 1]
        data[:, _COL["err_norm"]] = np.hypot(e[:, 0], e[:, 1])
    data[:, _COL["theta"]] = np.arctan2(chi[:, 1], chi[:, 0])
    return data


def run_integral_curve(fld: Union[PlanarField, AnySpatial], p0, dt: float, T: float,
                       record_every: int = 1, dist_resolution: int = DIST_RESOLUTION):
    """Integrate ``p' = chi(p)`` from ``p0``.

    ``p0`` may be a single point or a batch of shape ``(N, d)``; a batch
    returns a list of traces.  ``v_u``, ``omega_u`` and ``beta`` are NaN in
    open-loop traces; ``theta`` is the heading of the field's planar part.
    """
    p0 = np.asarray(p0, dtype=float)
    single = p0.ndim == 1
    batch = np.atleast_2d(p0)
    times, states, escaped = _integrate(_vector_field(fld), batch, dt, T, record_every)
    path = _planar_path_of(fld)
    traces = []
    for i in range(len(batch)):
        data = _open_loop_rows(fld, times, states[i])
        _fill_dist(data, path, dist_resolution)
        trace = Trace(data=data, meta={"kind": "integral_curve", "dt": dt, "T": T,
                                       "p0": batch[i].tolist(), "version": __version__})
        if escaped[i]:
            trace.flags.append("finite_escape")
        traces.append(trace)
    return traces[0] if single else traces


def run_projected(fld: AnySpatial, op: ProjectionOperator, p0, dt: float, T: float,
                  record_every: int = 1, dist_resolution: int = DIST_RESOLUTION):
    """Integrate the extended system ``p' = chi(p)``, ``q' = P chi(p)``, ``q(0) = P p0``.

    Returns ``(trace, projected_trace)`` (lists of pairs for a batch ``p0``).
    The projected trace records ``q``; its ``dist`` column is the planar
    distance of ``(q_x, q_y)`` to the physical path.
    """
    p0 = np.asarray(p0, dtype=float)
    single = p0.ndim == 1
    batch = np.atleast_2d(p0)
    P = op.matrix

    def rhs(z):
        chi = chi_closed_form(fld, z[:, :3])
        return np.concatenate([chi, chi @ P.T], axis=1)

    z0 = np.concatenate([batch, batch @ P.T], axis=1)
    times, states, escaped = _integrate(rhs, z0, dt, T, record_every)
    path = _planar_path_of(fld)
    out = []
    for i in range(len(batch)):
        pair = []
        for part, label in ((states[i][:, :3], "extended"), (states[i][:, 3:], "projected")):
            data = _open_loop_rows(fld, times, part)
            _fill_dist(data, path, dist_resolution)
            tr = Trace(data=data, meta={"kind": label, "dt": dt, "T": T, "axis": op.a.tolist(),
                                        "p0": batch[i].tolist(), "version": __version__})
            if escaped[i]:
                tr.flags.append("finite_escape")
            pair.append(tr)
        out.append(tuple(pair))
    return out[0] if single else out


def run_perturbed(fld: AnySpatial, disturbance: DisturbanceModel, p0, dt: float, T: float,
                  seed: int = 0, record_every: int = 1, dist_resolution: int = DIST_RESOLUTION):
    """Integrate ``p' = chi(p) + d(t)`` with ``d`` held constant over each step.

    ``meta["tail_sup_err"]`` holds the supremum of ``err_norm`` over ``[T/2, T]``.
    """
    p0 = np.asarray(p0, dtype=float)
    source = DisturbanceSource(disturbance, make_rng(seed, DISTURBANCE_STREAM), dim=len(p0))
    times, states, escaped = _integrate(_vector_field(fld), p0[None, :], dt, T, record_every,
                                        forcing=source.sample)
    data = _open_loop_rows(fld, times, states[0])
    _fill_dist(data, _planar_path_of(fld), dist_resolution)
    tail = times >= 0.5 * T - 1e-12
    trace = Trace(data=data, meta={
        "kind": "perturbed", "dt": dt, "T": T, "seed": seed, "p0": p0.tolist(),
        "disturbance": asdict(disturbance), "version": __version__,
        "tail_sup_err": float(np.max(data[tail, _COL["err_norm"]])),
    })
    if escaped[0]:
        trace.flags.append("finite_escape")
    return trace


# -- closed loop -------------------------------------------------------------

def _unicycle_rk4(x, y, th, v, om, dt, dx=0.0, dy=0.0):
    # constant inputs over the step; scalar math keeps the loop cheap
    def f(th_):
        return v * math.cos(th_) + dx, v * math.sin(th_) + dy

    k1x, k1y = f(th)
    k2x, k2y = f(th + 0.5 * dt * om)
    k4x, k4y = f(th + dt * om)
    # theta is linear in time so stages 2 and 3 coincide
    x += dt / 6.0 * (k1x + 4.0 * k2x + k4x)
    y += dt / 6.0 * (k1y + 4.0 * k2y + k4y)
    return x, y, wrap_angle(th + dt * om)


def run_closed_loop(scenario: Scenario, dist_resolution: int = DIST_RESOLUTION) -> Trace:
    """Simulate the unicycle under the scenario's controller.

    One trace row is recorded per controller update.  Noise perturbs only the
    controller's perceived position; a disturbance is added to the plant
    velocity (and to ``w_dot``).  A controller error stops the run and is
    reported in ``trace.error`` with the partial record kept.
    """
    spec = scenario.controller
    if spec.kind not in ("gvf", "traj_track"):
        raise ValueError(f"run_closed_loop needs a gvf or traj_track controller, got {spec.kind!r}")
    path = scenario.path.build()
    if not isinstance(path, ParametricPath):
        raise ValueError("closed-loop runs need a parametric path")
    dt = scenario.dt
    m = int(round(scenario.control_period / dt))
    n_steps = int(round(scenario.T / dt))
    seed = int(scenario.seed)

    noise = None
    if scenario.noise is not None and scenario.noise.power > 0:
        noise = NoiseSource(scenario.noise, make_rng(seed, NOISE_STREAM))
    dist = None
    if scenario.disturbance is not None and scenario.disturbance.r > 0:
        dist = DisturbanceSource(scenario.disturbance, make_rng(seed, DISTURBANCE_STREAM), dim=3)

    fld = SpatialField(lift_to_surfaces(path), spec.k1, spec.k2)
    if spec.kind == "gvf":
        ctrl = GvfController(fld, s=spec.s, k_theta=spec.k_theta, w=scenario.init.w,
                             velocity_source=spec.velocity_source)
    else:
        if not spec.has_traj_gains:
            raise ValueError("traj_track controller needs k1t, k2t, k3t")
        ctrl = TrajTrackController(path, spec.k1t, spec.k2t, spec.k3t)

    x, y, th = float(scenario.init.x), float(scenario.init.y), wrap_angle(float(scenario.init.theta))
    v = om = 0.0
    d = np.zeros(3)
    rows, flags, error = [], [], None
    period = m * dt
    for n in range(n_steps + 1):
        t = n * dt
        if dist is not None:
            d = dist.sample(t)
        if n % m == 0:
            offset = noise.sample(t) if noise is not None else (0.0, 0.0)
            perceived = UnicycleState(x + offset[0], y + offset[1], th)
            measured = (v * math.cos(th) + d[0], v * math.sin(th) + d[1])
            try:
                if spec.kind == "gvf":
                    w_used = ctrl.w
                    out = gvf_control(ctrl, perceived, measured)
                    gx, gy = float(path.f1(w_used)), float(path.f2(w_used))
                    beta = out.beta
                else:
                    w_used = t
                    xd, yd, theta_d, v_d, omega_d = desired_state(path, t)
                    out = traj_track_law(ctrl, perceived, xd, yd, theta_d, v_d, omega_d)
                    gx, gy, beta = xd, yd, math.nan
            except (SingularHeadingError, StalledTrajectoryError) as exc:
                error = f"t={t:.6g}: {exc}"
                break
            e1, e2 = x - gx, y - gy
            rows.append((t, x, y, th, w_used, out.v_u, out.omega_u, e1, e2,
                         math.hypot(e1, e2), beta, math.nan))
            if n == 0 and spec.kind == "gvf" and abs(out.beta) >= math.pi - 1e-12:
                flags.append("excluded_initial_condition")
            if spec.kind == "gvf":
                ctrl.advance(out.w_dot + d[2], period)
            v, om = out.v_u, out.omega_u
        if n == n_steps:
            break
        x, y, th = _unicycle_rk4(x, y, th, v, om, dt, d[0], d[1])

    data = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
    _fill_dist(data, path, dist_resolution)
    meta = {
        "kind": spec.kind,
        "scenario": scenario.to_dict(),
        "scenario_hash": scenario.digest(),
        "seed": seed,
        "version": __version__,
        "noise_semantics": NOISE_SEMANTICS,
        "rng": "PCG64 via SeedSequence(seed, spawn_key=(stream,)); noise=0, disturbance=1",
    }
    return Trace(data=data, meta=meta, flags=flags, error=error)


def run_scenario(scenario: Scenario, dist_resolution: int = DIST_RESOLUTION) -> Trace:
    """Dispatch on controller kind: closed loop or open-loop integral curve."""
    if scenario.controller.kind == "integral_curve":
        path = scenario.path.build()
        if isinstance(path, ImplicitPath2D):
            fld = PlanarField(path, k=scenario.controller.k1)
            p0 = [scenario.init.x, scenario.init.y]
        else:
            fld = scenario.spatial_field()
            p0 = [scenario.init.x, scenario.init.y, scenario.init.w]
        trace = run_integral_curve(fld, p0, scenario.dt, scenario.T,
                                   record_every=int(round(scenario.control_period / scenario.dt)),
                                   dist_resolution=dist_resolution)
        trace.meta.update({"scenario": scenario.to_dict(), "scenario_hash": scenario.digest(),
                           "seed": int(scenario.seed)})
        return trace
    return run_closed_loop(scenario, dist_resolution=dist_resolution)

