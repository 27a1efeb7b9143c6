"""Verification helpers: singular points of planar fields, limit
classification, Lyapunov series, smoothness metrics and finite-difference
oracles.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .control import ContractError
from .field import PlanarField, eval_planar
from .sim import Trace

__all__ = [
    "LimitClass",
    "LyapunovSeries",
    "SmoothnessMetrics",
    "ClaimResult",
    "find_singular_points_2d",
    "classify_limit",
    "lyapunov_series",
    "smoothness_metrics",
    "finite_diff_check",
    "numeric_jacobian",
    "observed_order",
    "report_json",
]

NEWTON_MAX_ITER = 50
NEWTON_RESIDUAL = 1e-10
TAIL_FRACTION = 0.25


# -- singular points -----------------------------------------------------------

def numeric_jacobian(f: Callable, x, step: Optional[float] = None) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``x`` (shape ``(m, n)``)."""
    x = np.asarray(x, dtype=float)
    h = step if step is not None else 1e-6 * (1.0 + np.linalg.norm(x))
    cols = []
    for e in np.eye(x.size):
        cols.append((np.asarray(f(x + h * e), dtype=float) - np.asarray(f(x - h * e), dtype=float)) / (2 * h))
    return np.column_stack(cols) if np.ndim(cols[0]) else np.array(cols)


def _newton(f, x0):
    x = np.array(x0, dtype=float)
    r = np.linalg.norm(f(x))
    for _ in range(NEWTON_MAX_ITER):
        if r < NEWTON_RESIDUAL:
            return x
        try:
            dx = np.linalg.solve(numeric_jacobian(f, x), -f(x))
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while True:
            cand = x + lam * dx
            rc = np.linalg.norm(f(cand))
            if rc < r or lam < 1e-6:
                break
            lam *= 0.5
        x, r = cand, rc
        if not np.all(np.isfinite(x)):
            return None
    return x if r < NEWTON_RESIDUAL else None


def _local_minima(values: np.ndarray):
    """Indices of grid nodes no larger than any of their 8 neighbours."""
    padded = np.pad(values, 1, constant_values=np.inf)
    n, m = values.shape
    is_min = np.ones_like(values, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_min &= values <= padded[1 + di:1 + di + n, 1 + dj:1 + dj + m]
    return np.argwhere(is_min)


def find_singular_points_2d(field: PlanarField, box=((-2.0, 2.0), (-2.0, 2.0)),
                            grid: int = 64, tol: float = 1e-6) -> list:
    """Zeros of the planar field inside ``box``.

    Newton's method (numeric Jacobian, step halving on residual increase) is
    seeded from grid nodes where ``|chi|`` is locally minimal.  Seeds that do
    not reach a residual below 1e-10 in 50 iterations are dropped; roots
    closer than ``tol`` are merged.  Returns points sorted by ``(x, y)``.
    """
    if grid < 8:
        raise ValueError("grid must have at least 8 points per axis")
    if not tol > 0:
        raise ValueError("tol must be positive")
    (x0, x1), (y0, y1) = box
    xs, ys = np.linspace(x0, x1, grid), np.linspace(y0, y1, grid)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    norms = np.linalg.norm(eval_planar(field, np.stack([X, Y], axis=-1)), axis=-1)

    def f(q):
        return eval_planar(field, q)

    roots: list = []
    slack = 1e-9 * max(1.0, x1 - x0, y1 - y0)
    for i, j in _local_minima(norms):
        root = _newton(f, (xs[i], ys[j]))
        if root is None:
            continue
        if not (x0 - slack <= root[0] <= x1 + slack and y0 - slack <= root[1] <= y1 + slack):
            continue
        if any(np.linalg.norm(root - r) < tol for r in roots):
            continue
        roots.append(root)
    roots.sort(key=lambda r: (round(r[0], 9), round(r[1], 9)))
    return [np.where(np.abs(r) < 1e-15, 0.0, r) for r in roots]


# -- classification and metrics -----------------------------------------------

class LimitClass(str, Enum):
    PATH = "converged_to_path"
    SINGULAR = "converged_to_singular"
    UNDECIDED = "undecided"


def classify_limit(trace: Trace, singular_points: Sequence = (), eps: float = 1e-2) -> LimitClass:
    """Classify where a trajectory ends up over the final quarter of the run.

    A tail that stays within ``eps`` of one listed singular point wins over the
    path test, because singular points can lie on the path (crossings).
    """
    if len(trace) == 0:
        raise ContractError("trace is empty")
    tail = trace.tail_mask(TAIL_FRACTION)
    xy = np.column_stack([trace["x"][tail], trace["y"][tail]])
    for sp in singular_points:
        if np.max(np.linalg.norm(xy - np.asarray(sp, dtype=float)[:2], axis=1)) < eps:
            return LimitClass.SINGULAR
    err = trace["err_norm"][tail]
    if np.all(np.isfinite(err)) and np.max(err) < eps:
        return LimitClass.PATH
    return LimitClass.UNDECIDED


@dataclass
class LyapunovSeries:
    t: np.ndarray
    V: np.ndarray
    max_increment: float
    max_abs_beta_increase: float
    excluded: bool


def lyapunov_series(trace: Trace) -> LyapunovSeries:
    """``V = 1 - cos(beta)`` along a closed-loop trace.

    ``max_increment`` is the largest positive step-to-step change of ``V``
    (0 if ``V`` never increases); ``excluded`` marks ``|beta(0)| = pi`` starts.
    """
    beta = trace["beta"]
    if len(beta) == 0 or not np.all(np.isfinite(beta)):
        raise ContractError("trace has no beta column (open-loop or trajectory-tracking run)")
    V = 1.0 - np.cos(beta)
    dV = np.diff(V)
    dabs = np.diff(np.abs(beta))
    excluded = "excluded_initial_condition" in trace.flags or abs(beta[0]) >= math.pi - 1e-12
    return LyapunovSeries(
        t=trace["t"].copy(), V=V,
        max_increment=float(max(0.0, dV.max())) if dV.size else 0.0,
        max_abs_beta_increase=float(max(0.0, dabs.max())) if dabs.size else 0.0,
        excluded=bool(excluded),
    )


@dataclass(frozen=True)
class SmoothnessMetrics:
    heading_total_variation: float
    reversal_count: int
    err_rms: float


def smoothness_metrics(trace: Trace, tail_fraction: float = TAIL_FRACTION) -> SmoothnessMetrics:
    """Heading total variation, count of backward speed commands, tail RMS error."""
    if len(trace) == 0:
        raise ContractError("trace is empty")
    theta = trace["theta"]
    # nearest-branch unwrapping: each step taken as its wrapped difference
    steps = np.remainder(np.diff(theta) + np.pi, 2 * np.pi) - np.pi
    v = trace["v_u"]
    err = trace["err_norm"][trace.tail_mask(tail_fraction)]
    return SmoothnessMetrics(
        heading_total_variation=float(np.sum(np.abs(steps))),
        reversal_count=int(np.sum(v[np.isfinite(v)] < 0)),
        err_rms=float(np.sqrt(np.mean(err ** 2))),
    )


# -- derivative and integrator oracles -----------------------------------------

def finite_diff_check(f: Callable, jac: Callable, point, step: float = 1e-6) -> float:
    """Max componentwise ``|analytic - numeric| / max(1, |analytic|)``.

    ``f`` maps a vector to a scalar or vector; ``jac`` returns its analytic
    derivative at the same point (gradient or Jacobian).  The numeric side uses
    central differences with an absolute ``step``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    point = np.asarray(point, dtype=float)
    analytic = np.asarray(jac(point), dtype=float)
    numeric = numeric_jacobian(f, point, step).reshape(analytic.shape)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


def observed_order(final_state: Callable[[float], np.ndarray], dt: float) -> float:
    """Observed convergence order from runs at ``dt``, ``dt/2`` and ``dt/4``.

    ``final_state(h)`` returns the end state of a run with step ``h``.
    """
    a, b, c = (np.asarray(final_state(dt / m), dtype=float) for m in (1, 2, 4))
    return float(math.log2(np.linalg.norm(a - b) / np.linalg.norm(b - c)))


# -- reports -------------------------------------------------------------------

@dataclass
class ClaimResult:
    claim_id: str
    passed: bool
    measured: object
    tolerance: object
    detail: str = ""
    extra: dict = field(default_factory=dict)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def report_json(results: Sequence[ClaimResult], suite: str = "") -> str:
    claims = []
    for r in results:
        d = asdict(r)
        d["passed"] = bool(d["passed"])
        claims.append({k: _jsonable(v) for k, v in d.items()})
    doc = {"suite": suite, "passed": all(c["passed"] for c in claims), "claims": claims}
    return json.dumps(doc, indent=2, default=_jsonable) + "\n"
