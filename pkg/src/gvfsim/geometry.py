"""Planar desired paths, their surface-function lift to R^3, and a path catalog.

A :class:`ParametricPath` carries ``x = f1(w)``, ``y = f2(w)`` together with
analytic first and second derivatives.  All callables accept scalars or numpy
arrays and broadcast elementwise.

An :class:`ImplicitPath2D` is the zero set of a surface function ``phi(x, y)``.
Catalog entries that also admit a parametrization keep it in ``parametric`` so
that Euclidean distances can be computed.

:func:`lift_to_surfaces` stretches a parametric path along the virtual
coordinate ``w``, giving the two surfaces ``x - f1(w) = 0`` and
``y - f2(w) = 0`` whose intersection is a non-self-intersecting curve in R^3.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ParametricPath",
    "ImplicitPath2D",
    "SurfacePair",
    "UnknownPathError",
    "CATALOG",
    "builtin_path",
    "lift_to_surfaces",
    "distance_to_path",
    "distance_to_lifted_path",
    "rescale_to_unit_box",
]

ScalarMap = Callable[[np.ndarray], np.ndarray]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class UnknownPathError(ValueError):
    """Raised by :func:`builtin_path` for a name outside the catalog."""


@dataclass(frozen=True)
class ParametricPath:
    """A planar path ``(f1(w), f2(w))`` with analytic derivatives."""

    f1: ScalarMap
    f2: ScalarMap
    df1: ScalarMap
    df2: ScalarMap
    ddf1: ScalarMap
    ddf2: ScalarMap
    param_hint: tuple[float, float] = (0.0, 2.0 * np.pi)
    name: str = "custom"

    def point(self, w):
        """Path point(s), shape ``(..., 2)``."""
        w = np.asarray(w, dtype=float)
        return np.stack(np.broadcast_arrays(self.f1(w), self.f2(w)), axis=-1)

    def velocity(self, w):
        w = np.asarray(w, dtype=float)
        return np.stack(np.broadcast_arrays(self.df1(w), self.df2(w)), axis=-1)

    def acceleration(self, w):
        w = np.asarray(w, dtype=float)
        return np.stack(np.broadcast_arrays(self.ddf1(w), self.ddf2(w)), axis=-1)

    def affine(self, scale: float, offset=(0.0, 0.0)) -> "ParametricPath":
        """Return the path ``scale * (f1, f2) + offset`` (same parameter)."""
        a = float(scale)
        ox, oy = (float(v) for v in offset)
        return ParametricPath(
            f1=lambda w: a * self.f1(w) + ox,
            f2=lambda w: a * self.f2(w) + oy,
            df1=lambda w: a * self.df1(w),
            df2=lambda w: a * self.df2(w),
            ddf1=lambda w: a * self.ddf1(w),
            ddf2=lambda w: a * self.ddf2(w),
            param_hint=self.param_hint,
            name=self.name,
        )


@dataclass(frozen=True)
class ImplicitPath2D:
    """Zero set of ``phi(x, y)``; ``grad_phi`` returns shape ``(..., 2)``."""

    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "custom"
    parametric: Optional[ParametricPath] = field(default=None, compare=False)


@dataclass(frozen=True)
class SurfacePair:
    """The surfaces ``phi1 = x - f1(w)`` and ``phi2 = y - f2(w)`` on R^3.

    Points are arrays of shape ``(..., 3)`` ordered ``(x, y, w)``.
    """

    source: ParametricPath

    def phi1(self, p):
        p = np.asarray(p, dtype=float)
        return p[..., 0] - self.source.f1(p[..., 2])

    def phi2(self, p):
        p = np.asarray(p, dtype=float)
        return p[..., 1] - self.source.f2(p[..., 2])

    def grad_phi1(self, p):
        p = np.asarray(p, dtype=float)
        w = p[..., 2]
        one, zero = np.ones_like(w), np.zeros_like(w)
        return np.stack([one, zero, -self.source.df1(w) * one], axis=-1)

    def grad_phi2(self, p):
        p = np.asarray(p, dtype=float)
        w = p[..., 2]
        one, zero = np.ones_like(w), np.zeros_like(w)
        return np.stack([zero, one, -self.source.df2(w) * one], axis=-1)

    def errors(self, p):
        """Path-following error ``(phi1, phi2)``, shape ``(..., 2)``."""
        return np.stack([self.phi1(p), self.phi2(p)], axis=-1)


def lift_to_surfaces(path: ParametricPath) -> SurfacePair:
    """Stretch a planar parametric path along the virtual ``w`` axis."""
    return SurfacePair(source=path)


# -- catalog -----------------------------------------------------------------

def _circle(radius=1.0, cx=0.0, cy=0.0):
    r = float(radius)
    return ParametricPath(
        f1=lambda w: r * np.cos(w) + cx,
        f2=lambda w: r * np.sin(w) + cy,
        df1=lambda w: -r * np.sin(w),
        df2=lambda w: r * np.cos(w),
        ddf1=lambda w: -r * np.cos(w),
        ddf2=lambda w: -r * np.sin(w),
        param_hint=(0.0, 2.0 * np.pi),
        name="circle",
    )


def _line(angle=0.0, x0=0.0, y0=0.0, half_length=10.0):
    c, s = np.cos(angle), np.sin(angle)
    return ParametricPath(
        f1=lambda w: x0 + c * w,
        f2=lambda w: y0 + s * w,
        df1=lambda w: c * np.ones_like(w),
        df2=lambda w: s * np.ones_like(w),
        ddf1=lambda w: np.zeros_like(w),
        ddf2=lambda w: np.zeros_like(w),
        param_hint=(-float(half_length), float(half_length)),
        name="line",
    )


def _lemniscate():
    def den(w):
        return 1.0 + np.sin(w) ** 2

    return ParametricPath(
        f1=lambda w: np.cos(w) / den(w),
        f2=lambda w: np.sin(w) * np.cos(w) / den(w),
        df1=lambda w: (np.sin(w) ** 2 - 3.0) * np.sin(w) / den(w) ** 2,
        df2=lambda w: (1.0 - 3.0 * np.sin(w) ** 2) / den(w) ** 2,
        ddf1=lambda w: (-np.sin(w) ** 4 + 12.0 * np.sin(w) ** 2 - 3.0) * np.cos(w) / den(w) ** 3,
        ddf2=lambda w: (28.0 * np.sin(2 * w) + 6.0 * np.sin(4 * w)) / (np.cos(2 * w) - 3.0) ** 3,
        param_hint=(0.0, 2.0 * np.pi),
        name="lemniscate",
    )


def _trefoil(a=0.02, b=0.03, amp=80.0, base=160.0, cx=600.0, cy=350.0):
    # radius g(w) = amp*cos(b w) + base, rotated by angle a*w
    def g(w):
        return amp * np.cos(b * w) + base

    def dg(w):
        return -amp * b * np.sin(b * w)

    def ddg(w):
        return -amp * b * b * np.cos(b * w)

    def ddx(w):
        ca, sa = np.cos(a * w), np.sin(a * w)
        return -a * a * ca * g(w) - 2 * a * sa * dg(w) + ca * ddg(w)

    def ddy(w):
        ca, sa = np.cos(a * w), np.sin(a * w)
        return -a * a * sa * g(w) + 2 * a * ca * dg(w) + sa * ddg(w)

    # closed when a*w and b*w are both multiples of 2*pi
    period = _common_period(a, b)
    return ParametricPath(
        f1=lambda w: np.cos(a * w) * g(w) + cx,
        f2=lambda w: np.sin(a * w) * g(w) + cy,
        df1=lambda w: -a * np.sin(a * w) * g(w) + np.cos(a * w) * dg(w),
        df2=lambda w: a * np.cos(a * w) * g(w) + np.sin(a * w) * dg(w),
        ddf1=ddx,
        ddf2=ddy,
        param_hint=(0.0, period),
        name="trefoil_projection",
    )


def _lissajous(ax=250.0, ay=250.0, fx=0.06, fy=0.08, px=0.1, py=0.7, cx=600.0, cy=350.0):
    return ParametricPath(
        f1=lambda w: ax * np.cos(fx * w + px) + cx,
        f2=lambda w: ay * np.cos(fy * w + py) + cy,
        df1=lambda w: -ax * fx * np.sin(fx * w + px),
        df2=lambda w: -ay * fy * np.sin(fy * w + py),
        ddf1=lambda w: -ax * fx * fx * np.cos(fx * w + px),
        ddf2=lambda w: -ay * fy * fy * np.cos(fy * w + py),
        param_hint=(0.0, _common_period(fx, fy)),
        name="lissajous",
    )


def _common_period(f_a, f_b, max_den=1000):
    """Smallest w > 0 with both ``f_a*w`` and ``f_b*w`` multiples of 2*pi."""
    from fractions import Fraction

    ratio = Fraction(f_a / f_b).limit_denominator(max_den)
    # f_a*w = 2*pi*m, f_b*w = 2*pi*n with m/n = ratio in lowest terms
    return 2.0 * np.pi * ratio.numerator / f_a


def _figure8_implicit():
    # twin parametrization: y = sin w, x = sin 2w satisfies x^2 = 4y^2(1 - y^2)
    twin = ParametricPath(
        f1=lambda w: np.sin(2 * w),
        f2=lambda w: np.sin(w),
        df1=lambda w: 2 * np.cos(2 * w),
        df2=lambda w: np.cos(w),
        ddf1=lambda w: -4 * np.sin(2 * w),
        ddf2=lambda w: -np.sin(w),
        param_hint=(0.0, 2.0 * np.pi),
        name="figure8_parametric",
    )
    return ImplicitPath2D(
        phi=lambda x, y: x ** 2 - 4 * y ** 2 * (1 - y ** 2),
        grad_phi=lambda x, y: np.stack(np.broadcast_arrays(2 * x, -8 * y + 16 * y ** 3), axis=-1),
        name="figure8_implicit",
        parametric=twin,
    )


def _circle_implicit(radius=1.0):
    r = float(radius)
    return ImplicitPath2D(
        phi=lambda x, y: x ** 2 + y ** 2 - r * r,
        grad_phi=lambda x, y: np.stack(np.broadcast_arrays(2 * x, 2 * y), axis=-1),
        name="circle_implicit",
        parametric=_circle(r),
    )


CATALOG = {
    "circle": _circle,
    "line": _line,
    "figure8_implicit": _figure8_implicit,
    "lemniscate": _lemniscate,
    "trefoil_projection": _trefoil,
    "lissajous": _lissajous,
    "circle_implicit": _circle_implicit,
}


def builtin_path(name: str, **params):
    """Build a catalog path by name; keyword ``params`` override defaults.

    Raises
    ------
    UnknownPathError
        If ``name`` is not in the catalog.  The message lists valid names.
    """
    try:
        factory = CATALOG[name]
    except KeyError:
        raise UnknownPathError(
            f"unknown path {name!r}; valid names: {', '.join(sorted(CATALOG))}"
        ) from None
    return factory(**params)


def rescale_to_unit_box(path: ParametricPath, samples: int = 4001) -> ParametricPath:
    """Affinely map ``path`` so its sampled bounding box fits in ``[-1, 1]^2``."""
    w = np.linspace(*path.param_hint, samples)
    pts = path.point(w)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * float(np.max(hi - lo))
    if half == 0.0:
        return path
    return path.affine(1.0 / half, offset=-center / half)


# -- distances ---------------------------------------------------------------

def _refine_min(sqdist, lo, hi, iters=60):
    """Vectorized golden-section search of ``sqdist(w)`` on ``[lo, hi]``."""
    a, b = lo.copy(), hi.copy()
    for _ in range(iters):
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        left = sqdist(c) < sqdist(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return sqdist(0.5 * (a + b))


def _sampled_min(sqdist_grid, sqdist_at, grid, candidates: int = 4):
    """Dense-sample, then golden-refine around the lowest sampled local minima.

    Refining several candidates matters near self-intersections, where the
    best sample can sit on the wrong branch.
    """
    vals = sqdist_grid(grid)  # (N, R)
    n, r = vals.shape
    grid2 = np.broadcast_to(grid, (n, r))
    padded = np.pad(vals, ((0, 0), (1, 1)), constant_values=np.inf)
    is_min = (vals <= padded[:, :-2]) & (vals <= padded[:, 2:])
    ranked = np.where(is_min, vals, np.inf)
    k = min(candidates, r)
    picks = np.argpartition(ranked, k - 1, axis=1)[:, :k]
    rows = np.arange(n)[:, None]
    best = vals.min(axis=1)
    lo = grid2[rows, np.maximum(picks - 1, 0)].ravel()
    hi = grid2[rows, np.minimum(picks + 1, r - 1)].ravel()
    refined = _refine_min(lambda w: sqdist_at(w.reshape(n, k)).ravel(), lo, hi).reshape(n, k)
    # candidates whose sample was not a local minimum refine to something >= a real one
    return np.sqrt(np.maximum(np.minimum(best, refined.min(axis=1)), 0.0))


def distance_to_path(q, path, resolution: int = 2000, chunk: int = 4096):
    """Euclidean distance from planar point(s) ``q`` to a path.

    The path is sampled at ``resolution`` parameter values over its
    ``param_hint`` and the best sample is refined by golden-section search.
    ``path`` may be an :class:`ImplicitPath2D` carrying a parametric twin.
    Returns a float for a single point, else an array of shape ``(N,)``.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if isinstance(path, ImplicitPath2D):
        if path.parametric is None:
            raise ValueError(f"{path.name} has no parametric form for distances")
        path = path.parametric
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q2 = np.atleast_2d(q)
    grid = np.linspace(*path.param_hint, int(resolution))
    gx, gy = path.f1(grid), path.f2(grid)
    out = np.empty(len(q2))
    for start in range(0, len(q2), chunk):
        block = q2[start:start + chunk]
        qx, qy = block[:, :1], block[:, 1:2]

        def sq_grid(_):
            return (qx - gx) ** 2 + (qy - gy) ** 2

        def sq_at(w, qx=qx, qy=qy):
            return (qx - path.f1(w)) ** 2 + (qy - path.f2(w)) ** 2

        out[start:start + chunk] = _sampled_min(sq_grid, sq_at, grid)
    return float(out[0]) if single else out


def distance_to_lifted_path(p, path: ParametricPath, resolution: int = 2000, chunk: int = 2048):
    """Distance from point(s) ``p = (x, y, w)`` to the lifted curve ``(f1(s), f2(s), s)``.

    The curve point at ``s = w`` bounds the distance by the error norm
    ``e = |(phi1, phi2)|``, so the minimizer lies in ``[w - e, w + e]``; only
    that window is searched.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p2 = np.atleast_2d(p)
    out = np.empty(len(p2))
    unit = np.linspace(-1.0, 1.0, int(resolution))
    for start in range(0, len(p2), chunk):
        block = p2[start:start + chunk]
        x, y, w = block[:, 0], block[:, 1], block[:, 2]
        e = np.hypot(x - path.f1(w), y - path.f2(w))
        grid = w[:, None] + e[:, None] * unit[None, :]

        def sq(s, x=x[:, None], y=y[:, None], w=w[:, None]):
            return (x - path.f1(s)) ** 2 + (y - path.f2(s)) ** 2 + (w - s) ** 2

        out[start:start + chunk] = _sampled_min(sq, sq, grid)
    return float(out[0]) if single else out
