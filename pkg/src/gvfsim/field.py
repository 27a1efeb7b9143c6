"""Guiding vector fields: the planar field of an implicit path and the
singularity-free field of a lifted parametric path.

Planar field::

    chi(q) = E grad(phi) - k psi(phi) grad(phi),     E = [[0, -1], [1, 0]]

Spatial field on ``p = (x, y, w)``::

    chi(p) = grad(phi1) x grad(phi2) - k1 phi1 grad(phi1) - k2 phi2 grad(phi2)

The cross product (propagation term) always has third component 1 for a
lifted path and is orthogonal to the converging term, so ``|chi| >= 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .geometry import ImplicitPath2D, SurfacePair

__all__ = [
    "EPS_NORM",
    "E",
    "SingularHeadingError",
    "PlanarField",
    "SpatialField",
    "ProjectionOperator",
    "eval_planar",
    "eval_spatial",
    "chi_closed_form",
    "spatial_jacobian",
    "min_field_norm",
    "project",
    "jacobian_chi_p",
    "planar_direction",
    "chi_and_jacobian",
    "tanh_psi",
]

EPS_NORM = 1e-9

E = np.array([[0.0, -1.0], [1.0, 0.0]])


class SingularHeadingError(ArithmeticError):
    """The planar part of the field vanishes, so no heading is defined."""


def _identity(z):
    return z


def tanh_psi(scale: float = 1.0) -> Callable:
    """``psi(z) = scale * tanh(z / scale)``: strictly increasing, saturating."""
    def psi(z):
        return scale * np.tanh(z / scale)
    return psi


@dataclass(frozen=True)
class PlanarField:
    path: ImplicitPath2D
    k: float = 1.0
    psi: Callable = _identity

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("gain k must be positive")


@dataclass(frozen=True)
class SpatialField:
    surfaces: SurfacePair
    k1: float = 1.0
    k2: float = 1.0

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValueError("gains k1, k2 must be positive")

    @property
    def path(self):
        return self.surfaces.source

    def scaled(self, factor: float) -> "ScaledField":
        return ScaledField(self, float(factor))


@dataclass(frozen=True)
class ScaledField:
    """A spatial field multiplied by a positive constant (normalization checks)."""

    base: SpatialField
    factor: float

    @property
    def path(self):
        return self.base.path

    @property
    def surfaces(self):
        return self.base.surfaces


AnySpatial = Union[SpatialField, ScaledField]


class ProjectionOperator:
    """Orthogonal projection onto the plane normal to ``a``: ``I - a_hat a_hat^T``."""

    def __init__(self, a=(0.0, 0.0, 1.0)):
        a = np.asarray(a, dtype=float)
        n = np.linalg.norm(a)
        if a.shape != (3,) or n == 0.0:
            raise ValueError("projection axis must be a nonzero 3-vector")
        self.a = a
        a_hat = a / n
        self.matrix = np.eye(3) - np.outer(a_hat, a_hat)

    def __repr__(self):
        return f"ProjectionOperator(a={self.a.tolist()})"


def eval_planar(field: PlanarField, q):
    """Planar field at ``q`` (shape ``(..., 2)``)."""
    q = np.asarray(q, dtype=float)
    x, y = q[..., 0], q[..., 1]
    g = field.path.grad_phi(x, y)
    phi = field.path.phi(x, y)
    rot = np.stack([-g[..., 1], g[..., 0]], axis=-1)
    return rot - field.k * np.asarray(field.psi(phi))[..., None] * g


def eval_spatial(field: AnySpatial, p):
    """Return ``(chi, tau, iota)`` at ``p`` (shape ``(..., 3)``).

    ``tau`` is the cross product of the surface gradients, ``iota`` the
    gain-weighted signed-gradient sum.
    """
    if isinstance(field, ScaledField):
        chi, tau, iota = eval_spatial(field.base, p)
        return field.factor * chi, field.factor * tau, field.factor * iota
    s = field.surfaces
    g1, g2 = s.grad_phi1(p), s.grad_phi2(p)
    phi1, phi2 = s.phi1(p), s.phi2(p)
    tau = np.cross(g1, g2)
    iota = -field.k1 * phi1[..., None] * g1 - field.k2 * phi2[..., None] * g2
    return tau + iota, tau, iota


def chi_closed_form(field: AnySpatial, p):
    """Expanded form ``(f1' - k1 phi1, f2' - k2 phi2, 1 + k1 phi1 f1' + k2 phi2 f2')``."""
    if isinstance(field, ScaledField):
        return field.factor * chi_closed_form(field.base, p)
    p = np.asarray(p, dtype=float)
    path = field.path
    w = p[..., 2]
    d1, d2 = path.df1(w), path.df2(w)
    e1 = p[..., 0] - path.f1(w)
    e2 = p[..., 1] - path.f2(w)
    k1, k2 = field.k1, field.k2
    return np.stack(np.broadcast_arrays(
        d1 - k1 * e1, d2 - k2 * e2, 1.0 + k1 * e1 * d1 + k2 * e2 * d2), axis=-1)


def spatial_jacobian(field: AnySpatial, p):
    """Analytic Jacobian of ``chi`` w.r.t. ``(x, y, w)``, shape ``(..., 3, 3)``."""
    if isinstance(field, ScaledField):
        return field.factor * spatial_jacobian(field.base, p)
    p = np.asarray(p, dtype=float)
    path = field.path
    w = p[..., 2]
    d1, d2 = path.df1(w) + 0.0 * w, path.df2(w) + 0.0 * w
    dd1, dd2 = path.ddf1(w) + 0.0 * w, path.ddf2(w) + 0.0 * w
    e1 = p[..., 0] - path.f1(w)
    e2 = p[..., 1] - path.f2(w)
    k1, k2 = field.k1, field.k2
    zero = np.zeros_like(w)
    rows = [
        [-k1 + zero, zero, dd1 + k1 * d1],
        [zero, -k2 + zero, dd2 + k2 * d2],
        [k1 * d1, k2 * d2, k1 * (e1 * dd1 - d1 * d1) + k2 * (e2 * dd2 - d2 * d2)],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def chi_and_jacobian(field: AnySpatial, p):
    """``chi`` (3,) and its Jacobian (3, 3) at a single point, one path evaluation."""
    factor = 1.0
    if isinstance(field, ScaledField):
        factor, field = field.factor, field.base
    path = field.path
    x, y, w = (float(v) for v in p)
    e1 = x - float(path.f1(w))
    e2 = y - float(path.f2(w))
    d1, d2 = float(path.df1(w)), float(path.df2(w))
    dd1, dd2 = float(path.ddf1(w)), float(path.ddf2(w))
    k1, k2 = field.k1, field.k2
    chi = np.array([d1 - k1 * e1, d2 - k2 * e2, 1.0 + k1 * e1 * d1 + k2 * e2 * d2])
    jac = np.array([
        [-k1, 0.0, dd1 + k1 * d1],
        [0.0, -k2, dd2 + k2 * d2],
        [k1 * d1, k2 * d2, k1 * (e1 * dd1 - d1 * d1) + k2 * (e2 * dd2 - d2 * d2)],
    ])
    return factor * chi, factor * jac


def min_field_norm(field: AnySpatial, box, grid=21) -> float:
    """Minimum of ``|chi|`` over a regular grid on an axis-aligned box.

    ``box`` is ``((xmin, xmax), (ymin, ymax), (wmin, wmax))``; ``grid`` is a
    point count per axis (int or 3-tuple), each at least 2.
    """
    counts = (grid,) * 3 if np.isscalar(grid) else tuple(grid)
    if min(counts) < 2:
        raise ValueError("grid must have at least 2 points per axis")
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(box, counts)]
    X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
    best = np.inf
    for w in axes[2]:
        pts = np.stack([X, Y, np.full_like(X, w)], axis=-1)
        chi = eval_spatial(field, pts)[0]
        best = min(best, float(np.sqrt(np.min(np.sum(chi * chi, axis=-1)))))
    return best


def project(op: ProjectionOperator, p):
    """Apply the projection matrix to point(s) ``p`` (shape ``(..., 3)``)."""
    return np.asarray(p, dtype=float) @ op.matrix.T


def _check_planar(chi):
    if chi[0] * chi[0] + chi[1] * chi[1] <= EPS_NORM * EPS_NORM:
        raise SingularHeadingError(
            "planar field component vanishes (chi1^2 + chi2^2 ~ 0); heading undefined"
        )


def jacobian_chi_p(field: AnySpatial, p, method: str = "analytic", step=None):
    """Jacobian (2x3) of ``chi_p = (chi_hat_1, chi_hat_2)`` w.r.t. ``(x, y, w)``.

    ``method="fd"`` uses central differences with step ``1e-6 * (1 + |p|)``.

    Raises
    ------
    SingularHeadingError
        If ``chi1^2 + chi2^2`` is below ``EPS_NORM**2`` at ``p``.
    """
    p = np.asarray(p, dtype=float)
    chi, jac = chi_and_jacobian(field, p)
    _check_planar(chi)
    if method == "fd":
        h = step if step is not None else 1e-6 * (1.0 + np.linalg.norm(p))
        cols = []
        for e in np.eye(3):
            hi = chi_closed_form(field, p + h * e)
            lo = chi_closed_form(field, p - h * e)
            cols.append((hi / np.linalg.norm(hi) - lo / np.linalg.norm(lo))[:2] / (2 * h))
        return np.column_stack(cols)
    if method != "analytic":
        raise ValueError(f"unknown method {method!r}")
    return _normalized_jacobian(chi, jac)[:2]


def _normalized_jacobian(chi, jac):
    # d(chi/|chi|) = (I - u u^T) J / |chi|
    n = math.sqrt(chi @ chi)
    u = chi / n
    return (jac - np.outer(u, u @ jac)) / n


def planar_direction(field: AnySpatial, p, with_jacobian: bool = False):
    """Return ``(chi_hat, chi_p, chi_p_hat)`` at a single generalized position.

    With ``with_jacobian`` the 2x3 Jacobian of ``chi_p`` is appended.
    """
    chi, jac = chi_and_jacobian(field, p)
    _check_planar(chi)
    chi_hat = chi / math.sqrt(chi @ chi)
    chi_p = chi_hat[:2]
    out = (chi_hat, chi_p, chi_p / math.hypot(chi_p[0], chi_p[1]))
    if with_jacobian:
        out += (_normalized_jacobian(chi, jac)[:2],)
    return out
