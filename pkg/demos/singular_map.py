"""
Where a planar field breaks down
================================

The figure-8 ``x^2 - 4 y^2 (1 - y^2) = 0`` crosses itself at the origin.
Any planar guiding field built from this level set vanishes there, and
here it also vanishes at ``(0, +-1/sqrt(2))``.  Lifting the path into
``(x, y, w)`` removes every zero.
"""
import numpy as np

from _common import plt, save
from gvfsim.analysis import find_singular_points_2d
from gvfsim.field import PlanarField, SpatialField, eval_planar, min_field_norm
from gvfsim.geometry import builtin_path, lift_to_surfaces, rescale_to_unit_box

# %% planar field and its zeros
path = builtin_path("figure8_implicit")
fld = PlanarField(path, k=1.0)
roots = find_singular_points_2d(fld, ((-2, 2), (-2, 2)), grid=64)
print("planar zeros:")
for r in roots:
    print(f"  ({r[0]:+.8f}, {r[1]:+.8f})")

# %% the lifted twin has none: |chi| stays at or above 1 on a grid
lifted = SpatialField(lift_to_surfaces(rescale_to_unit_box(path.parametric)), 1.0, 1.0)
print(f"lifted min |chi| on [-3,3]^3: {min_field_norm(lifted, ((-3, 3),) * 3, 41):.6f}")

# %% quiver of the unit planar field
if plt is not None:
    g = np.linspace(-1.5, 1.5, 25)
    X, Y = np.meshgrid(g, g, indexing="ij")
    chi = eval_planar(fld, np.stack([X, Y], axis=-1))
    n = np.linalg.norm(chi, axis=-1)
    n[n == 0] = 1.0
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.quiver(X, Y, chi[..., 0] / n, chi[..., 1] / n, angles="xy", width=0.003)
    xx, yy = np.meshgrid(np.linspace(-1.5, 1.5, 400), np.linspace(-1.5, 1.5, 400))
    ax.contour(xx, yy, path.phi(xx, yy), levels=[0], colors="tab:blue")
    ax.plot(*np.array(roots).T, "o", color="tab:red", label="zeros of the field")
    ax.set_aspect("equal")
    ax.legend(loc="lower right")
    save(fig, "singular_map.png")
