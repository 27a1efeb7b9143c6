"""
Following a self-intersecting curve
===================================

Integral curves of the lifted lemniscate field, started from a spread of
points, all settle onto the path and keep moving along it.  The crossing
point is passed straight through.
"""
import numpy as np

from _common import plt, save
from gvfsim.field import SpatialField
from gvfsim.geometry import builtin_path, lift_to_surfaces
from gvfsim.sim import run_integral_curve

path = builtin_path("lemniscate")
fld = SpatialField(lift_to_surfaces(path), k1=1.0, k2=1.0)

# %% a handful of starts, integrated with fixed-step RK4
rng = np.random.default_rng(1)
p0 = rng.uniform(-3, 3, size=(8, 3))
traces = run_integral_curve(fld, p0, dt=0.01, T=40.0, record_every=5)
for i, tr in enumerate(traces):
    print(f"start {i}: err {tr['err_norm'][0]:8.4f} -> {tr['err_norm'][-1]:.2e}")

# %% plane view
if plt is not None:
    w = np.linspace(*path.param_hint, 600)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(path.f1(w), path.f2(w), "k", lw=2, label="path")
    for tr in traces:
        ax.plot(tr["x"], tr["y"], lw=0.8)
    ax.set_aspect("equal")
    ax.legend()
    save(fig, "lemniscate.png")
