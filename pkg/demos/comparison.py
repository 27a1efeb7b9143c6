"""
Guidance field vs trajectory tracking
=====================================

Both controllers follow the same Lissajous curve from the same pose with
the same seeded heading noise.  The field controller picks its reference
point from the robot's position, so it does not chase a clock.
"""
import numpy as np

from _common import plt, save
from gvfsim.analysis import smoothness_metrics
from gvfsim.scenario import load_scenario
from gvfsim.verify import comparison_runs, point_gaps

sc = load_scenario("lissajous_compare").scenario
gvf, tt = comparison_runs(sc, noise=True)
for name, tr in (("gvf", gvf), ("traj_track", tt)):
    m = smoothness_metrics(tr)
    gap = point_gaps(tr, (2.0,))[0]["distance"]
    print(f"{name:10s} heading TV {m.heading_total_variation:8.1f} rad, "
          f"reversals {m.reversal_count:4d}, distance to reference at 2 s {gap:6.1f}")

if plt is not None:
    path = sc.path.build()
    w = np.linspace(*path.param_hint, 2000)
    fig, (a, b) = plt.subplots(1, 2, figsize=(11, 4))
    a.plot(path.f1(w), path.f2(w), "k", lw=1)
    for name, tr in (("gvf", gvf), ("traj_track", tt)):
        a.plot(tr["x"], tr["y"], lw=0.8, label=name)
        b.plot(tr["t"], np.unwrap(tr["theta"]), lw=0.8, label=name)
    a.set_aspect("equal")
    a.legend()
    b.set_xlabel("t [s]")
    b.set_ylabel("unwrapped heading [rad]")
    save(fig, "comparison.png")
