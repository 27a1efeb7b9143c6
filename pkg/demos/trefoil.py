"""
Unicycle on a trefoil projection
================================

The bundled ``trefoil`` scenario runs the guidance controller from pixel
coordinates ``(923, 545)`` with heading ``pi``.  The error ``|phi|`` drops
below a few pixels and stays there; ``V = 1 - cos(beta)`` never grows.
"""
import numpy as np

from _common import plt, save
from gvfsim.analysis import lyapunov_series
from gvfsim.scenario import load_scenario
from gvfsim.sim import run_scenario

sc = load_scenario("trefoil").scenario
tr = run_scenario(sc)
err = tr["err_norm"]
print(f"initial error {err[0]:.1f} px, final {err[-1]:.2e} px")
print(f"first below 5 px at t = {tr['t'][np.argmax(err < 5)]:.2f} s")
print(f"largest increase of V: {lyapunov_series(tr).max_increment:.2e}")

if plt is not None:
    path = sc.path.build()
    w = np.linspace(*path.param_hint, 4000)
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    a.plot(path.f1(w), path.f2(w), "k", lw=1)
    a.plot(tr["x"], tr["y"], "tab:orange", lw=1)
    a.set_aspect("equal")
    b.semilogy(tr["t"], np.maximum(err, 1e-12))
    b.set_xlabel("t [s]")
    b.set_ylabel("|phi| [px]")
    save(fig, "trefoil.png")
