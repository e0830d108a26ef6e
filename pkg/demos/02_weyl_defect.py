# ---
# How far is a periodised gradient from being a gradient?
#
# Take u, a stationary moving average on Z^2 with range 2, and its gradient.
# Reading grad u on the window [0, N)^2 and wrapping it onto the torus breaks
# exactness along the seam, so the torus Weyl projection no longer returns
# the field unchanged.  The relative defect shrinks as the seam becomes a
# smaller fraction of the window.
# ---
from pathlib import Path

import numpy as np

from perihom.harness import fit_rate, load_config, run_experiment
from perihom.lattice import TorusGrid
from perihom.media import (MovingAverage, Seed, StationaryFieldSpec, birkhoff_quality,
                           known_potential_second_moment, sample_known_potential)
from perihom.weyl import decompose, decomposition_defect

here = Path(__file__).parent
spec = MovingAverage(stencil_radius=2)
sampler = StationaryFieldSpec(spec, d=2, kind="potential")

# One seed, a few windows.
for p in decomposition_defect(sampler, "pot", Seed(7), [16, 32, 64, 128]):
    print(f"N={p.N:>4}  |defect|/|field| = {p.defect_rel:.4f}")

# Where does the defect live?  Look at the solenoidal part of one window.
v = sample_known_potential(spec, Seed(7), TorusGrid(2, 64))
sol = decompose(v).sol.values
energy = np.sum(sol ** 2, axis=0)
rows = energy.sum(axis=1)
print("\nsolenoidal energy by row: first/last rows", rows[[0, -1]].round(3),
      " middle row", rows[32].round(4))

# The Birkhoff averaging diagnostic grows with N as window averages settle.
ref = known_potential_second_moment(spec, 2)
for N in (16, 32, 64):
    q = [birkhoff_quality(sample_known_potential(spec, Seed(7, r), TorusGrid(2, N)), ref) for r in range(8)]
    print(f"N={N:>3}  median averaging quality {np.median(q)}")

# The ensemble sweep; the fitted slope sits near -1/2.
cfg = load_config(here / "configs" / "weyl_defect.ini")
rec = run_experiment(cfg)
fit = fit_rate(rec)
print(f"\nmean defect ~ N^{fit.slope:.2f}")
