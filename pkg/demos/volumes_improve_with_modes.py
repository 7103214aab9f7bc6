"""How many modes does a volume need?

For the interval, the set within distance 1 of the left endpoint has length
1. This script estimates it from 8, 16, 32 and 64 modes and prints the L2
error of the cut-off function alongside.

    python3 demos/volumes_improve_with_modes.py
"""

import math

import numpy as np

from gelfand.models import build_interval_model, make_partition
from gelfand.projection import build_thresholds, cutoff_projection, minimize_over_U
from gelfand.spectral import l2_distance_on_mesh
from gelfand.volumes import VolumeOracle, VolumeParams

ETA = 0.2
model, ds = build_interval_model(math.pi, 64)
part = make_partition(model, ETA)
x = model.interior_nodes[:, 0]
indicator = np.where(x < 1, 1 / math.sqrt(math.pi), 0.0)

print(f"{'J':>4} {'volume':>8} {'L2 error':>9}")
for J in (8, 16, 32, 64):
    oracle = VolumeOracle(ds, part, VolumeParams(J=J, eps1=0.03, gamma=0.5, C0p=1e-7, eta=ETA))
    thr = build_thresholds(J, 1.0, 0.5, 0.03, 0.0, ds, 1.0, 1e-7)
    u = np.eye(J)[0]
    cut = cutoff_projection(u, minimize_over_U(u, thr, ds, part, (0, 1, 0)))
    print(f"{J:>4} {oracle.vol_a((0, 1, 0)):>8.3f} {l2_distance_on_mesh(cut, indicator, model):>9.3f}")
