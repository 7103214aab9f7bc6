"""Recover the boundary distance functions of [0, pi] from its Neumann boundary data.

Walks through each stage by hand instead of going through the CLI:
exact data, a small perturbation, a few volumes, the accepted point set and
its distance to the truth.

    python3 demos/interval_walkthrough.py
"""

import math

import numpy as np

from gelfand.metric import evaluate_run
from gelfand.models import (
    build_interval_model,
    make_partition,
    perturb_dataset,
    true_boundary_distances,
    true_volume,
)
from gelfand.reconstruct import ReconstructionParams, build_rstar
from gelfand.volumes import VolumeOracle, VolumeParams

ETA = 0.2
J = 64

model, exact = build_interval_model(math.pi, J)
print(f"first eigenvalues: {exact.lambdas[:5]}")
print(f"traces of phi_2 at the endpoints: {exact.traces[1]}")

data = perturb_dataset(exact, delta=1e-3, seed=1)
shift = abs(np.sqrt(data.lambdas) - np.sqrt(exact.lambdas)).max()
print(f"largest shift in sqrt(lambda) after perturbing: {shift:.2e} (delta = {data.delta})")

# The boundary is two points, so the partition has one cell per endpoint.
part = make_partition(model, ETA)
oracle = VolumeOracle(data, part, VolumeParams(J=J, eps1=0.03, gamma=0.5, C0p=1e-7, eta=ETA, diameter=math.pi))

print("\nvolumes from boundary data alone against the true lengths:")
for alpha in [(0, 0.5, 0), (0, 1.0, 0), (0, 1.0, 1.0), (math.pi / 2, 0, 0)]:
    print(f"  alpha={alpha}:  {oracle.vol_a(alpha):.3f}  (true {true_volume(model, part, alpha):.3f})")

params = ReconstructionParams(eta=ETA, i0=8.0, L=0, D=math.pi)
rstar = build_rstar(oracle, params, threads=2)
print(f"\naccepted {len(rstar)} candidate distance functions; first few value vectors:")
for f in rstar.functions[:5]:
    print(f"  {np.round(f.values, 6)}  via the {f.route} test")

truth = true_boundary_distances(model, part, 0.01)
report = evaluate_run(rstar.values, truth, eta=ETA, delta=data.delta, J=J)
print(f"\nHausdorff distance to sampled truth: {report['hausdorff']:.3f} (eta = {ETA})")
print(f"Gromov-Hausdorff bracket: [{report['gh_lower']:.3f}, {report['gh_upper']:.3f}]")
