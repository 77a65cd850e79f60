"""Split a constant across the two halves of a line.

The construction returns fields that vanish on their own set, sum to lam
everywhere and stay in BMO with norm of order 1/lam.  Run with
``python3 demos/uchiyama_partition.py``.
"""
import math

import numpy as np

from bmokit import grid_1d
from bmokit.uchiyama import (
    ConstructionParams,
    UchiyamaHypothesisError,
    density_functional,
    uchiyama_construct,
    verify_construction,
)

space = grid_1d(32, normalize=True)
E1 = np.arange(32) < 16
sets = [E1, ~E1]
print(f"density of the partition: {density_functional(space, sets)[0]}")

# With the true doubling constant a partition is far too dense.
try:
    uchiyama_construct(space, sets, 2.0)
except UchiyamaHypothesisError as err:
    print(f"true c_D = {space.c_D:.3f}: hypothesis fails, lam must stay below {err.lam_max:.3f}")

# A synthetic c_D relaxes the hypothesis; q at singleton scale keeps every
# level-wise invariant intact.
q = math.ceil(math.log2(4 / space.min_distance))
for lam in (1.5, 2.0, 3.0):
    params = ConstructionParams.for_space(space, lam, 2, q=q, c_D=1.05)
    fields, state = uchiyama_construct(space, sets, lam, params)
    rep = verify_construction(space, fields, sets, lam, params.c_D)
    print(f"lam = {lam}: route {state.route}, {len(state.levels)} levels, "
          f"violations {sum(state.violation_counts.values())}, "
          f"lam * max norm = {rep['lam_times_max_norm']:.3f}")

# A sparse set against an empty one goes through with the true constant.
E = np.zeros(32, bool)
E[[2, 3, 17]] = True
fields, state = uchiyama_construct(space, [E, np.zeros(32, bool)], 1.5,
                                   ConstructionParams.for_space(space, 1.5, 2, q=1))
print(f"sparse set: route {state.route}, ok = {state.ok}, f_1 on its set = {fields[0][E].max():.2e}")
