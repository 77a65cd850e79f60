"""Point maps, their density conditions and the composition norm.

Run with ``python3 demos/maps_roundtrip.py``.
"""
import numpy as np

from bmokit import grid_1d
from bmokit.maps import (
    PointMap,
    condition_i_fit,
    condition_ii_check,
    gotoh_roundtrip,
    operator_norm_estimate,
)

space = grid_1d(8, normalize=True)
folding = PointMap(space, np.array([0, 1, 2, 3, 3, 2, 1, 0]))
maps = {
    "identity": PointMap.identity(space),
    "reflection": PointMap.reflection(space),
    "constant": PointMap.constant(space, 3),
    "folding": folding,
}

for name, F in maps.items():
    K, alpha, _ = condition_i_fit(space, F, trials=200)
    norm, _ = operator_norm_estimate(space, F)
    # condition (ii) reads: input density below lam forces preimage density below gamma
    small = condition_ii_check(space, F, 0.2, 0.2, trials=200).status
    large = condition_ii_check(space, F, 0.2, 0.5, trials=200).status
    print(f"{name:>10}: K = {K:.3f}, alpha = {alpha:.2f}, operator norm ~ {norm:.3f}, "
          f"(ii) with gamma = 0.2: {small} at lam = 0.2, {large} at lam = 0.5")

out = gotoh_roundtrip(space, maps["reflection"], trials=40)
held = sum(r["holds"] for r in out["runs"])
print(f"round trip for the reflection: {held}/{len(out['runs'])} instances hold")
