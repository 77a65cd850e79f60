"""Norms, tails and the John-Nirenberg constant on a small grid.

Run with ``python3 demos/norms_and_tails.py``.
"""
import numpy as np

from bmokit import bmo_norm, dual_norm, grid_1d, jn_constant, jn_converse
from bmokit.core import STROMBERG_CONSTANT, stromberg_bound, stromberg_functional

space = grid_1d(8)
print(f"{space.label}: {len(space.balls)} canonical balls, (c_mu, c_D) = {space.doubling}")

# The indicator of the left half oscillates by exactly 1/2 on the whole space.
f = (np.arange(8) < 4).astype(float)
norm, ball = bmo_norm(space, f)
print(f"indicator: norm = {norm}, attained on {ball}, median norm = {dual_norm(space, f)}")

# A logarithmic field is the classic unbounded-looking member of the space.
g = np.log(0.5 + np.arange(8.0))
norm = bmo_norm(space, g)[0]
A = jn_constant(space, g)
print(f"log field: norm = {norm:.4f}, exact John-Nirenberg constant A = {A:.4f}")

# Going back: exponential two-sided tails force a norm bound.
bound = jn_converse(space, g, 2.0, A / (2 * norm), certify=True)
print(f"converse bound with C1 = 2, C2 = A/(2 norm): {bound:.2f} >= {norm:.4f}")

# The sliding-window functional and its majorant.
for lam in (0.25, 0.5, 1.0):
    value = stromberg_functional(space, g, lam)[0]
    v = stromberg_bound(space, g, lam, value, space.c_D)
    print(f"lam = {lam}: functional = {value:.3f}, check {v.status} "
          f"(constant {STROMBERG_CONSTANT:.4f})")
