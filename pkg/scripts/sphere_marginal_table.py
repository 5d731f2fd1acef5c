"""Deterministic W1 between the Kac-sphere marginal of a conditioned product and f.

Prints N, W1, N * W1 and the local log-log slope for the bimodal mixture
0.5 N(-0.8, 0.36) + 0.5 N(0.8, 0.36).  The product N * W1 settles near a
constant, i.e. the marginal converges at rate 1/N.
"""
import math

from kaclab.chaotic_init import DensitySpec, kac_sphere_marginal_w1

f = DensitySpec.mixture([0.5, 0.5], [[-0.8], [0.8]], [0.36, 0.36])
prev = None
print(f"{'N':>6} {'W1':>12} {'N*W1':>8} {'slope':>7}")
for N in (16, 32, 64, 128, 256, 512, 1024, 2048):
    w = kac_sphere_marginal_w1(f, N)
    slope = "" if prev is None else f"{math.log(w / prev[1]) / math.log(N / prev[0]):7.3f}"
    print(f"{N:6d} {w:12.4e} {N * w:8.4f} {slope}")
    prev = (N, w)
