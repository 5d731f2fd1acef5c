"""Throughput of the collision engines and of the 1-d truncated transport solver."""
import time

import numpy as np

from kaclab._transport import truncated_w1_1d
from kaclab.kac_process import VelocityState, advance
from kaclab.kernels import CollisionKernel


def bench(label, fn, events):
    fn()  # compile
    t0 = time.perf_counter()
    fn()
    dt = time.perf_counter() - t0
    print(f"{label:<34} {events / dt / 1e6:8.2f} M/s  ({dt:.2f}s)")


rng = np.random.default_rng(0)
for name, kern, scheme in [("MG ssa", CollisionKernel.mg(), "ssa"),
                           ("true Maxwell ssa", CollisionKernel.true_maxwell(0.3), "ssa"),
                           ("hard spheres ssa", CollisionKernel.hard_spheres(), "ssa"),
                           ("hard spheres rejection", CollisionKernel.hard_spheres(),
                            "rejection")]:
    for N in (64, 1024):
        s = VelocityState(rng.standard_normal((N, 3)), kern)
        n = 10 ** 6 if kern.is_maxwell or scheme == "rejection" else 10 ** 5
        bench(f"{name}, N={N}", lambda: advance(s, rng, max_events=n, scheme=scheme), n)

for n in (10 ** 4, 10 ** 5, 10 ** 6):
    x, y = rng.standard_normal(n), rng.standard_normal(n) + 0.1
    bench(f"truncated W1 1d, n={n}", lambda: truncated_w1_1d(x, y), 2 * n)
