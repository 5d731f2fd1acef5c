"""Event-driven simulation of the N-particle Boltzmann-Kac jump process.

Time convention: every ordered pair (i, j) carries rate B_ij m_b / N, so an
unordered pair collides at rate 2 B_ij m_b / N (``time_scale="ordered"``).
``time_scale="half"`` keeps only i < j and halves every rate.

In d = 1 a collision is a Kac rotation of the pair by a uniform angle; the
sigma-formula on S^0 only exchanges the two velocities.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _engine
from .kernels import CollisionKernel, InvalidInput, angular_mass

TIME_SCALES = ("ordered", "half")
ENSEMBLE_FORMAT = "kaclab-ensemble/1"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class MajorantViolation(RuntimeError):
    """A thinning candidate exceeded its rate bound."""


@dataclass
class VelocityState:
    velocities: np.ndarray
    kernel: CollisionKernel = field(default_factory=CollisionKernel)
    time: float = 0.0
    collisions: int = 0
    time_scale: str = "ordered"
    frozen: bool = False
    constraint: str | None = None  # "kac_sphere" / "boltzmann_sphere" when sampled on one

    def __post_init__(self):
        v = np.array(self.velocities, dtype=float, order="C")
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 2:
            raise InvalidInput("need an (N, d) velocity array with N >= 2")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("velocities must be finite")
        if self.time_scale not in TIME_SCALES:
            raise InvalidInput(f"time_scale must be one of {TIME_SCALES}")
        self.velocities = v

    @property
    def N(self) -> int:
        return self.velocities.shape[0]

    @property
    def dim(self) -> int:
        return self.velocities.shape[1]

    def copy(self) -> "VelocityState":
        return VelocityState(self.velocities.copy(), self.kernel, self.time, self.collisions,
                             self.time_scale, self.frozen, self.constraint)

    def pair_factor(self) -> float:
        """Rate prefactor of one unordered pair, excluding B."""
        scale = 2.0 if self.time_scale == "ordered" else 1.0
        return scale * angular_mass(self.kernel, self.dim) / self.N

    def total_rate(self) -> float:
        n = self.N
        if self.kernel.is_maxwell:
            return self.pair_factor() * n * (n - 1) / 2.0
        diff = self.velocities[:, None, :] - self.velocities[None, :, :]
        return self.pair_factor() * 0.5 * float(np.sqrt((diff ** 2).sum(-1)).sum())


@dataclass
class Trajectory:
    times: np.ndarray
    velocities: np.ndarray  # (T, N, d)
    collisions: np.ndarray  # collision count at each snapshot
    fictitious: int = 0
    frozen: bool = False

    def __len__(self):
        return len(self.times)

    def state(self, k, template: VelocityState) -> VelocityState:
        return VelocityState(self.velocities[k].copy(), template.kernel, float(self.times[k]),
                             int(self.collisions[k]), template.time_scale, self.frozen,
                             template.constraint)


def _advance(v, t, t_stop, state, rng, scheme, max_events, max_candidates=None):
    """Run the compiled loop in place; returns (t, real, fictitious, status)."""
    code, eps, nu = state.kernel.engine_args()
    if scheme == "ssa":
        if state.kernel.is_maxwell:
            rate = state.pair_factor() * state.N * (state.N - 1) / 2.0
            t, ev, status = _engine.advance_maxwell(v, t, t_stop, rate, code, eps, nu, rng,
                                                    max_events)
        else:
            t, ev, status = _engine.advance_hs_ssa(v, t, t_stop, state.pair_factor(), code, eps,
                                                   nu, rng, max_events)
        fict = 0
    elif scheme == "rejection":
        t, ev, fict, status = _engine.advance_rejection(v, t, t_stop, state.pair_factor(),
                                                        not state.kernel.is_maxwell, code, eps,
                                                        nu, rng, max_events,
                                                        max_events if max_candidates is None
                                                        else max_candidates)
    else:
        raise InvalidInput(f"unknown scheme {scheme!r}")
    if status == _engine.MAJORANT_VIOLATION:
        raise MajorantViolation("sampled pair rate exceeded the majorant; stale speed bound")
    return t, ev, fict, status


def _step(state, rng, scheme):
    new = state.copy()
    if new.frozen:
        return new, float("inf")
    v = new.velocities
    t, ev, fict, status = _advance(v, new.time, float("inf"), new, rng, scheme, 1, 1)
    if status == _engine.FROZEN:
        new.frozen = True
        return new, float("inf")
    wait = t - state.time
    new.time = t
    new.collisions += ev
    return new, wait


def step_ssa(state: VelocityState, rng: np.random.Generator):
    """One exact jump; returns (new_state, waiting_time).

    A state whose total rate vanishes comes back with ``frozen=True`` and an
    infinite waiting time.
    """
    return _step(state, rng, "ssa")


def step_rejection(state: VelocityState, rng: np.random.Generator):
    """One candidate of the thinning scheme.

    Fictitious candidates advance time and leave velocities (and the
    collision counter) untouched.
    """
    return _step(state, rng, "rejection")


def advance(state: VelocityState, rng, *, t_stop=float("inf"), max_events=None, scheme="ssa"):
    """Advance a copy of ``state`` until ``t_stop`` or ``max_events`` real collisions."""
    new = state.copy()
    if new.frozen:
        return new
    budget = np.iinfo(np.int64).max if max_events is None else int(max_events)
    t, ev, _, status = _advance(new.velocities, new.time, float(t_stop), new, rng, scheme,
                                budget, np.iinfo(np.int64).max)
    new.time = t
    new.collisions += ev
    new.frozen = status == _engine.FROZEN
    return new


def simulate(state0: VelocityState, t_grid, rng: np.random.Generator, scheme: str = "ssa"):
    """Snapshots of the process at the grid times (exact: the state is piecewise constant)."""
    grid = np.asarray(t_grid, dtype=float).ravel()
    if grid.size == 0:
        raise InvalidInput("empty time grid")
    if np.any(np.diff(grid) <= 0):
        raise InvalidInput("time grid must be strictly increasing")
    if grid[0] < state0.time:
        raise InvalidInput("time grid starts before the state time")
    n, d = state0.velocities.shape
    snaps = np.empty((grid.size, n, d))
    counts = np.empty(grid.size, dtype=np.int64)
    v = state0.velocities.copy()
    t = state0.time
    coll = state0.collisions
    fict_total = 0
    frozen = state0.frozen
    big = np.iinfo(np.int64).max
    for k, tk in enumerate(grid):
        if not frozen and tk > t:
            t, ev, fict, status = _advance(v, t, tk, state0, rng, scheme, big)
            coll += ev
            fict_total += fict
            if status == _engine.FROZEN:
                frozen = True
        t = tk
        snaps[k] = v
        counts[k] = coll
    return Trajectory(grid, snaps, counts, fict_total, frozen)


def conserved_check(state, energy_per_particle=None):
    """Total momentum, total energy and sphere residuals (|sum v|, |sum |v|^2 - N E|).

    ``energy_per_particle`` defaults to d, i.e. unit variance per component.
    """
    v = state.velocities if isinstance(state, VelocityState) else np.asarray(state, float)
    if v.ndim == 1:
        v = v[:, None]
    n, d = v.shape
    e = float(d) if energy_per_particle is None else float(energy_per_particle)
    momentum = v.sum(axis=0)
    energy = float(np.sum(v * v))
    return momentum, energy, (float(np.linalg.norm(momentum)), abs(energy - n * e))


# ---------------------------------------------------------------------------
# ensembles

def _mix64(z):
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def replica_seed(base_seed: int, r: int) -> int:
    """SplitMix64 stream: output r+1 of the generator seeded with mix(base_seed).

    The finalizer is a bijection of 64-bit words and the states
    mix(base) + (r+1) * golden are distinct for r < 2^64, so seeds never
    collide within one base seed.
    """
    state = (_mix64(int(base_seed) & _MASK64) + (int(r) + 1) * _GOLDEN) & _MASK64
    return _mix64(state)


def replica_rng(base_seed, r):
    return np.random.Generator(np.random.PCG64(replica_seed(base_seed, r)))


@dataclass
class EnsembleLaw:
    N: int
    d: int
    kernel: CollisionKernel
    grid: np.ndarray
    data: np.ndarray  # (R, T, N, d)
    seeds: list
    base_seed: int
    scheme: str = "ssa"
    time_scale: str = "ordered"
    init: dict = field(default_factory=dict)
    frozen: np.ndarray | None = None
    collisions: np.ndarray | None = None  # (R, T)

    @property
    def R(self) -> int:
        return self.data.shape[0]

    def snapshot(self, t_index):
        """(R, N, d) array of replica states at one grid time."""
        return self.data[:, t_index]

    def manifest(self):
        from . import __version__
        return {
            "format": ENSEMBLE_FORMAT,
            "code_version": __version__,
            "N": self.N, "d": self.d, "R": self.R,
            "kernel": self.kernel.to_dict(),
            "grid": [float(x) for x in self.grid],
            "seeds": [int(s) for s in self.seeds],
            "base_seed": int(self.base_seed),
            "scheme": self.scheme,
            "time_scale": self.time_scale,
            "init": self.init,
            "layout": "replicas/r{replica:06d}_t{time_index:04d}.npy, float64, row-major N x d",
            "frozen": [bool(x) for x in (self.frozen if self.frozen is not None else [])],
        }

    def save(self, path):
        path = Path(path)
        (path / "replicas").mkdir(parents=True, exist_ok=True)
        with open(path / "ensemble.json", "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
        for r in range(self.R):
            for k in range(len(self.grid)):
                np.save(path / "replicas" / f"r{r:06d}_t{k:04d}.npy",
                        np.ascontiguousarray(self.data[r, k]))
        if self.collisions is not None:
            np.save(path / "collisions.npy", self.collisions)

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path / "ensemble.json") as fh:
            m = json.load(fh)
        if m.get("format") != ENSEMBLE_FORMAT:
            raise InvalidInput(f"unsupported ensemble format {m.get('format')!r}")
        R, T = m["R"], len(m["grid"])
        data = np.empty((R, T, m["N"], m["d"]))
        for r in range(R):
            for k in range(T):
                data[r, k] = np.load(path / "replicas" / f"r{r:06d}_t{k:04d}.npy")
        coll = np.load(path / "collisions.npy") if (path / "collisions.npy").exists() else None
        return cls(m["N"], m["d"], CollisionKernel.from_dict(m["kernel"]), np.array(m["grid"]),
                   data, m["seeds"], m["base_seed"], m["scheme"], m["time_scale"], m["init"],
                   np.array(m.get("frozen") or [False] * R), coll)


def run_replica(init, N, kernel, grid, base_seed, r, scheme="ssa", time_scale="ordered"):
    """Replica r of an ensemble: (snapshots (T, N, d), collision counts (T,), frozen)."""
    return _run_replica((init, N, kernel, np.asarray(grid, float), base_seed, r, scheme,
                         time_scale))


def _run_replica(args):
    init, N, kernel, grid, base_seed, r, scheme, time_scale = args
    rng = replica_rng(base_seed, r)
    v0 = init.sample(N, rng) if hasattr(init, "sample") else init(N, rng)
    state = VelocityState(v0, kernel, 0.0, 0, time_scale)
    traj = simulate(state, grid, rng, scheme)
    return traj.velocities, traj.collisions, traj.frozen


def run_ensemble(init, N, R, t_grid, kernel, base_seed, *, scheme="ssa", time_scale="ordered",
                 workers=None):
    """R independent replicas started from ``init`` and sampled on ``t_grid``.

    ``init`` is either an object with ``sample(N, rng)`` (see
    :mod:`kaclab.chaotic_init`) or a callable ``init(N, rng)``.  Replica r
    uses the generator seeded with :func:`replica_seed(base_seed, r)` for
    both its initial draw and its dynamics, so the output does not depend on
    the number of workers or the order in which replicas run.
    """
    if R < 1:
        raise InvalidInput("need R >= 1")
    grid = np.asarray(t_grid, dtype=float)
    if workers is None:
        workers = int(os.environ.get("KACLAB_WORKERS", "1"))
    jobs = [(init, N, kernel, grid, base_seed, r, scheme, time_scale) for r in range(R)]
    if workers > 1 and R > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replica, jobs, chunksize=max(1, R // (4 * workers))))
    else:
        results = [_run_replica(j) for j in jobs]
    d = results[0][0].shape[2]
    data = np.empty((R, grid.size, N, d))
    coll = np.empty((R, grid.size), dtype=np.int64)
    frozen = np.zeros(R, dtype=bool)
    for r, (snaps, counts, fr) in enumerate(results):
        data[r] = snaps
        coll[r] = counts
        frozen[r] = fr
    describe = init.to_dict() if hasattr(init, "to_dict") else {"callable": repr(init)}
    return EnsembleLaw(N, d, kernel, grid, data, [replica_seed(base_seed, r) for r in range(R)],
                       int(base_seed), scheme, time_scale, describe, frozen, coll)
