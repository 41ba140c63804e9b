"""Event-driven (Gillespie direct method) simulation of the exact process.

Every path owns a Philox stream keyed by a 64-bit seed.  Ensemble runs
derive path ``i``'s seed from ``(base_seed, i)`` through
:class:`numpy.random.SeedSequence`, so any single path of an ensemble can be
replayed on its own with :func:`simulate_path`.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np
from scipy import sparse

from .graph_core import as_matrix
from .params import EpidemicParams

__all__ = [
    "EpidemicParams",
    "TRANSITIONS",
    "SimulationPath",
    "PrevalenceCurve",
    "Ensemble",
    "ExtinctionStats",
    "derive_seed",
    "path_rng",
    "initial_states",
    "simulate_path",
    "simulate_ensemble",
    "estimate_prevalence",
    "empirical_extinction_stats",
]

# transition codes used in event arrays
S_TO_I, I_TO_R, R_TO_S, S_TO_R = 0, 1, 2, 3
TRANSITIONS = {S_TO_I: "S->I", I_TO_R: "I->R", R_TO_S: "R->S", S_TO_R: "S->R"}
_SOURCE = np.array([0, 1, 2, 0])
_TARGET = np.array([1, 2, 0, 2])


def derive_seed(base_seed: int, index: int) -> int:
    """64-bit seed of path ``index`` in an ensemble seeded with ``base_seed``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def path_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def initial_states(n: int, infected: Iterable[int] = (0,)) -> np.ndarray:
    """All susceptible except the listed (0-based) infected nodes."""
    x = np.zeros(n, dtype=np.int8)
    x[list(infected)] = 1
    return x


@numba.njit(cache=True, nogil=True)
def _local_pressure(j, state, indptr, indices, weights, beta):
    acc = 0.0
    for q in range(indptr[j], indptr[j + 1]):
        if state[indices[q]] == 1:
            acc += weights[q]
    return beta * acc


@numba.njit(cache=True, nogil=True)
def _gillespie(indptr, indices, weights, state0, beta, delta, gamma, sigma,
               t_max, rng, grid, record, stop_at_extinction):
    n = state0.size
    state = state0.copy()
    pressure = np.zeros(n)
    rates = np.zeros(n)
    n_inf = 0
    n_sus = 0
    for i in range(n):
        if state[i] == 1:
            n_inf += 1
        elif state[i] == 0:
            n_sus += 1
    for i in range(n):
        if state[i] == 0:
            pressure[i] = _local_pressure(i, state, indptr, indices, weights, beta)
            rates[i] = pressure[i] + sigma
        elif state[i] == 1:
            rates[i] = delta
        else:
            rates[i] = gamma

    hit_final = 0.0 if n_inf == 0 else -1.0
    hit_all_s = 0.0 if n_sus == n else -1.0
    ng = grid.size
    on_grid = np.zeros(ng, dtype=np.int64)
    gi = 0
    cap = 64 if record else 1
    ev_t = np.empty(cap)
    ev_node = np.empty(cap, dtype=np.int64)
    ev_kind = np.empty(cap, dtype=np.int8)
    n_ev = 0
    t = 0.0

    while True:
        if stop_at_extinction and n_inf == 0:
            break
        total = 0.0
        for i in range(n):
            total += rates[i]
        if total <= 0.0:
            break
        u = rng.random()
        t_new = t - math.log1p(-u) / total
        if t_new > t_max:
            break
        while gi < ng and grid[gi] < t_new:
            on_grid[gi] = n_inf
            gi += 1

        target = rng.random() * total
        acc = 0.0
        chosen = -1
        for i in range(n):
            acc += rates[i]
            if target < acc:
                chosen = i
                break
        if chosen < 0:
            # rounding fell off the end: take the last node with a live clock
            for i in range(n - 1, -1, -1):
                if rates[i] > 0.0:
                    chosen = i
                    acc = total
                    break
        s = state[chosen]
        if s == 0:
            offset = target - (acc - rates[chosen])
            kind = 0 if offset < pressure[chosen] else 3
        elif s == 1:
            kind = 1
        else:
            kind = 2

        if kind == 0:
            state[chosen] = 1
            n_inf += 1
            n_sus -= 1
            rates[chosen] = delta
            pressure[chosen] = 0.0
        elif kind == 1:
            state[chosen] = 2
            n_inf -= 1
            rates[chosen] = gamma
        elif kind == 2:
            state[chosen] = 0
            n_sus += 1
            pressure[chosen] = _local_pressure(chosen, state, indptr, indices, weights, beta)
            rates[chosen] = pressure[chosen] + sigma
        else:
            state[chosen] = 2
            n_sus -= 1
            rates[chosen] = gamma
            pressure[chosen] = 0.0
        if kind == 0 or kind == 1:
            # recompute from scratch: incremental float updates would drift
            for q in range(indptr[chosen], indptr[chosen + 1]):
                j = indices[q]
                if state[j] == 0:
                    pressure[j] = _local_pressure(j, state, indptr, indices, weights, beta)
                    rates[j] = pressure[j] + sigma
        t = t_new

        if record:
            if n_ev == ev_t.size:
                ev_t = np.concatenate((ev_t, np.empty(n_ev)))
                ev_node = np.concatenate((ev_node, np.empty(n_ev, dtype=np.int64)))
                ev_kind = np.concatenate((ev_kind, np.empty(n_ev, dtype=np.int8)))
            ev_t[n_ev] = t
            ev_node[n_ev] = chosen
            ev_kind[n_ev] = kind
            n_ev += 1
        if hit_final < 0.0 and n_inf == 0:
            hit_final = t
        if hit_all_s < 0.0 and n_sus == n:
            hit_all_s = t

    while gi < ng:
        on_grid[gi] = n_inf
        gi += 1
    return ev_t[:n_ev], ev_node[:n_ev], ev_kind[:n_ev], on_grid, hit_final, hit_all_s, state


def _csr_parts(g):
    M = as_matrix(g)
    csr = sparse.csr_array(M, dtype=np.float64)
    csr.sort_indices()
    return csr.indptr.astype(np.int64), csr.indices.astype(np.int64), csr.data.astype(np.float64), csr.shape[0]


def _as_states(x0, n: int) -> np.ndarray:
    states = getattr(x0, "states", x0)
    x = np.asarray(states, dtype=np.int8)
    if x.shape != (n,) or np.any((x < 0) | (x > 2)):
        raise ValueError(f"initial configuration must be {n} states in {{0, 1, 2}}")
    return x


@dataclass(frozen=True, eq=False)
class SimulationPath:
    """One sampled trajectory, stored as its event list.

    ``hitting_time_all_s`` is only tracked for ``sigma == 0``; ``None``
    means censored at ``t_max`` (or not applicable).
    """

    seed: int
    x0: np.ndarray = field(repr=False)
    t_max: float
    times: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    kinds: np.ndarray = field(repr=False)
    hitting_time_final_set: float | None
    hitting_time_all_s: float | None

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def events(self) -> list[tuple[float, int, str]]:
        return [(float(t), int(v), TRANSITIONS[int(k)]) for t, v, k in zip(self.times, self.nodes, self.kinds)]

    def replay(self) -> np.ndarray:
        """States after each event, shape (n_events + 1, N); checks legality."""
        x = self.x0.astype(np.int8).copy()
        out = np.empty((self.n_events + 1, x.size), dtype=np.int8)
        out[0] = x
        for e, (v, k) in enumerate(zip(self.nodes, self.kinds)):
            if x[v] != _SOURCE[k]:
                raise AssertionError(f"illegal {TRANSITIONS[int(k)]} at node {v} in state {x[v]}")
            x[v] = _TARGET[k]
            out[e + 1] = x
        return out

    def infected_on_grid(self, grid: Sequence[float]) -> np.ndarray:
        """Number infected at each grid time (right-continuous step function)."""
        states = self.replay()
        counts = (states == 1).sum(axis=1)
        pos = np.searchsorted(self.times, np.asarray(grid, dtype=float), side="right")
        return counts[pos]


def simulate_path(g, p: EpidemicParams, x0, seed: int, t_max: float,
                  stop_at_extinction: bool = False) -> SimulationPath:
    """Sample one path of the exact process up to ``t_max``.

    With ``stop_at_extinction`` the path ends once no node is infected
    (later events only shuffle S and R and cannot change prevalence).
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    indptr, indices, weights, n = _csr_parts(g)
    x = _as_states(x0, n)
    ev_t, ev_node, ev_kind, _, hit_f, hit_s, _ = _gillespie(
        indptr, indices, weights, x, p.beta, p.delta, p.gamma, p.sigma, float(t_max),
        path_rng(seed), np.empty(0), True, stop_at_extinction,
    )
    return SimulationPath(
        seed=int(seed), x0=x.copy(), t_max=float(t_max),
        times=ev_t, nodes=ev_node, kinds=ev_kind,
        hitting_time_final_set=hit_f if hit_f >= 0 else None,
        hitting_time_all_s=hit_s if (hit_s >= 0 and p.sigma == 0) else None,
    )


@dataclass(frozen=True, eq=False)
class PrevalenceCurve:
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int

    def rows(self):
        return np.column_stack([self.t, self.mean, self.stderr, np.full(self.t.size, self.n_paths)])


@dataclass(frozen=True, eq=False)
class Ensemble:
    curve: PrevalenceCurve
    hitting_times: np.ndarray  # NaN where censored
    t_max: float
    base_seed: int


def _run_chunk(args):
    indptr, indices, weights, x, p, t_max, grid, base_seed, lo, hi = args
    s1 = np.zeros(grid.size, dtype=np.int64)
    s2 = np.zeros(grid.size, dtype=np.int64)
    hits = np.empty(hi - lo)
    for k, i in enumerate(range(lo, hi)):
        _, _, _, counts, hit_f, _, _ = _gillespie(
            indptr, indices, weights, x, p.beta, p.delta, p.gamma, p.sigma, t_max,
            path_rng(derive_seed(base_seed, i)), grid, False, True,
        )
        s1 += counts
        s2 += counts * counts
        hits[k] = hit_f if hit_f >= 0 else np.nan
    return s1, s2, hits


def simulate_ensemble(g, p: EpidemicParams, x0, paths: int, t_grid: Sequence[float],
                      base_seed: int, t_max: float | None = None, workers: int = 1) -> Ensemble:
    """Run ``paths`` independent paths; aggregate prevalence and extinction times.

    Results are independent of ``workers``: per-path counts are integers,
    so the reduction is exact in any order.
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    grid = np.asarray(t_grid, dtype=np.float64)
    t_max = float(grid[-1] if t_max is None else t_max)
    indptr, indices, weights, n = _csr_parts(g)
    x = _as_states(x0, n)
    n_chunks = max(1, min(paths, 4 * workers))
    bounds = np.linspace(0, paths, n_chunks + 1).astype(np.int64)
    jobs = [(indptr, indices, weights, x, p, t_max, grid, int(base_seed), int(a), int(b))
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, jobs))
    else:
        results = [_run_chunk(j) for j in jobs]
    s1 = sum(r[0] for r in results)
    s2 = sum(r[1] for r in results)
    hits = np.concatenate([r[2] for r in results])
    mean = s1 / (n * paths)
    if paths > 1:
        var = (s2 - s1.astype(np.float64) ** 2 / paths) / (paths - 1) / n**2
        stderr = np.sqrt(np.maximum(var, 0.0) / paths)
    else:
        stderr = np.zeros(grid.size)
    curve = PrevalenceCurve(grid.copy(), mean, stderr, int(paths))
    return Ensemble(curve, hits, t_max, int(base_seed))


def estimate_prevalence(g, p: EpidemicParams, x0, paths: int, t_grid: Sequence[float],
                        base_seed: int, workers: int = 1) -> PrevalenceCurve:
    """Mean fraction infected on ``t_grid`` over ``paths`` seeded paths."""
    return simulate_ensemble(g, p, x0, paths, t_grid, base_seed, workers=workers).curve


@dataclass(frozen=True)
class ExtinctionStats:
    n_paths: int
    n_extinct: int
    mean: float | None
    median: float | None
    ci95: tuple[float, float] | None
    fraction_censored: float
    t_max: float | None

    def as_dict(self) -> dict[str, object]:
        gt = "> t_max" if self.t_max is None else f"> {self.t_max:g}"
        return {
            "n_paths": self.n_paths,
            "n_extinct": self.n_extinct,
            "mean_extinction_time": gt if self.mean is None else self.mean,
            "median_extinction_time": gt if self.median is None else self.median,
            "ci95_low": None if self.ci95 is None else self.ci95[0],
            "ci95_high": None if self.ci95 is None else self.ci95[1],
            "fraction_censored": self.fraction_censored,
        }


def empirical_extinction_stats(paths, t_max: float | None = None) -> ExtinctionStats:
    """Summary of hitting times of the no-infected set.

    ``paths`` is a list of :class:`SimulationPath` or an array of hitting
    times with NaN marking censored paths.  Censored paths are counted but
    never averaged in; the CI is the normal approximation on the extinct ones.
    """
    if isinstance(paths, Ensemble):
        t_max = paths.t_max if t_max is None else t_max
        times = paths.hitting_times
    else:
        paths = list(paths)
        if paths and isinstance(paths[0], SimulationPath):
            t_max = paths[0].t_max if t_max is None else t_max
            times = np.array([np.nan if q.hitting_time_final_set is None else q.hitting_time_final_set
                              for q in paths])
        else:
            times = np.asarray(paths, dtype=float)
    if times.size == 0:
        raise ValueError("need at least one path")
    done = times[~np.isnan(times)]
    frac = 1.0 - done.size / times.size
    if done.size == 0:
        return ExtinctionStats(times.size, 0, None, None, None, frac, t_max)
    mean = float(done.mean())
    half = 1.96 * float(done.std(ddof=1)) / math.sqrt(done.size) if done.size > 1 else 0.0
    return ExtinctionStats(times.size, int(done.size), mean, float(np.median(done)),
                           (mean - half, mean + half), frac, t_max)
