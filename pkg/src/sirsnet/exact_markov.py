"""Exact 3^N-state Markov chain of the SIRS-with-vaccination process.

State ``k`` encodes node states X_i in {S=0, I=1, R=2} as the base-3 number
``k = sum_i X_i 3^i`` (node 0 is the least significant digit).

The generator is stored row-wise: ``Q[z, j]`` is the rate of the jump
z -> j and rows sum to zero.  Probability vectors are row vectors evolving
as ``dv/dt = v Q``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.stats import poisson

from .graph_core import ConvergenceError, as_matrix
from .params import EpidemicParams

log = logging.getLogger(__name__)

__all__ = [
    "S", "I", "R",
    "MAX_EXACT_NODES",
    "NetworkConfiguration",
    "GeneratorMatrix",
    "BlockMatrixAbar",
    "StateSpaceTooLarge",
    "AboveThresholdError",
    "SpectrumCollisionError",
    "encode",
    "decode",
    "configuration",
    "build_generator",
    "solve_master_equation",
    "marginals",
    "marginal_infection_probabilities",
    "prob_not_in_final_set",
    "prob_not_absorbed",
    "hitting_times_final_set",
    "expected_hitting_time_final_set",
    "bound_not_in_final_set",
    "bound_mean_extinction_time",
    "block_matrix_abar",
    "bound_no_absorption",
    "write_master_csv",
]

S, I, R = 0, 1, 2
MAX_EXACT_NODES = 12


class StateSpaceTooLarge(ValueError):
    pass


class AboveThresholdError(ValueError):
    pass


class SpectrumCollisionError(ValueError):
    pass


def encode(states: Sequence[int]) -> int:
    states = np.asarray(states, dtype=np.int64)
    if states.ndim != 1 or np.any((states < 0) | (states > 2)):
        raise ValueError("states must be a 1-D sequence over {0, 1, 2}")
    return int(np.sum(states * 3 ** np.arange(states.size, dtype=np.int64)))


def decode(index: int, n: int) -> np.ndarray:
    if not 0 <= index < 3**n:
        raise ValueError(f"index {index} outside [0, {3**n - 1}]")
    return (index // 3 ** np.arange(n, dtype=np.int64)) % 3


@dataclass(frozen=True)
class NetworkConfiguration:
    states: tuple[int, ...]
    index: int

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def n_infected(self) -> int:
        return sum(1 for x in self.states if x == I)


def configuration(states_or_index, n: int | None = None) -> NetworkConfiguration:
    """Build a configuration from a state array, or from an index plus ``n``."""
    if isinstance(states_or_index, NetworkConfiguration):
        return states_or_index
    if np.isscalar(states_or_index):
        if n is None:
            raise ValueError("decoding an index needs the node count")
        st = decode(int(states_or_index), n)
        return NetworkConfiguration(tuple(int(x) for x in st), int(states_or_index))
    st = np.asarray(states_or_index, dtype=np.int64)
    return NetworkConfiguration(tuple(int(x) for x in st), encode(st))


def _digits(n: int) -> np.ndarray:
    k = np.arange(3**n, dtype=np.int64)
    return ((k[:, None] // 3 ** np.arange(n, dtype=np.int64)) % 3).astype(np.int8)


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    matrix: sparse.csr_array = field(repr=False)
    n_nodes: int
    params: EpidemicParams

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    @property
    def final_mask(self) -> np.ndarray:
        """True for configurations without an infected node."""
        return ~np.any(_digits(self.n_nodes) == I, axis=1)

    @property
    def exit_rates(self) -> np.ndarray:
        return -self.matrix.diagonal()


def build_generator(g, p: EpidemicParams, max_nodes: int = MAX_EXACT_NODES) -> GeneratorMatrix:
    """Generator of the exact chain on graph ``g``.

    ``g`` may be a :class:`Graph`, a :class:`WeightedAdjacency` or a raw
    symmetric array (raw arrays may be disconnected, which small oracle
    checks rely on).
    """
    W = as_matrix(g)
    W = W.toarray() if sparse.issparse(W) else np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    if n > max_nodes:
        raise StateSpaceTooLarge(
            f"exact chain on {n} nodes has 3^{n} states (cap is {max_nodes} nodes); "
            "use the stochastic simulator instead"
        )
    n_states = 3**n
    log.info("building generator: %d states, ~%.1f MB", n_states, n_states * n * 4 / 3 * 20 / 2**20)
    X = _digits(n)
    pressure = p.beta * ((X == I).astype(np.float64) @ W.T)
    k = np.arange(n_states, dtype=np.int64)
    rows, cols, rates = [], [], []
    for m in range(n):
        pw = 3**m
        xm = X[:, m]
        s_mask, i_mask, r_mask = xm == S, xm == I, xm == R
        # I -> R
        rows.append(k[i_mask]); cols.append(k[i_mask] + pw); rates.append(np.full(i_mask.sum(), p.delta))
        # S -> I
        inf = pressure[s_mask, m]
        pos = inf > 0
        rows.append(k[s_mask][pos]); cols.append(k[s_mask][pos] + pw); rates.append(inf[pos])
        # R -> S
        rows.append(k[r_mask]); cols.append(k[r_mask] - 2 * pw); rates.append(np.full(r_mask.sum(), p.gamma))
        # S -> R
        if p.sigma > 0:
            rows.append(k[s_mask]); cols.append(k[s_mask] + 2 * pw); rates.append(np.full(s_mask.sum(), p.sigma))
    rows, cols, rates = np.concatenate(rows), np.concatenate(cols), np.concatenate(rates)
    off = sparse.coo_array((rates, (rows, cols)), shape=(n_states, n_states)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    Q = (off + sparse.diags_array(diag)).tocsr()
    return GeneratorMatrix(sparse.csr_array(Q), n, p)



def _poisson_cutoff(lam: float, eps: float) -> int:
    """Smallest k with P(Pois(lam) > k) < eps.

    ``poisson.isf`` returns NaN for tail masses near 1e-17, so the tail is
    scanned directly from the mean upward.
    """
    k = int(np.ceil(lam))
    while poisson.sf(k, lam) >= eps:
        k += max(1, int(np.sqrt(lam)))
    return k

def solve_master_equation(
    Q: GeneratorMatrix,
    v0: np.ndarray,
    t_grid: Sequence[float],
    tol: float = 1e-12,
    max_substeps: int = 1_000_000,
) -> np.ndarray:
    """Probability vectors at the times in ``t_grid`` (``v0`` sits at t = 0).

    Uniformisation: with ``q`` the largest exit rate and ``P = I + Q/q``,
    ``v(t + h) = sum_k Pois(k; q h) v(t) P^k``.  Steps are split so that
    ``q h <= 30`` and every series is truncated where the Poisson tail drops
    below ``tol`` divided by the number of steps.

    Returns
    -------
    ndarray, shape (len(t_grid), n_states)
    """
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-D array")
    if t_grid[0] < 0 or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be non-negative and non-decreasing")
    v = np.asarray(v0, dtype=np.float64).copy()
    if v.shape != (Q.n_states,):
        raise ValueError(f"v0 must have length {Q.n_states}")
    if np.any(v < -1e-12) or abs(v.sum() - 1) > 1e-9:
        raise ValueError("v0 is not a probability vector")
    q = float(Q.exit_rates.max())
    out = np.empty((t_grid.size, v.size))
    if q == 0:
        out[:] = v
        return out
    PT = (sparse.eye_array(Q.n_states, format="csr") + Q.matrix / q).T.tocsr()
    spans = np.diff(np.concatenate([[0.0], t_grid]))
    n_sub = np.maximum(np.ceil(q * spans / 30.0), 1).astype(np.int64)
    n_sub[spans == 0] = 0
    total = int(n_sub.sum())
    if total > max_substeps:
        raise ConvergenceError(f"uniformisation needs {total} substeps (cap {max_substeps})")
    eps = max(tol / max(total, 1), 1e-300)
    for idx, (span, m) in enumerate(zip(spans, n_sub)):
        if m:
            lam = q * span / m
            kmax = _poisson_cutoff(lam, eps)
            w = poisson.pmf(np.arange(kmax + 1), lam)
            for _ in range(m):
                acc = w[0] * v
                u = v
                for k in range(1, kmax + 1):
                    u = PT @ u
                    acc += w[k] * u
                v = acc
            v[(v < 0) & (v >= -1e-12)] = 0.0
        out[idx] = v
    return out


def marginals(v: np.ndarray, n: int) -> np.ndarray:
    """Per-node state probabilities.

    ``v`` of shape (n_states,) gives an (n, 3) array; a stack of vectors of
    shape (T, n_states) gives (T, n, 3).  Column order is S, I, R.
    """
    v = np.asarray(v, dtype=np.float64)
    squeeze = v.ndim == 1
    V = v.reshape((-1,) + (3,) * n)  # last axis = node 0
    out = np.empty((V.shape[0], n, 3))
    all_axes = set(range(1, n + 1))
    for m in range(n):
        ax = n - m
        out[:, m, :] = V.sum(axis=tuple(all_axes - {ax}))
    return out[0] if squeeze else out


def marginal_infection_probabilities(v: np.ndarray, n: int) -> np.ndarray:
    """P(X_i = I) for each node (stacks of vectors supported as in :func:`marginals`)."""
    return marginals(v, n)[..., I]


def prob_not_in_final_set(Q: GeneratorMatrix, v: np.ndarray) -> np.ndarray:
    return np.asarray(v)[..., ~Q.final_mask].sum(axis=-1)


def prob_not_absorbed(v: np.ndarray) -> np.ndarray:
    """P(not all susceptible); the all-S state is index 0."""
    v = np.asarray(v)
    return 1.0 - v[..., 0]


def hitting_times_final_set(Q: GeneratorMatrix) -> np.ndarray:
    """Expected time to reach the no-infected set from every state (0 inside it)."""
    transient = ~Q.final_mask
    idx = np.nonzero(transient)[0]
    A = -Q.matrix[idx][:, idx]
    h = np.zeros(Q.n_states)
    if idx.size:
        sol = spsolve(sparse.csc_array(A), np.ones(idx.size))
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError("restricted generator is singular")
        h[idx] = sol
    return h


def expected_hitting_time_final_set(Q: GeneratorMatrix, start) -> float:
    cfg = configuration(start, Q.n_nodes)
    if cfg.n_infected == 0:
        raise ValueError("start configuration has no infected node")
    return float(hitting_times_final_set(Q)[cfg.index])


def bound_not_in_final_set(t, n: int, infected_at_0: int, beta: float, delta: float, lambda1: float):
    """Upper bound sqrt(n I0) exp((beta lambda1 - delta) t) on P(some node infected at t)."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    out = np.sqrt(n * infected_at_0) * np.exp((beta * lambda1 - delta) * t)
    return float(out) if out.ndim == 0 else out


def bound_mean_extinction_time(n: int, beta: float, delta: float, lambda1: float) -> float:
    """(ln n + 1)/(delta - beta lambda1), valid when beta/delta < 1/lambda1."""
    if not beta * lambda1 < delta:
        raise AboveThresholdError(
            f"above fast-extinction threshold: beta*lambda1 = {beta * lambda1:g} >= delta = {delta:g}"
        )
    return (np.log(n) + 1.0) / (delta - beta * lambda1)


@dataclass(frozen=True, eq=False)
class BlockMatrixAbar:
    """[[beta A - delta I, 0], [delta I, -gamma I]] and its eigen-data."""

    matrix: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    condition: float
    top_eigenvalue: float


def block_matrix_abar(g, p: EpidemicParams, margin: float = 1e-8) -> BlockMatrixAbar:
    A = as_matrix(g)
    A = A.toarray() if sparse.issparse(A) else np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    inner = p.beta * A - p.delta * np.eye(n)
    inner_eigs = np.linalg.eigvalsh(inner)
    if np.any(np.abs(inner_eigs + p.gamma) < margin):
        raise SpectrumCollisionError(
            "Ā not diagonalizable under this test: -gamma is (numerically) an eigenvalue of beta A - delta I"
        )
    Abar = np.block([[inner, np.zeros((n, n))], [p.delta * np.eye(n), -p.gamma * np.eye(n)]])
    eigvals, M = np.linalg.eig(Abar)
    cond = float(np.linalg.norm(M, 2) * np.linalg.norm(np.linalg.inv(M), 2))
    top = max(float(inner_eigs.max()), -p.gamma)
    return BlockMatrixAbar(Abar, eigvals, M, cond, top)


def bound_no_absorption(t, g, p: EpidemicParams, initial_ir_count: int, margin: float = 1e-8):
    """C sqrt(n k0) exp(max{beta lambda1 - delta, -gamma} t) bounding P(not all susceptible).

    ``k0`` counts nodes initially infected or recovered.  Only stated for the
    model without vaccination.
    """
    if p.sigma != 0:
        raise ValueError("absorption bound requires sigma = 0")
    ab = block_matrix_abar(g, p, margin)
    n = ab.matrix.shape[0] // 2
    t = np.asarray(t, dtype=np.float64)
    out = ab.condition * np.sqrt(n * initial_ir_count) * np.exp(ab.top_eigenvalue * t)
    return float(out) if out.ndim == 0 else out


def write_master_csv(path, Q: GeneratorMatrix, t_grid, V: np.ndarray) -> None:
    """CSV with columns t, P_not_final, P_not_absorbed, I_marginal_1..N."""
    from .io import write_csv

    n = Q.n_nodes
    header = ["t", "P_not_final", "P_not_absorbed"] + [f"I_marginal_{i + 1}" for i in range(n)]
    cols = np.column_stack(
        [np.asarray(t_grid), prob_not_in_final_set(Q, V), prob_not_absorbed(V), marginal_infection_probabilities(V, n)]
    )
    write_csv(path, header, cols)
