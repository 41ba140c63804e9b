"""Graph construction, validation and Perron-root computations.

Nodes are 0-based everywhere in the Python API.  The on-disk edge-list
format is 1-based (see :func:`read_edge_list`).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import sparse

__all__ = [
    "DENSE_LIMIT",
    "Graph",
    "GraphError",
    "WeightedAdjacency",
    "SpectralResult",
    "ConvergenceError",
    "build_graph",
    "complete_graph",
    "circulant_regular_graph",
    "graph_from_edges",
    "read_edge_list",
    "write_edge_list",
    "spectral_radius",
    "apply_epsilon_weights",
    "as_matrix",
]

# Above this size adjacency is kept as CSR instead of a dense array.
DENSE_LIMIT = 512


class GraphError(ValueError):
    """Invalid graph input (disconnected, self-loop, bad node id, ...)."""

    def __init__(self, message: str, component: Sequence[int] | None = None):
        super().__init__(message)
        self.component = None if component is None else tuple(component)


class ConvergenceError(RuntimeError):
    """An iterative method hit its iteration cap."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, simple, connected graph.

    Use :func:`build_graph` or the ``*_graph`` helpers rather than calling
    the constructor directly; they normalise the adjacency storage.
    """

    adjacency: np.ndarray | sparse.csr_array

    def __post_init__(self):
        A = self.adjacency
        n = A.shape[0]
        if A.ndim != 2 or A.shape[1] != n:
            raise GraphError(f"adjacency must be square, got shape {A.shape}")
        if n < 1:
            raise GraphError("graph needs at least one node")
        if sparse.issparse(A):
            if (abs(A - A.T)).nnz:
                raise GraphError("adjacency is not symmetric")
            if np.any(A.diagonal() != 0):
                raise GraphError("self-loops are not allowed")
            if np.any((A.data != 0) & (A.data != 1)):
                raise GraphError("adjacency entries must be 0 or 1")
        else:
            if not np.array_equal(A, A.T):
                raise GraphError("adjacency is not symmetric")
            if np.any(np.diag(A) != 0):
                raise GraphError("self-loops are not allowed")
            if not np.isin(A, (0, 1)).all():
                raise GraphError("adjacency entries must be 0 or 1")
        comp = _component_of(self.csr, 0)
        if len(comp) != n:
            missing = sorted(set(range(n)) - set(comp))
            raise GraphError(
                f"graph is disconnected: node 0 reaches {len(comp)} of {n} nodes; "
                f"unreached component starts at node {missing[0]}",
                component=_component_of(self.csr, missing[0]),
            )

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @cached_property
    def csr(self) -> sparse.csr_array:
        return sparse.csr_array(self.adjacency, dtype=np.float64)

    @cached_property
    def dense(self) -> np.ndarray:
        A = self.adjacency
        return (A.toarray() if sparse.issparse(A) else np.asarray(A)).astype(np.float64)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.csr.indptr).astype(np.int64)

    def neighbors(self, i: int) -> np.ndarray:
        c = self.csr
        return c.indices[c.indptr[i]:c.indptr[i + 1]]

    @property
    def edges(self) -> list[tuple[int, int]]:
        c = sparse.triu(self.csr, k=1).tocoo()
        return sorted(zip(c.row.tolist(), c.col.tolist()))

    def is_regular(self) -> bool:
        return bool(np.all(self.degrees == self.degrees[0]))


@dataclass(frozen=True, eq=False)
class WeightedAdjacency:
    """Adjacency with weight 1 inside partition cells and ``epsilon`` across."""

    matrix: np.ndarray
    epsilon: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SpectralResult:
    lambda1: float
    eigenvector: np.ndarray = field(repr=False)
    iterations: int
    residual: float


def _component_of(csr: sparse.csr_array, start: int) -> list[int]:
    seen = np.zeros(csr.shape[0], dtype=bool)
    seen[start] = True
    queue = deque([start])
    out = [start]
    indptr, indices = csr.indptr, csr.indices
    while queue:
        u = queue.popleft()
        for w in indices[indptr[u]:indptr[u + 1]]:
            if not seen[w]:
                seen[w] = True
                out.append(int(w))
                queue.append(int(w))
    return sorted(out)


def _store(A: np.ndarray | sparse.spmatrix) -> np.ndarray | sparse.csr_array:
    n = A.shape[0]
    if n > DENSE_LIMIT:
        return sparse.csr_array(A, dtype=np.int8)
    if sparse.issparse(A):
        A = A.toarray()
    return np.asarray(A, dtype=np.int8)


def complete_graph(n: int) -> Graph:
    if n < 2:
        raise GraphError("complete graph needs n >= 2")
    if n > DENSE_LIMIT:
        A = sparse.csr_array(np.ones((n, n), dtype=np.int8) - sparse.eye(n, dtype=np.int8))
        return Graph(_store(A))
    return Graph(_store(np.ones((n, n), dtype=np.int8) - np.eye(n, dtype=np.int8)))


def circulant_regular_graph(n: int, degree: int) -> Graph:
    """``degree``-regular circulant graph: node i joined to i +- 1, ..., i +- degree//2.

    Odd degrees additionally join antipodal nodes, which needs ``n`` even.
    """
    if n < 2:
        raise GraphError("circulant graph needs n >= 2")
    if not 1 <= degree < n:
        raise GraphError(f"degree must lie in [1, {n - 1}], got {degree}")
    if degree % 2 and n % 2:
        raise GraphError("odd degree needs an even number of nodes")
    offsets = list(range(1, degree // 2 + 1))
    if degree % 2:
        offsets.append(n // 2)
    rows, cols = [], []
    idx = np.arange(n)
    for o in offsets:
        rows += [idx, (idx + o) % n]
        cols += [(idx + o) % n, idx]
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    A = sparse.coo_array((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n)).tocsr()
    # antipodal offset n/2 gets added twice per pair
    A.data[:] = 1
    return Graph(_store(A))


def graph_from_edges(n: int, edges: Iterable[tuple[int, int]]) -> Graph:
    """Graph on nodes ``0..n-1`` from 0-based edge pairs; duplicates are merged."""
    if n < 1:
        raise GraphError("n must be positive")
    rows, cols = [], []
    for u, v in edges:
        u, v = int(u), int(v)
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge ({u}, {v}) references a node outside 0..{n - 1}")
        if u == v:
            raise GraphError(f"self-loop at node {u}")
        rows += [u, v]
        cols += [v, u]
    A = sparse.coo_array(
        (np.ones(len(rows), dtype=np.int8), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(n, n),
    ).tocsr()
    A.data[:] = 1
    return Graph(_store(A))


def build_graph(kind: str, **params) -> Graph:
    """Build a graph by kind.

    Parameters
    ----------
    kind : {"complete", "circulant_regular", "ring", "path", "edge_list"}
    **params
        ``complete``, ``ring``, ``path``: ``n``.  ``circulant_regular``: ``n``, ``degree``.
        ``edge_list``: ``n``, ``edges`` (0-based pairs) or ``path`` (1-based file).

    Raises
    ------
    GraphError
        Disconnected result, self-loops, or malformed parameters.
    """
    if kind == "complete":
        return complete_graph(int(params["n"]))
    if kind == "circulant_regular":
        return circulant_regular_graph(int(params["n"]), int(params["degree"]))
    if kind == "ring":
        return circulant_regular_graph(int(params["n"]), 2)
    if kind == "path":
        n = int(params["n"])
        return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)])
    if kind == "edge_list":
        if params.get("path") is not None:
            return read_edge_list(params["path"], n=params.get("n"))
        return graph_from_edges(int(params["n"]), params["edges"])
    raise GraphError(f"unknown graph kind {kind!r}")


def read_edge_list(path: str | Path, n: int | None = None) -> Graph:
    """Read a whitespace-separated ``u v`` file with 1-based node ids.

    Lines starting with ``#`` and blank lines are skipped.  Without ``n`` the
    node count is the largest id in the file.
    """
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected 'u v', got {line!r}")
        u, v = int(parts[0]), int(parts[1])
        if u < 1 or v < 1:
            raise GraphError(f"{path}:{lineno}: node ids are 1-based")
        edges.append((u - 1, v - 1))
    if n is None:
        n = max((max(e) for e in edges), default=-1) + 1
    return graph_from_edges(int(n), edges)


def write_edge_list(g: Graph, path: str | Path) -> None:
    lines = [f"# n={g.n}"] + [f"{u + 1} {v + 1}" for u, v in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


MatrixLike = Union[Graph, WeightedAdjacency, np.ndarray, sparse.sparray, sparse.spmatrix]


def as_matrix(m) -> np.ndarray | sparse.csr_array:
    """Float matrix view of a graph, weighted adjacency, quotient or raw array."""
    if isinstance(m, Graph):
        return m.csr if m.n > DENSE_LIMIT else m.dense
    if isinstance(m, WeightedAdjacency):
        return m.matrix
    if hasattr(m, "matrix") and isinstance(getattr(m, "matrix"), np.ndarray):
        return m.matrix
    if sparse.issparse(m):
        return sparse.csr_array(m, dtype=np.float64)
    return np.asarray(m, dtype=np.float64)


def spectral_radius(g, tol: float = 1e-10, max_iter: int = 100_000) -> SpectralResult:
    """Perron root of a non-negative irreducible matrix by shifted power iteration.

    Iterates on ``M + c I`` with ``c`` half the largest row sum, which makes
    the iteration converge on bipartite graphs too (their spectrum is
    symmetric about zero).  The estimate is the Rayleigh quotient on ``M``
    and the loop stops once ``max|M v - lambda v| <= tol`` for unit ``v``.

    Works for non-symmetric inputs (quotient matrices); ``v`` is then the
    right Perron vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = as_matrix(g)
    n = M.shape[0]
    if n == 1:
        lam = float(M[0, 0]) if not sparse.issparse(M) else float(M.toarray()[0, 0])
        return SpectralResult(lam, np.ones(1), 0, 0.0)
    row_sums = np.asarray(M.sum(axis=1)).ravel()
    if np.any(np.asarray(M.min()) < 0):
        raise ValueError("matrix must be non-negative")
    shift = 0.5 * float(row_sums.max())
    v = np.full(n, 1.0 / np.sqrt(n))
    lam, residual = 0.0, np.inf
    for it in range(1, max_iter + 1):
        Mv = M @ v
        lam = float(v @ Mv)
        residual = float(np.max(np.abs(Mv - lam * v)))
        if residual <= tol:
            return SpectralResult(lam, v.copy(), it, residual)
        w = Mv + shift * v
        v = w / np.linalg.norm(w)
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations (last residual {residual:.3e})",
        residual=residual,
        iterations=max_iter,
    )


def apply_epsilon_weights(g: Graph, partition, epsilon: float) -> WeightedAdjacency:
    """Scale edges running between different partition cells by ``epsilon``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    labels = np.asarray(partition.labels)
    if labels.shape[0] != g.n:
        raise GraphError(f"partition covers {labels.shape[0]} nodes, graph has {g.n}")
    A = g.dense
    cross = labels[:, None] != labels[None, :]
    W = np.where(cross, epsilon * A, A)
    return WeightedAdjacency(W, float(epsilon))
