"""Equitable partitions: verification, coarsest-partition detection, quotients."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph_core import Graph

__all__ = [
    "EquitablePartition",
    "NotEquitableError",
    "QuotientMatrix",
    "verify_equitable",
    "refine_partition",
    "coarsest_equitable_partition",
    "quotient_matrix",
    "read_partition",
    "write_partition",
]


class NotEquitableError(ValueError):
    """Two nodes of one cell see different neighbour counts in some cell."""

    def __init__(self, cell: int, u: int, v: int, target: int, count_u: int, count_v: int):
        super().__init__(
            f"cell {cell} is not equitable: node {u} has {count_u} neighbours in cell "
            f"{target} but node {v} has {count_v}"
        )
        self.cell, self.u, self.v, self.target = cell, u, v, target
        self.count_u, self.count_v = count_u, count_v


@dataclass(frozen=True, eq=False)
class EquitablePartition:
    cells: tuple[tuple[int, ...], ...]
    degree_matrix: np.ndarray = field(repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def cell_sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.cells], dtype=np.int64)

    @property
    def internal_degrees(self) -> np.ndarray:
        return np.diag(self.degree_matrix).copy()

    @property
    def labels(self) -> np.ndarray:
        """Cell index of every node."""
        out = np.empty(int(self.cell_sizes.sum()), dtype=np.int64)
        for h, cell in enumerate(self.cells):
            out[list(cell)] = h
        return out

    def expand(self, cell_values: np.ndarray) -> np.ndarray:
        """Lift per-cell values to per-node values."""
        return np.asarray(cell_values)[self.labels]

    def cell_means(self, node_values: np.ndarray) -> np.ndarray:
        node_values = np.asarray(node_values, dtype=float)
        return np.array([node_values[list(c)].mean() for c in self.cells])

    def __eq__(self, other):
        if not isinstance(other, EquitablePartition):
            return NotImplemented
        return self.cells == other.cells and np.array_equal(self.degree_matrix, other.degree_matrix)

    def __hash__(self):
        return hash(self.cells)


@dataclass(frozen=True, eq=False)
class QuotientMatrix:
    """Infection operator on cells: ``beta*d_h`` on the diagonal, ``eps*beta*d_hm`` off it."""

    matrix: np.ndarray
    partition: EquitablePartition = field(repr=False)
    beta: float
    epsilon: float


def _normalise_cells(cells: Iterable[Iterable[int]], n: int) -> tuple[tuple[int, ...], ...]:
    cells = [tuple(sorted(int(v) for v in c)) for c in cells]
    if any(len(c) == 0 for c in cells):
        raise ValueError("partition cells must be non-empty")
    flat = [v for c in cells for v in c]
    if sorted(flat) != list(range(n)):
        raise ValueError(f"cells must partition the node set 0..{n - 1}")
    return tuple(sorted(cells, key=lambda c: c[0]))


def _neighbour_counts(g: Graph, labels: np.ndarray, n_cells: int) -> np.ndarray:
    # counts[v, j] = number of neighbours of v inside cell j
    onehot = np.zeros((g.n, n_cells))
    onehot[np.arange(g.n), labels] = 1.0
    return np.rint(g.csr @ onehot).astype(np.int64)


def verify_equitable(g: Graph, cells: Sequence[Iterable[int]]) -> EquitablePartition:
    """Check the equitable property and return the partition with its degree matrix.

    Raises
    ------
    NotEquitableError
        With a witness pair of nodes in one cell whose neighbour counts into
        some target cell differ.
    """
    cells = _normalise_cells(cells, g.n)
    labels = np.empty(g.n, dtype=np.int64)
    for h, c in enumerate(cells):
        labels[list(c)] = h
    counts = _neighbour_counts(g, labels, len(cells))
    D = np.empty((len(cells), len(cells)), dtype=np.int64)
    for h, c in enumerate(cells):
        block = counts[list(c)]
        first = block[0]
        bad = np.nonzero(np.any(block != first, axis=1))[0]
        if bad.size:
            k = int(bad[0])
            j = int(np.nonzero(block[k] != first)[0][0])
            raise NotEquitableError(h, c[0], c[k], j, int(first[j]), int(block[k, j]))
        D[h] = first
    return EquitablePartition(cells, D)


def refine_partition(g: Graph, cells: Sequence[Iterable[int]] | None = None) -> EquitablePartition:
    """Colour refinement to the coarsest equitable partition finer than ``cells``.

    Each round splits nodes by (current cell, multiset of neighbour cells)
    until nothing changes.  Cells are ordered by their smallest node id.
    """
    if cells is None:
        cells = [range(g.n)]
    cells = _normalise_cells(cells, g.n)
    labels = np.empty(g.n, dtype=np.int64)
    for h, c in enumerate(cells):
        labels[list(c)] = h
    n_cells = len(cells)
    while True:
        counts = _neighbour_counts(g, labels, n_cells)
        signatures: dict[tuple, int] = {}
        new = np.empty_like(labels)
        # node order fixes the new labels by smallest member
        for v in range(g.n):
            key = (int(labels[v]), *counts[v].tolist())
            new[v] = signatures.setdefault(key, len(signatures))
        if len(signatures) == n_cells:
            break
        labels, n_cells = new, len(signatures)
    groups: list[list[int]] = [[] for _ in range(n_cells)]
    for v, h in enumerate(labels):
        groups[h].append(v)
    return verify_equitable(g, groups)


def coarsest_equitable_partition(g: Graph) -> EquitablePartition:
    return refine_partition(g, None)


def quotient_matrix(p: EquitablePartition, beta: float, epsilon: float = 1.0) -> QuotientMatrix:
    if beta <= 0 or epsilon <= 0:
        raise ValueError("beta and epsilon must be positive")
    D = p.degree_matrix.astype(np.float64)
    Q = epsilon * beta * D
    np.fill_diagonal(Q, beta * np.diag(D))
    return QuotientMatrix(Q, p, float(beta), float(epsilon))


def read_partition(path: str | Path) -> list[list[int]]:
    """One cell per line, 1-based whitespace-separated node ids; '#' lines skipped."""
    cells = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cells.append([int(tok) - 1 for tok in line.split()])
    return cells


def write_partition(p: EquitablePartition, path: str | Path) -> None:
    Path(path).write_text("".join(" ".join(str(v + 1) for v in c) + "\n" for c in p.cells))
