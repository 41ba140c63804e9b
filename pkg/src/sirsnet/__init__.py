"""SIRS epidemics with vaccination on networks: exact chain, simulation, mean-field."""
from __future__ import annotations

__version__ = "0.1.0"

from .graph_core import (  # noqa: E402
    ConvergenceError,
    Graph,
    GraphError,
    WeightedAdjacency,
    build_graph,
    circulant_regular_graph,
    complete_graph,
    graph_from_edges,
    spectral_radius,
)
from .params import EpidemicParams  # noqa: E402
from .partitions import (  # noqa: E402
    EquitablePartition,
    coarsest_equitable_partition,
    quotient_matrix,
    verify_equitable,
)

__all__ = [
    "__version__",
    "ConvergenceError",
    "Graph",
    "GraphError",
    "WeightedAdjacency",
    "build_graph",
    "circulant_regular_graph",
    "complete_graph",
    "graph_from_edges",
    "spectral_radius",
    "EpidemicParams",
    "EquitablePartition",
    "coarsest_equitable_partition",
    "quotient_matrix",
    "verify_equitable",
]
