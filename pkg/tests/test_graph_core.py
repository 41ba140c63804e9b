from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sirsnet.graph_core import (
    ConvergenceError,
    Graph,
    GraphError,
    apply_epsilon_weights,
    as_matrix,
    build_graph,
    circulant_regular_graph,
    complete_graph,
    graph_from_edges,
    read_edge_list,
    spectral_radius,
    write_edge_list,
)
from sirsnet.partitions import coarsest_equitable_partition, quotient_matrix, verify_equitable


def test_complete_graph_degrees():
    g = build_graph("complete", n=50)
    assert g.n == 50
    assert np.all(g.degrees == 49)


def test_circulant_regular_degree_10():
    g = build_graph("circulant_regular", n=50, degree=10)
    assert np.all(g.degrees == 10)
    assert g.is_regular()


@pytest.mark.parametrize("n,d", [(8, 3), (10, 4), (12, 5), (7, 2)])
def test_circulant_any_degree(n, d):
    assert np.all(circulant_regular_graph(n, d).degrees == d)


def test_disconnected_edge_list_names_component():
    with pytest.raises(GraphError, match="disconnected") as info:
        build_graph("edge_list", n=3, edges=[(0, 1)])
    assert info.value.component is not None


def test_self_loop_rejected():
    with pytest.raises(GraphError, match="self-loop"):
        graph_from_edges(3, [(0, 1), (1, 1), (1, 2)])


def test_asymmetric_adjacency_rejected():
    A = np.array([[0, 1, 0], [0, 0, 1], [0, 1, 0]], dtype=np.int8)
    with pytest.raises(GraphError):
        Graph(A)


def test_path_and_ring_kinds():
    assert build_graph("path", n=3).edges == [(0, 1), (1, 2)]
    assert np.all(build_graph("ring", n=5).degrees == 2)


def test_edge_list_roundtrip(tmp_path):
    g = circulant_regular_graph(9, 4)
    f = tmp_path / "g.txt"
    write_edge_list(g, f)
    h = read_edge_list(f)
    assert np.array_equal(g.dense, h.dense)


def test_edge_list_file_is_one_based(tmp_path):
    f = tmp_path / "p3.txt"
    f.write_text("# path\n1 2\n\n2 3\n")
    g = read_edge_list(f)
    assert g.edges == [(0, 1), (1, 2)]


def test_sparse_storage_above_limit():
    g = circulant_regular_graph(600, 4)
    assert spectral_radius(g).lambda1 == pytest.approx(4.0, abs=1e-9)


@pytest.mark.parametrize(
    "g,expected",
    [(complete_graph(50), 49.0), (circulant_regular_graph(50, 10), 10.0), (build_graph("path", n=3), np.sqrt(2.0))],
)
def test_spectral_radius_examples(g, expected):
    res = spectral_radius(g)
    assert res.lambda1 == pytest.approx(expected, abs=1e-9)
    assert res.residual <= 1e-10
    assert np.all(res.eigenvector > 0)


def test_spectral_radius_path3_against_eigensolver():
    # brute-force oracle: the largest eigenvalue of the 3x3 adjacency
    g = build_graph("path", n=3)
    assert spectral_radius(g).lambda1 == pytest.approx(np.linalg.eigvalsh(g.dense).max(), abs=1e-10)


def test_spectral_radius_bipartite_converges():
    # even ring: spectrum symmetric about zero, plain power iteration would oscillate
    assert spectral_radius(circulant_regular_graph(10, 2)).lambda1 == pytest.approx(2.0, abs=1e-9)


def test_spectral_radius_cap_reports_residual():
    with pytest.raises(ConvergenceError) as info:
        spectral_radius(build_graph("path", n=7), tol=1e-14, max_iter=3)
    assert info.value.iterations == 3
    assert info.value.residual > 0


def test_epsilon_one_is_identity():
    g = build_graph("path", n=5)
    p = coarsest_equitable_partition(g)
    assert np.array_equal(apply_epsilon_weights(g, p, 1.0).matrix, g.dense)


def test_single_cell_epsilon_is_identity():
    g = circulant_regular_graph(12, 4)
    p = coarsest_equitable_partition(g)
    assert p.n_cells == 1
    assert np.array_equal(apply_epsilon_weights(g, p, 0.3).matrix, g.dense)


def test_k4_two_cells_epsilon_half():
    g = complete_graph(4)
    p = verify_equitable(g, [[0, 1], [2, 3]])
    W = apply_epsilon_weights(g, p, 0.5).matrix
    for i in range(4):
        for j in range(4):
            if i == j:
                assert W[i, j] == 0
            elif (i < 2) == (j < 2):
                assert W[i, j] == 1.0
            else:
                assert W[i, j] == 0.5


def test_epsilon_greater_than_one_accepted():
    g = complete_graph(4)
    p = verify_equitable(g, [[0, 1], [2, 3]])
    assert apply_epsilon_weights(g, p, 2.5).matrix.max() == 2.5


def test_epsilon_partition_size_mismatch():
    p = coarsest_equitable_partition(complete_graph(4))
    with pytest.raises(GraphError):
        apply_epsilon_weights(complete_graph(5), p, 0.5)


def test_weighted_spectral_radius_matches_quotient():
    g = build_graph("edge_list", n=4, edges=[(0, 1), (0, 2), (0, 3)])  # star K_{1,3}
    p = coarsest_equitable_partition(g)
    for eps in (0.2, 0.5, 1.0, 1.7):
        beta = 0.7
        lam_w = spectral_radius(apply_epsilon_weights(g, p, eps)).lambda1 * beta
        lam_q = spectral_radius(quotient_matrix(p, beta, eps)).lambda1
        assert lam_w == pytest.approx(lam_q, abs=1e-9)


@st.composite
def connected_graphs(draw, max_n=9):
    n = draw(st.integers(2, max_n))
    # random spanning tree then extra edges keeps the graph connected
    edges = {(draw(st.integers(0, i - 1)), i) for i in range(1, n)}
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
    edges |= {(min(u, v), max(u, v)) for u, v in extra if u != v}
    return graph_from_edges(n, sorted(edges))


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_rayleigh_bounds(g):
    lam = spectral_radius(g).lambda1
    assert g.degrees.mean() - 1e-9 <= lam <= g.degrees.max() + 1e-9


@settings(max_examples=40, deadline=None)
@given(connected_graphs(), st.floats(0.1, 10.0))
def test_scaling(g, c):
    lam = spectral_radius(g).lambda1
    lam_c = spectral_radius(c * as_matrix(g)).lambda1
    assert lam_c == pytest.approx(c * lam, abs=1e-8 * max(1.0, c))


@settings(max_examples=40, deadline=None)
@given(connected_graphs())
def test_matches_dense_eigensolver(g):
    assert spectral_radius(g).lambda1 == pytest.approx(np.linalg.eigvalsh(g.dense).max(), abs=1e-8)
