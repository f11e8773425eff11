import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from linkhe.graph import build_graph
from linkhe.heuristics import (
    HeuristicConfig,
    HeuristicKind as K,
    adamic_adar,
    batch_score,
    cn,
    hub_depressed,
    hub_promoted,
    jaccard,
    katz_truncated,
    local_clustering,
    node_clustering,
    node_link_clustering,
    parse_kinds,
    preferential_attachment,
    resource_allocation,
    salton,
    score,
    shortest_path_distance,
    simrank,
    sorensen,
    write_scores_csv,
)
from linkhe.oracle import dense_adjacency, local_clustering_dense, oracle_dense_heuristics, simrank_literal
from linkhe.synthetic import erdos_renyi, path_graph, star_graph

ALL = list(K)


def small_graphs():
    return st.builds(
        lambda n, p, seed: erdos_renyi(n, p, np.random.default_rng(seed)),
        st.integers(2, 24),
        st.sampled_from([0.05, 0.2, 0.5]),
        st.integers(0, 2**31),
    )


def test_example_pair(example_graph):
    g = example_graph
    assert cn(g, 1, 4) == 2
    assert jaccard(g, 1, 4) == 0.5
    assert sorensen(g, 1, 4) == pytest.approx(2 * 2 / 6)
    assert salton(g, 1, 4) == pytest.approx(2 / math.sqrt(8))
    assert hub_promoted(g, 1, 4) == 1.0
    assert hub_depressed(g, 1, 4) == 0.5
    assert preferential_attachment(g, 1, 4) == 8
    assert adamic_adar(g, 1, 4) == pytest.approx(2 / math.log(2))
    assert resource_allocation(g, 1, 4) == pytest.approx(1.0)


def test_degenerate_pairs(example_graph):
    g = example_graph
    empty = build_graph([], 3)
    assert cn(empty, 0, 1) == 0 and jaccard(empty, 0, 1) == 0.0
    for f in (sorensen, salton, hub_promoted, hub_depressed):
        assert f(g, 0, 1) == 0.0
        assert f(g, 1, 1) == 1.0
    assert preferential_attachment(g, 0, 1) == 0
    assert preferential_attachment(g, 1, 1) == 16
    assert jaccard(g, 5, 6) == 1.0
    assert adamic_adar(g, 2, 4) == 0.0 and resource_allocation(g, 2, 4) == 0.0
    assert node_clustering(g, 2, 4) == 0.0 and node_link_clustering(g, 2, 4) == 0.0


@pytest.mark.parametrize("d", [2, 3, 7])
def test_star_leaves_through_hub(d):
    g = star_graph(d)
    assert adamic_adar(g, 1, 2) == pytest.approx(1 / math.log(d))
    assert resource_allocation(g, 1, 2) == pytest.approx(1 / d)


def test_shortest_path():
    g = path_graph(4)
    assert shortest_path_distance(g, 0, 1, 6) == 1
    assert shortest_path_distance(g, 0, 3, 6) == 3
    two = build_graph([(0, 1), (2, 3)], 4)
    assert shortest_path_distance(two, 0, 3, 6) == 7
    assert shortest_path_distance(g, 0, 3, 2) == 3


def test_clustering():
    tri = build_graph([(0, 1), (1, 2), (0, 2)], 3)
    assert local_clustering(tri, 0) == 1.0
    assert local_clustering(star_graph(4), 0) == 0.0
    assert node_clustering(tri, 0, 1) == 1.0
    assert node_link_clustering(tri, 0, 1) == 2.0


def test_local_clustering_matches_triangle_oracle():
    rng = np.random.default_rng(5)
    for _ in range(10):
        g = erdos_renyi(30, 0.3, rng)
        for z in range(30):
            assert local_clustering(g, z) == pytest.approx(local_clustering_dense(g, z), rel=1e-12)


def test_katz_small_cases():
    g = path_graph(3)
    assert katz_truncated(g, 0, 2, HeuristicConfig(katz_beta=0.1, katz_max_len=4)) == pytest.approx(0.0102, rel=1e-12)
    assert katz_truncated(g, 0, 1, HeuristicConfig(katz_beta=0.3, katz_max_len=1)) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        HeuristicConfig(katz_beta=0.0)


def test_simrank_small_cases():
    g = star_graph(2)
    s = simrank(g, HeuristicConfig(simrank_decay=0.8, simrank_iters=1))
    assert s[1, 2] == pytest.approx(0.8)
    assert np.array_equal(np.diag(s), np.ones(3))
    ident = next(simrank_literal(dense_adjacency(g), 0.8, 0))
    assert np.array_equal(ident, np.eye(3))


def test_parse_kinds():
    assert parse_kinds("cn, AA") == [K.CN, K.AA]
    with pytest.raises(ValueError, match="valid names: cn, ja"):
        parse_kinds("cn,bogus")


@given(small_graphs(), st.data())
def test_symmetry_ranges_orderings(g, data):
    cfg = HeuristicConfig(katz_max_len=3, simrank_iters=3)
    n = g.node_count
    v = data.draw(st.integers(0, n - 1))
    u = data.draw(st.integers(0, n - 1))
    vals = {}
    for k in ALL:
        a, b = score(g, v, u, k, cfg), score(g, u, v, k, cfg)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-15), k
        assert a >= 0, k
        vals[k] = a
    for k in (K.JA, K.SORENSEN, K.SALTON, K.HPI, K.HDI, K.SIMRANK):
        assert vals[k] <= 1 + 1e-12, k
    tol = 1e-12
    assert vals[K.HDI] <= vals[K.SALTON] + tol <= vals[K.HPI] + 2 * tol
    assert vals[K.SORENSEN] <= vals[K.SALTON] + tol
    if v != u:
        # every common neighbour of distinct endpoints has degree >= 2
        assert vals[K.AA] >= vals[K.RA] - tol


@given(small_graphs(), st.data())
def test_katz_monotone(g, data):
    v = data.draw(st.integers(0, g.node_count - 1))
    u = data.draw(st.integers(0, g.node_count - 1))
    beta = data.draw(st.floats(0.01, 0.5))
    by_len = [katz_truncated(g, v, u, HeuristicConfig(katz_beta=beta, katz_max_len=L)) for L in range(1, 6)]
    assert all(a <= b for a, b in zip(by_len, by_len[1:]))
    by_beta = [katz_truncated(g, v, u, HeuristicConfig(katz_beta=b, katz_max_len=4)) for b in (beta / 2, beta, min(0.99, 2 * beta))]
    assert all(a <= b for a, b in zip(by_beta, by_beta[1:]))


def test_batch_matches_scalar_and_masks_target_edge(example_graph):
    g = example_graph
    assert batch_score(g, [(1, 4)], [K.CN, K.PA]).tolist() == [[2, 8]]
    assert batch_score(g, np.zeros((0, 2)), [K.CN]).shape == (0, 1)
    rng = np.random.default_rng(9)
    h = erdos_renyi(25, 0.25, rng)
    pairs = rng.integers(0, 25, size=(60, 2))
    pairs = np.concatenate([pairs, h.edges()[:20]])
    cfg = HeuristicConfig()
    for masked in (False, True):
        got = batch_score(h, pairs, ALL, cfg, workers=2, exclude_target_edge=masked)
        for i, (v, u) in enumerate(pairs.tolist()):
            ref = h.without_edge(v, u) if masked else h
            for j, k in enumerate(ALL):
                assert got[i, j] == pytest.approx(score(ref, v, u, k, cfg), rel=1e-12, abs=1e-15)
    masked = batch_score(g, [(1, 5)], [K.PA, K.SPD, K.CN], exclude_target_edge=True)
    assert masked.tolist() == [[3, 3, 0]]


def test_csv_format(example_graph):
    vals = batch_score(example_graph, [(1, 4)], "cn,aa")
    fh = io.StringIO()
    write_scores_csv(fh, [(1, 4)], "cn,aa", vals)
    lines = fh.getvalue().splitlines()
    assert lines[0] == "v,u,cn,aa"
    assert lines[1] == f"1,4,2,{2 / math.log(2):.9g}"
    fh = io.StringIO()
    write_scores_csv(fh, np.zeros((0, 2)), "cn", np.zeros((0, 1)))
    assert fh.getvalue() == "v,u,cn\n"


def test_oracle_agrees_on_example(example_graph):
    for k in ALL:
        assert oracle_dense_heuristics(example_graph, 1, 4, k) == pytest.approx(score(example_graph, 1, 4, k))
