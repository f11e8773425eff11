"""Small synthetic graphs and link-prediction tasks with known structure."""

from __future__ import annotations

import numpy as np

from .graph import DatasetSplit, Graph, bfs_distances, build_graph, split_edges


def erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return build_graph(np.stack([iu[keep], ju[keep]], axis=1), n)


def path_graph(n: int) -> Graph:
    return build_graph([(i, i + 1) for i in range(n - 1)], n)


def complete_graph(n: int) -> Graph:
    iu, ju = np.triu_indices(n, k=1)
    return build_graph(np.stack([iu, ju], axis=1), n)


def star_graph(leaves: int) -> Graph:
    return build_graph([(0, i) for i in range(1, leaves + 1)], leaves + 1)


def community_graph(
    n: int,
    avg_degree: float,
    communities: int,
    rng: np.random.Generator,
    mixing: float = 0.1,
) -> Graph:
    """Planted-partition graph: a fraction ``mixing`` of each node's expected
    degree goes across communities, the rest stays inside."""
    labels = np.arange(n) % communities
    rng.shuffle(labels)
    size = n / communities
    p_in = min(1.0, (1 - mixing) * avg_degree / (size - 1))
    p_out = min(1.0, mixing * avg_degree / (n - size))
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < p
    return build_graph(np.stack([iu[keep], ju[keep]], axis=1), n)


def random_features(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(size=(n, dim))


def community_split(g: Graph, rng: np.random.Generator, fractions=(0.8, 0.1, 0.1)) -> DatasetSplit:
    return split_edges(g, fractions, rng)


def planted_cn_task(
    n: int,
    rng: np.random.Generator,
    clique_size: int = 5,
    cliques: int | None = None,
    held_out: float = 0.1,
    negatives_at_distance: int | None = 3,
) -> tuple[Graph, DatasetSplit]:
    """Union of random cliques, so every edge lies in a clique and its endpoints
    share at least ``clique_size - 2`` neighbours.

    Valid/test positives are edges that still have >= 2 common neighbours in
    the training graph; valid/test negatives are non-edges with 0 common
    neighbours there.  With ``negatives_at_distance`` set, negatives are drawn
    at exactly that hop distance in the training graph when enough exist, so
    they sit structurally close to the positives but share no neighbour.
    """
    if cliques is None:
        cliques = n
    edges = []
    for _ in range(cliques):
        members = rng.choice(n, size=clique_size, replace=False)
        iu, ju = np.triu_indices(clique_size, k=1)
        edges.extend(zip(members[iu].tolist(), members[ju].tolist()))
    full = build_graph(edges, n)
    all_edges = full.edges()
    perm = rng.permutation(len(all_edges))
    k = int(round(held_out * len(all_edges)))
    train_mask = np.ones(len(all_edges), dtype=bool)
    train_mask[perm[: 2 * k]] = False

    # return held-out edges to training until every held-out edge keeps CN >= 2
    while True:
        train = build_graph(all_edges[train_mask], n)
        held = np.flatnonzero(~train_mask)
        weak = [i for i in held if len(np.intersect1d(train.neighbors(all_edges[i, 0]), train.neighbors(all_edges[i, 1]))) < 2]
        if not weak:
            break
        train_mask[weak] = True
    held = all_edges[~train_mask]
    held = held[rng.permutation(len(held))]
    half = len(held) // 2
    valid_pos, test_pos = held[:half], held[half:]

    need = len(held)
    negs = _zero_cn_negatives(full, train, need, rng, negatives_at_distance)
    split = DatasetSplit(
        train_pos=all_edges[train_mask],
        valid_pos=valid_pos,
        valid_neg=negs[:half],
        test_pos=test_pos,
        test_neg=negs[half:],
        node_count=n,
    )
    return full, split


def _zero_cn_negatives(full: Graph, train: Graph, count: int, rng, distance):
    n = full.node_count
    a = train.adjacency
    cn = (a @ a).toarray()
    iu, ju = np.triu_indices(n, k=1)
    ok = (cn[iu, ju] == 0) & (full.adjacency[iu, ju].A1 == 0)
    if distance is not None:
        dist = np.stack([bfs_distances(train, v, distance) for v in range(n)])
        near = ok & (dist[iu, ju] == distance)
        if near.sum() >= count:
            ok = near
    pool = np.flatnonzero(ok)
    if len(pool) < count:
        raise ValueError(f"only {len(pool)} zero-CN non-edges available, need {count}")
    pick = np.sort(rng.choice(pool, size=count, replace=False))
    out = np.stack([iu[pick], ju[pick]], axis=1)
    return out[rng.permutation(count)]

