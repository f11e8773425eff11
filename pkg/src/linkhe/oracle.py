"""Dense brute-force reference implementations, for graphs of at most ~64 nodes.

Nothing here touches the CSR arrays beyond reading the edge set once; every
quantity is recomputed from a dense 0/1 adjacency matrix and Python sets.
"""

from __future__ import annotations

import math

import numpy as np

from .graph import Graph
from .heuristics import HeuristicConfig, HeuristicKind


def dense_adjacency(g: Graph) -> np.ndarray:
    a = np.zeros((g.node_count, g.node_count))
    for v, u in g.edges().tolist():
        a[v, u] = a[u, v] = 1.0
    return a


def _sets(a: np.ndarray) -> list[set[int]]:
    return [set(np.flatnonzero(row).tolist()) for row in a]


def _clustering(a, sets, z):
    k = len(sets[z])
    if k <= 1:
        return 0.0
    links = sum(a[j, i] for j in sets[z] for i in sets[z] if j < i)
    return 2.0 * links / (k * (k - 1))


def floyd_warshall(a: np.ndarray, cap: int) -> np.ndarray:
    n = len(a)
    d = np.where(a > 0, 1.0, np.inf)
    np.fill_diagonal(d, 0.0)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return np.where(d > cap, cap + 1, d).astype(np.int64)


def katz_dense(a: np.ndarray, beta: float, max_len: int) -> np.ndarray:
    total = np.zeros_like(a)
    power = np.eye(len(a))
    for l in range(1, max_len + 1):
        power = power @ a
        total += beta**l * power
    return total


def simrank_literal(a: np.ndarray, decay: float, iters: int, pin_diagonal: bool = True):
    """Per-entry SimRank iteration; yields the identity start, then the
    matrix after every iteration."""
    n = len(a)
    nbrs = [np.flatnonzero(row).tolist() for row in a]
    s = np.eye(n)
    yield s.copy()
    for _ in range(iters):
        nxt = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if not nbrs[i] or not nbrs[j]:
                    continue
                acc = 0.0
                for b in nbrs[j]:
                    for c in nbrs[i]:
                        acc += s[c, b]
                nxt[i, j] = decay / (len(nbrs[i]) * len(nbrs[j])) * acc
        if pin_diagonal:
            np.fill_diagonal(nxt, 1.0)
        s = nxt
        yield s.copy()


class DenseOracle:
    """Brute-force heuristics for one graph, from a dense adjacency matrix and
    Python sets.  Distance, Katz and SimRank tables are built on first use."""

    def __init__(self, g: Graph, cfg: HeuristicConfig = HeuristicConfig()):
        self.cfg = cfg
        self.a = dense_adjacency(g)
        self.sets = _sets(self.a)
        self._dist = self._katz = self._simrank = None
        self._cc = {}

    def clustering(self, z: int) -> float:
        if z not in self._cc:
            self._cc[z] = _clustering(self.a, self.sets, z)
        return self._cc[z]

    def score(self, v: int, u: int, kind) -> float:
        kind = HeuristicKind.parse(kind)
        a, sets, cfg = self.a, self.sets, self.cfg
        gv, gu = sets[v], sets[u]
        common = gv & gu
        c = len(common)
        dv, du = len(gv), len(gu)
        K = HeuristicKind
        if kind is K.CN:
            return float(c)
        if kind is K.JA:
            union = len(gv | gu)
            return c / union if union else 0.0
        if kind is K.AA:
            return sum(1.0 / math.log(len(sets[z])) for z in sorted(common) if len(sets[z]) > 1)
        if kind is K.RA:
            return sum(1.0 / len(sets[z]) for z in sorted(common))
        if kind is K.SORENSEN:
            return 2.0 * c / (dv + du) if dv + du else 0.0
        if kind is K.SALTON:
            return c / math.sqrt(dv * du) if dv * du else 0.0
        if kind is K.HPI:
            return c / min(dv, du) if min(dv, du) else 0.0
        if kind is K.HDI:
            return c / max(dv, du) if max(dv, du) else 0.0
        if kind is K.PA:
            return float(dv * du)
        if kind is K.SPD:
            if self._dist is None:
                self._dist = floyd_warshall(a, cfg.spd_cap)
            return float(self._dist[v, u])
        if kind is K.NODE_CC:
            return sum(self.clustering(z) for z in sorted(common))
        if kind is K.NODE_LINK_CC:
            total = 0.0
            for z in sorted(common):
                k = len(sets[z])
                if k <= 1:
                    continue
                cz = self.clustering(z)
                total += len(gv & sets[z]) / (k - 1) * cz + len(gu & sets[z]) / (k - 1) * cz
            return total
        if kind is K.KATZ:
            if self._katz is None:
                self._katz = katz_dense(a, cfg.katz_beta, cfg.katz_max_len)
            return float(self._katz[v, u])
        if kind is K.SIMRANK:
            if self._simrank is None:
                for self._simrank in simrank_literal(a, cfg.simrank_decay, cfg.simrank_iters):
                    pass
            return float(self._simrank[v, u])
        raise AssertionError(kind)


def oracle_dense_heuristics(g: Graph, v: int, u: int, kind, cfg: HeuristicConfig = HeuristicConfig()) -> float:
    return DenseOracle(g, cfg).score(v, u, kind)


def local_clustering_dense(g: Graph, z: int) -> float:
    a = dense_adjacency(g)
    # triangles through z from the cube of the adjacency matrix
    k = a[z].sum()
    if k <= 1:
        return 0.0
    tri = (a @ a @ a)[z, z] / 2.0
    return 2.0 * tri / (k * (k - 1))
