"""Pairwise link heuristics on CSR graphs.

All functions take an immutable :class:`~linkhe.graph.Graph` and read it only.
Ratio heuristics return 0 whenever their denominator is 0.
"""

from __future__ import annotations

import enum
import math
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graph import Graph, _check_node, bfs_distances, common_neighbor_ids


class HeuristicKind(str, enum.Enum):
    CN = "cn"
    JA = "ja"
    AA = "aa"
    RA = "ra"
    SORENSEN = "sorensen"
    SALTON = "salton"
    HPI = "hpi"
    HDI = "hdi"
    PA = "pa"
    SPD = "spd"
    NODE_CC = "ncc"
    NODE_LINK_CC = "nlcc"
    KATZ = "katz"
    SIMRANK = "simrank"

    @classmethod
    def parse(cls, token: "str | HeuristicKind") -> "HeuristicKind":
        if isinstance(token, cls):
            return token
        t = str(token).strip().lower()
        for kind in cls:
            if t in (kind.value, kind.name.lower()):
                return kind
        valid = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown heuristic {token!r}; valid names: {valid}")

    @property
    def is_integer(self) -> bool:
        return self in INTEGER_KINDS


INTEGER_KINDS = frozenset({HeuristicKind.CN, HeuristicKind.PA, HeuristicKind.SPD})


def parse_kinds(tokens: "str | Sequence") -> list[HeuristicKind]:
    if isinstance(tokens, str):
        tokens = [t for t in tokens.split(",") if t.strip()]
    return [HeuristicKind.parse(t) for t in tokens]


@dataclass(frozen=True)
class HeuristicConfig:
    katz_beta: float = 0.05
    katz_max_len: int = 4
    simrank_decay: float = 0.8
    simrank_iters: int = 5
    spd_cap: int = 6
    simrank_max_nodes: int = 5000

    def __post_init__(self):
        if not 0.0 < self.katz_beta < 1.0:
            raise ValueError(f"katz_beta must lie in (0, 1), got {self.katz_beta}")
        if self.katz_max_len < 1:
            raise ValueError(f"katz_max_len must be >= 1, got {self.katz_max_len}")
        if not 0.0 < self.simrank_decay < 1.0:
            raise ValueError(f"simrank_decay must lie in (0, 1), got {self.simrank_decay}")
        if self.simrank_iters < 1:
            raise ValueError(f"simrank_iters must be >= 1, got {self.simrank_iters}")
        if self.spd_cap < 1:
            raise ValueError(f"spd_cap must be >= 1, got {self.spd_cap}")


# ---------------------------------------------------------------------------
# common-neighbour family


def cn(g: Graph, v: int, u: int) -> int:
    return len(common_neighbor_ids(g, v, u))


def jaccard(g: Graph, v: int, u: int) -> float:
    c = cn(g, v, u)
    union = g.degree(v) + g.degree(u) - c
    return c / union if union else 0.0


def adamic_adar(g: Graph, v: int, u: int) -> float:
    deg = g.degrees
    # a common neighbour in a simple graph has degree >= 2, so ln > 0
    # a degree-1 common neighbour only occurs for v == u; it contributes nothing
    return float(sum(1.0 / math.log(deg[z]) for z in common_neighbor_ids(g, v, u) if deg[z] > 1))


def resource_allocation(g: Graph, v: int, u: int) -> float:
    deg = g.degrees
    return float(sum(1.0 / deg[z] for z in common_neighbor_ids(g, v, u)))


def sorensen(g: Graph, v: int, u: int) -> float:
    s = g.degree(v) + g.degree(u)
    return 2.0 * cn(g, v, u) / s if s else 0.0


def salton(g: Graph, v: int, u: int) -> float:
    p = g.degree(v) * g.degree(u)
    return cn(g, v, u) / math.sqrt(p) if p else 0.0


def hub_promoted(g: Graph, v: int, u: int) -> float:
    m = min(g.degree(v), g.degree(u))
    return cn(g, v, u) / m if m else 0.0


def hub_depressed(g: Graph, v: int, u: int) -> float:
    m = max(g.degree(v), g.degree(u))
    return cn(g, v, u) / m if m else 0.0


def preferential_attachment(g: Graph, v: int, u: int) -> int:
    return g.degree(v) * g.degree(u)


def shortest_path_distance(g: Graph, v: int, u: int, cap: int) -> int:
    """BFS hop count; cap + 1 when u is not reached within cap hops."""
    if v == u:
        return 0
    _check_node(g, u)
    return int(bfs_distances(g, v, cap)[u])


# ---------------------------------------------------------------------------
# clustering-coefficient heuristics


_CLUSTERING_CACHE: "weakref.WeakKeyDictionary[Graph, np.ndarray]" = weakref.WeakKeyDictionary()


def clustering_coefficients(g: Graph) -> np.ndarray:
    """C(z) for every node: edges among Γ_z over k(k-1)/2 (0 when k <= 1)."""
    c = _CLUSTERING_CACHE.get(g)
    if c is None:
        a = g.adjacency
        k = g.degrees.astype(np.float64)
        # (A A) . A counts each edge among a node's neighbours twice
        links = np.asarray((a @ a).multiply(a).sum(axis=1)).ravel() / 2.0
        c = np.divide(2.0 * links, k * (k - 1), out=np.zeros(g.node_count), where=k > 1)
        _CLUSTERING_CACHE[g] = c
    return c


def local_clustering(g: Graph, z: int) -> float:
    _check_node(g, z)
    return float(clustering_coefficients(g)[z])


def node_clustering(g: Graph, v: int, u: int) -> float:
    zs = common_neighbor_ids(g, v, u)
    return float(clustering_coefficients(g)[zs].sum()) if len(zs) else 0.0


def _overlap_with(g: Graph, zs: np.ndarray, v: int) -> np.ndarray:
    """|Γ_z ∩ Γ_v| for each z in zs."""
    member = np.zeros(g.node_count, dtype=np.int64)
    member[g.neighbors(v)] = 1
    counts = g.degrees[zs]
    idx = np.repeat(g.offsets[zs] - np.cumsum(counts) + counts, counts) + np.arange(counts.sum())
    hits = member[g.neighbor_ids[idx]]
    return np.add.reduceat(hits, np.cumsum(counts) - counts) if len(hits) else np.zeros(len(zs), dtype=np.int64)


def node_link_clustering(g: Graph, v: int, u: int) -> float:
    zs = common_neighbor_ids(g, v, u)
    if not len(zs):
        return 0.0
    k = g.degrees[zs].astype(np.float64)
    shared = (_overlap_with(g, zs, v) + _overlap_with(g, zs, u)).astype(np.float64)
    weight = np.divide(shared, k - 1, out=np.zeros(len(zs)), where=k > 1)
    return float((weight * clustering_coefficients(g)[zs]).sum())


# ---------------------------------------------------------------------------
# walk-based


def katz_truncated(g: Graph, v: int, u: int, cfg: HeuristicConfig = HeuristicConfig()) -> float:
    """Sum over walk lengths l = 1..L of beta**l times the number of v-u walks."""
    _check_node(g, u)
    walks = np.zeros(g.node_count)
    walks[v] = 1.0
    score = 0.0
    weight = 1.0
    for _ in range(cfg.katz_max_len):
        walks = np.bincount(g.row_ids, weights=walks[g.neighbor_ids], minlength=g.node_count)
        weight *= cfg.katz_beta
        score += weight * walks[u]
    return float(score)


def simrank(g: Graph, cfg: HeuristicConfig = HeuristicConfig()) -> np.ndarray:
    """All-pairs SimRank with the diagonal held at 1 after every iteration.

    Returns a dense symmetric (n, n) array.
    """
    n = g.node_count
    if n > cfg.simrank_max_nodes:
        raise MemoryError(
            f"simrank on {n} nodes needs an {n}x{n} dense matrix "
            f"(~{8 * n * n / 2**30:.1f} GiB); limit is {cfg.simrank_max_nodes} nodes"
        )
    deg = g.degrees.astype(np.float64)
    inv = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
    walk = sp.diags(inv) @ g.adjacency
    s = np.eye(n)
    diag = np.arange(n)
    for _ in range(cfg.simrank_iters):
        s = cfg.simrank_decay * np.asarray(walk @ (walk @ s).T)
        s = 0.5 * (s + s.T)
        s[diag, diag] = 1.0
    return s


def simrank_score(g: Graph, v: int, u: int, cfg: HeuristicConfig = HeuristicConfig()) -> float:
    return float(simrank(g, cfg)[v, u])


# ---------------------------------------------------------------------------
# dispatch


def score(g: Graph, v: int, u: int, kind, cfg: HeuristicConfig = HeuristicConfig()) -> float:
    kind = HeuristicKind.parse(kind)
    K = HeuristicKind
    if kind is K.SPD:
        return float(shortest_path_distance(g, v, u, cfg.spd_cap))
    if kind is K.KATZ:
        return katz_truncated(g, v, u, cfg)
    if kind is K.SIMRANK:
        return simrank_score(g, v, u, cfg)
    return float(_PAIR_FUNCS[kind](g, v, u))


_PAIR_FUNCS = {
    HeuristicKind.CN: cn,
    HeuristicKind.JA: jaccard,
    HeuristicKind.AA: adamic_adar,
    HeuristicKind.RA: resource_allocation,
    HeuristicKind.SORENSEN: sorensen,
    HeuristicKind.SALTON: salton,
    HeuristicKind.HPI: hub_promoted,
    HeuristicKind.HDI: hub_depressed,
    HeuristicKind.PA: preferential_attachment,
    HeuristicKind.NODE_CC: node_clustering,
    HeuristicKind.NODE_LINK_CC: node_link_clustering,
}

# kinds computable for a whole batch from sparse row products and degrees
_VECTOR_KINDS = frozenset(
    {
        HeuristicKind.CN,
        HeuristicKind.JA,
        HeuristicKind.AA,
        HeuristicKind.RA,
        HeuristicKind.SORENSEN,
        HeuristicKind.SALTON,
        HeuristicKind.HPI,
        HeuristicKind.HDI,
        HeuristicKind.PA,
    }
)


def _safe_div(num, den):
    num, den = np.broadcast_arrays(np.asarray(num, dtype=np.float64), np.asarray(den, dtype=np.float64))
    return np.divide(num, den, out=np.zeros_like(num), where=den != 0)


def _vector_columns(g, vs, us, kinds, exclude_target_edge):
    a = g.adjacency
    deg = g.degrees.astype(np.float64)
    with np.errstate(divide="ignore"):
        aa_w = np.where(deg > 1, 1.0 / np.log(np.maximum(deg, 2)), 0.0)
    ra_w = _safe_div(1.0, deg)
    rows_v, rows_u = a[vs], a[us]
    common = rows_v.multiply(rows_u)
    cn_ = np.asarray(common.sum(axis=1)).ravel()
    dv, du = deg[vs], deg[us]
    if exclude_target_edge:
        linked = np.asarray(a[vs, us]).ravel() > 0
        dv = dv - linked
        du = du - linked
    out = {}
    for kind in kinds:
        K = HeuristicKind
        if kind is K.CN:
            col = cn_
        elif kind is K.JA:
            col = _safe_div(cn_, dv + du - cn_)
        elif kind is K.AA:
            col = np.asarray(common @ aa_w).ravel()
        elif kind is K.RA:
            col = np.asarray(common @ ra_w).ravel()
        elif kind is K.SORENSEN:
            col = _safe_div(2.0 * cn_, dv + du)
        elif kind is K.SALTON:
            col = _safe_div(cn_, np.sqrt(dv * du))
        elif kind is K.HPI:
            col = _safe_div(cn_, np.minimum(dv, du))
        elif kind is K.HDI:
            col = _safe_div(cn_, np.maximum(dv, du))
        else:
            col = dv * du
        out[kind] = col
    return out


def batch_score(
    g: Graph,
    pairs,
    kinds,
    cfg: HeuristicConfig = HeuristicConfig(),
    workers: int = 1,
    exclude_target_edge: bool = False,
) -> np.ndarray:
    """Score every pair under every kind; returns a (len(pairs), len(kinds)) array.

    With ``exclude_target_edge`` a pair that is itself an edge is scored on
    the graph with that edge removed, so training positives do not see their
    own label.
    """
    kinds = parse_kinds(kinds)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    out = np.zeros((len(pairs), len(kinds)))
    if not len(pairs) or not kinds:
        return out
    vs, us = pairs[:, 0], pairs[:, 1]
    if vs.min() < 0 or max(vs.max(), us.max()) >= g.node_count or us.min() < 0:
        raise IndexError(f"pair ids must lie in [0, {g.node_count})")

    vec = [k for k in kinds if k in _VECTOR_KINDS]
    if vec:
        cols = _vector_columns(g, vs, us, vec, exclude_target_edge)
        for j, k in enumerate(kinds):
            if k in cols:
                out[:, j] = cols[k]

    slow = [j for j, k in enumerate(kinds) if k not in _VECTOR_KINDS]
    if not slow:
        return out

    sim = {}
    if HeuristicKind.SIMRANK in kinds:
        sim[g] = simrank(g, cfg)

    def work(rows):
        for i in rows:
            v, u = int(vs[i]), int(us[i])
            h = g.without_edge(v, u) if exclude_target_edge else g
            for j in slow:
                k = kinds[j]
                if k is HeuristicKind.SIMRANK:
                    s = sim.get(h)
                    out[i, j] = s[v, u] if s is not None else simrank_score(h, v, u, cfg)
                else:
                    out[i, j] = score(h, v, u, k, cfg)

    chunks = np.array_split(np.arange(len(pairs)), max(1, min(workers, len(pairs))))
    if workers <= 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, chunks))
    return out


def write_scores_csv(fh, pairs, kinds, values) -> None:
    kinds = parse_kinds(kinds)
    fh.write(",".join(["v", "u"] + [k.value for k in kinds]) + "\n")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    for (v, u), row in zip(pairs.tolist(), np.asarray(values).reshape(len(pairs), len(kinds))):
        cells = [str(v), str(u)]
        for k, x in zip(kinds, row):
            cells.append(str(int(x)) if k.is_integer else f"{x:.9g}")
        fh.write(",".join(cells) + "\n")
