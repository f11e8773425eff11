"""Undirected simple graphs in CSR form, dataset splits and edge-list I/O."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

SPLIT_FILES = ("train.tsv", "valid_pos.tsv", "valid_neg.tsv", "test_pos.tsv", "test_neg.tsv")


class GraphDataError(ValueError):
    """Malformed or inconsistent graph input."""


class SamplingError(RuntimeError):
    """Negative sampling could not produce the requested number of pairs."""


@dataclass(frozen=True, eq=False)
class Graph:
    node_count: int
    offsets: np.ndarray
    neighbor_ids: np.ndarray
    edge_count: int
    dropped_duplicates: int = field(default=0, compare=False)
    dropped_self_loops: int = field(default=0, compare=False)

    def __post_init__(self):
        self.offsets.setflags(write=False)
        self.neighbor_ids.setflags(write=False)

    @cached_property
    def degrees(self) -> np.ndarray:
        d = np.diff(self.offsets)
        d.setflags(write=False)
        return d

    @cached_property
    def row_ids(self) -> np.ndarray:
        """Source node of every CSR slot."""
        r = np.repeat(np.arange(self.node_count, dtype=np.int64), self.degrees)
        r.setflags(write=False)
        return r

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.neighbor_ids), dtype=np.float64)
        return sp.csr_matrix(
            (data, self.neighbor_ids.copy(), self.offsets.copy()),
            shape=(self.node_count, self.node_count),
        )

    @cached_property
    def edge_keys(self) -> np.ndarray:
        """Sorted ``v * N + u`` keys of all edges with v < u."""
        e = self.edges()
        k = np.sort(e[:, 0] * self.node_count + e[:, 1])
        k.setflags(write=False)
        return k

    def neighbors(self, v: int) -> np.ndarray:
        _check_node(self, v)
        return self.neighbor_ids[self.offsets[v] : self.offsets[v + 1]]

    def degree(self, v: int) -> int:
        _check_node(self, v)
        return int(self.offsets[v + 1] - self.offsets[v])

    def has_edge(self, v: int, u: int) -> bool:
        nbrs = self.neighbors(v)
        i = np.searchsorted(nbrs, u)
        return bool(i < len(nbrs) and nbrs[i] == u)

    def edges(self) -> np.ndarray:
        """Each undirected edge once, as an (|E|, 2) array with v < u."""
        mask = self.row_ids < self.neighbor_ids
        return np.stack([self.row_ids[mask], self.neighbor_ids[mask]], axis=1)

    def without_edge(self, v: int, u: int) -> "Graph":
        """Copy of the graph with edge (v, u) removed; unchanged copy if absent."""
        if not self.has_edge(v, u):
            return self
        drop = np.array(
            [
                self.offsets[v] + np.searchsorted(self.neighbors(v), u),
                self.offsets[u] + np.searchsorted(self.neighbors(u), v),
            ]
        )
        nbrs = np.delete(self.neighbor_ids, drop)
        offsets = self.offsets.copy()
        offsets[v + 1 :] -= 1
        offsets[u + 1 :] -= 1
        return Graph(self.node_count, offsets, nbrs, self.edge_count - 1)

    def __repr__(self):
        return f"Graph(node_count={self.node_count}, edge_count={self.edge_count})"


def _check_node(g: Graph, v) -> None:
    if not 0 <= v < g.node_count:
        raise IndexError(f"node id {v} out of range for graph with {g.node_count} nodes")


def build_graph(edges: Iterable[Sequence[int]] | np.ndarray, node_count: int) -> Graph:
    """Build a CSR graph from (possibly directed, duplicated) id pairs.

    Edges are symmetrized; duplicates and self-loops are dropped and counted.
    """
    if node_count < 0:
        raise GraphDataError(f"node_count must be non-negative, got {node_count}")
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GraphDataError(f"edges must be pairs, got array of shape {arr.shape}")
    bad = np.flatnonzero((arr < 0).any(axis=1) | (arr >= node_count).any(axis=1))
    if len(bad):
        i = int(bad[0])
        raise GraphDataError(
            f"edge #{i} ({arr[i, 0]}, {arr[i, 1]}) has a node id outside [0, {node_count})"
        )

    loops = arr[:, 0] == arr[:, 1]
    n_loops = int(loops.sum())
    arr = arr[~loops]
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    keys = np.unique(lo * max(node_count, 1) + hi)
    n_dup = len(arr) - len(keys)
    lo, hi = np.divmod(keys, max(node_count, 1))

    src = np.concatenate([lo, hi])
    dst = np.concatenate([hi, lo])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    offsets = np.zeros(node_count + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=node_count), out=offsets[1:])
    if n_dup or n_loops:
        log.info("build_graph: dropped %d duplicate edges and %d self-loops", n_dup, n_loops)
    return Graph(node_count, offsets, dst.astype(np.int64), len(keys), n_dup, n_loops)


def neighbors(g: Graph, v: int) -> np.ndarray:
    return g.neighbors(v)


def degree(g: Graph, v: int) -> int:
    return g.degree(v)


def average_degree(g: Graph) -> float:
    if g.node_count == 0:
        return 0.0
    return float(g.degrees.sum()) / g.node_count


def has_edge(g: Graph, v: int, u: int) -> bool:
    return g.has_edge(v, u)


def common_neighbor_ids(g: Graph, v: int, u: int) -> np.ndarray:
    """Sorted intersection of the two neighbor slices."""
    return np.intersect1d(g.neighbors(v), g.neighbors(u), assume_unique=True)


def bfs_distances(g: Graph, source: int, cap: int) -> np.ndarray:
    """Hop distances from ``source``; nodes farther than ``cap`` get cap + 1."""
    _check_node(g, source)
    dist = np.full(g.node_count, cap + 1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source])
    for depth in range(1, cap + 1):
        if not len(frontier):
            break
        nxt = np.concatenate([g.neighbor_ids[g.offsets[x] : g.offsets[x + 1]] for x in frontier])
        nxt = np.unique(nxt)
        nxt = nxt[dist[nxt] > depth]
        dist[nxt] = depth
        frontier = nxt
    return dist


def hop_ball(g: Graph, sources: Iterable[int], hops: int) -> set[int]:
    """All nodes within ``hops`` of any source."""
    ball: set[int] = set()
    for s in sources:
        ball.update(np.flatnonzero(bfs_distances(g, int(s), hops) <= hops).tolist())
    return ball


def _pair_key(v, u, n):
    lo, hi = np.minimum(v, u), np.maximum(v, u)
    return lo * n + hi


def _sorted_member(sorted_keys: np.ndarray, keys: np.ndarray) -> np.ndarray:
    if not len(sorted_keys):
        return np.zeros(len(keys), dtype=bool)
    i = np.searchsorted(sorted_keys, keys)
    return sorted_keys[np.minimum(i, len(sorted_keys) - 1)] == keys


def sample_negative_edges(
    g: Graph,
    count: int,
    rng: np.random.Generator | int,
    exclusion: Iterable[Sequence[int]] | np.ndarray | None = None,
    min_spd: int | None = None,
) -> np.ndarray:
    """Uniformly sample ``count`` distinct unordered non-edges.

    Pairs in ``exclusion`` are never returned.  With ``min_spd`` set, only
    pairs at hop distance >= min_spd (or disconnected) are accepted.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n = g.node_count
    out = np.empty((count, 2), dtype=np.int64)
    if count == 0:
        return out
    total_pairs = n * (n - 1) // 2
    if total_pairs - g.edge_count <= 0:
        raise SamplingError(
            f"graph with {n} nodes and {g.edge_count} edges is complete; no non-edges to sample"
        )
    ex_keys = np.zeros(0, dtype=np.int64)
    if exclusion is not None:
        ex = np.asarray(exclusion, dtype=np.int64).reshape(-1, 2)
        ex_keys = np.unique(_pair_key(ex[:, 0], ex[:, 1], n))
    edge_keys = g.edge_keys
    taken = np.zeros(0, dtype=np.int64)
    chosen = []
    filled = 0
    attempts = 0
    budget = 100 * count
    while filled < count and attempts < budget:
        k = min(max(2 * (count - filled), 16), budget - attempts)
        a = rng.integers(0, n, size=k)
        b = rng.integers(0, n, size=k)
        attempts += k
        keys = _pair_key(a, b, n)
        ok = (a != b) & ~_sorted_member(edge_keys, keys) & ~_sorted_member(ex_keys, keys)
        ok &= ~np.isin(keys, taken)
        keys = keys[ok]
        _, first = np.unique(keys, return_index=True)
        keys = keys[np.sort(first)]
        if min_spd is not None:
            keys = np.array(
                [x for x in keys.tolist() if bfs_distances(g, x // n, min_spd - 1)[x % n] >= min_spd],
                dtype=np.int64,
            )
        keys = keys[: count - filled]
        chosen.append(keys)
        taken = np.sort(np.concatenate([taken, keys]))
        filled += len(keys)
    if filled:
        keys = np.concatenate(chosen)
        out[:filled, 0], out[:filled, 1] = np.divmod(keys, n)
    if filled < count:
        density = 2.0 * g.edge_count / max(n * (n - 1), 1)
        raise SamplingError(
            f"sampled only {filled}/{count} negatives after {attempts} attempts "
            f"(graph density {density:.4f}, {len(ex_keys)} pairs excluded)"
        )
    return out


# ---------------------------------------------------------------------------
# file formats


def _parse_edge_lines(path) -> list[tuple[int, int]]:
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise GraphDataError(f"{path}:{lineno}: expected two TAB-separated ids, got {line!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphDataError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
            if a < 0 or b < 0:
                raise GraphDataError(f"{path}:{lineno}: negative node id in {line!r}")
            edges.append((a, b))
    return edges


def load_edge_list(path) -> tuple[list[tuple[int, int]], int]:
    """Read a TAB-separated edge list; node count is max id + 1."""
    edges = _parse_edge_lines(path)
    n = max((max(e) for e in edges), default=-1) + 1
    return edges, n


def write_edge_list(path, edges) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b in np.asarray(edges, dtype=np.int64).reshape(-1, 2).tolist():
            fh.write(f"{a}\t{b}\n")


@dataclass
class DatasetSplit:
    train_pos: np.ndarray
    valid_pos: np.ndarray
    valid_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray
    node_count: int

    def __post_init__(self):
        for name in ("train_pos", "valid_pos", "valid_neg", "test_pos", "test_neg"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64).reshape(-1, 2))
        self.validate()

    def validate(self) -> None:
        n = self.node_count
        for name in ("train_pos", "valid_pos", "valid_neg", "test_pos", "test_neg"):
            arr = getattr(self, name)
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise GraphDataError(f"{name} contains node ids outside [0, {n})")
        for pos, neg in (("valid_pos", "valid_neg"), ("test_pos", "test_neg")):
            p = getattr(self, pos)
            q = getattr(self, neg)
            clash = np.intersect1d(_pair_key(p[:, 0], p[:, 1], n), _pair_key(q[:, 0], q[:, 1], n))
            if len(clash):
                a, b = divmod(int(clash[0]), n)
                raise GraphDataError(f"pair ({a}, {b}) appears in both {pos} and {neg}")

    def train_graph(self) -> Graph:
        return build_graph(self.train_pos, self.node_count)

    def all_positives(self) -> np.ndarray:
        return np.concatenate([self.train_pos, self.valid_pos, self.test_pos])


def load_split(directory) -> DatasetSplit:
    """Load the five split files; node count comes from meta.json when present."""
    parts = {}
    for fname in SPLIT_FILES:
        path = os.path.join(directory, fname)
        if not os.path.exists(path):
            raise GraphDataError(f"split directory {directory} is missing {fname}")
        edges = _parse_edge_lines(path)
        parts[fname[:-4]] = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    meta = os.path.join(directory, "meta.json")
    if os.path.exists(meta):
        with open(meta, encoding="utf-8") as fh:
            n = int(json.load(fh)["node_count"])
    else:
        n = int(max((a.max() for a in parts.values() if a.size), default=-1)) + 1
    return DatasetSplit(
        train_pos=parts["train"],
        valid_pos=parts["valid_pos"],
        valid_neg=parts["valid_neg"],
        test_pos=parts["test_pos"],
        test_neg=parts["test_neg"],
        node_count=n,
    )


def save_split(split: DatasetSplit, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    write_edge_list(os.path.join(directory, "train.tsv"), split.train_pos)
    write_edge_list(os.path.join(directory, "valid_pos.tsv"), split.valid_pos)
    write_edge_list(os.path.join(directory, "valid_neg.tsv"), split.valid_neg)
    write_edge_list(os.path.join(directory, "test_pos.tsv"), split.test_pos)
    write_edge_list(os.path.join(directory, "test_neg.tsv"), split.test_neg)
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump({"node_count": split.node_count}, fh)
        fh.write("\n")


def load_features(path) -> np.ndarray:
    """Feature matrix file: header ``N f`` then N rows of f reals."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise GraphDataError(f"{path}:1: expected header 'N f'")
        n, f = int(header[0]), int(header[1])
        rows = []
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            vals = line.split()
            if len(vals) != f:
                raise GraphDataError(f"{path}:{lineno}: expected {f} values, got {len(vals)}")
            rows.append([float(x) for x in vals])
    if len(rows) != n:
        raise GraphDataError(f"{path}: header declares {n} rows, found {len(rows)}")
    return np.asarray(rows, dtype=np.float64).reshape(n, f)


def save_features(path, x: np.ndarray) -> None:
    x = np.asarray(x, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{x.shape[0]} {x.shape[1]}\n")
        for row in x:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def split_edges(
    g: Graph, fractions: Sequence[float], rng: np.random.Generator
) -> DatasetSplit:
    """Random train/valid/test partition of the edges with matched negatives."""
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValueError(f"need three non-negative fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {sum(fractions):g}")
    edges = g.edges()
    perm = rng.permutation(len(edges))
    n_valid = int(round(fractions[1] * len(edges)))
    n_test = int(round(fractions[2] * len(edges)))
    n_train = len(edges) - n_valid - n_test
    train = edges[np.sort(perm[:n_train])]
    valid = edges[np.sort(perm[n_train : n_train + n_valid])]
    test = edges[np.sort(perm[n_train + n_valid :])]
    negs = sample_negative_edges(g, n_valid + n_test, rng)
    return DatasetSplit(train, valid, negs[:n_valid], test, negs[n_valid:], g.node_count)
