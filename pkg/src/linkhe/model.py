"""Model configuration, parameter allocation and the forward/backward pass.

The architecture is fixed: optional GCN stack over node inputs, pair
combination, optional heuristic embeddings, MLP predictor producing a logit.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import __version__
from .encoding import BinSpec, EncodingConfig, HeuristicEncoder
from .graph import Graph
from .heuristics import HeuristicConfig, HeuristicKind, parse_kinds
from .nn import (
    Combine,
    Init,
    Mlp,
    Param,
    combine,
    combine_backward,
    dropout,
    gcn_backward,
    gcn_forward,
    init_params,
    relu,
)


class Variant(str, enum.Enum):
    HE = "HE"
    GNN_X = "GNN_X"
    GNN_NE = "GNN_NE"
    GNN_XNE = "GNN_XNE"
    GNN_X_HE = "GNN_X_HE"
    GNN_NE_HE = "GNN_NE_HE"
    GNN_XNE_HE = "GNN_XNE_HE"

    @property
    def uses_gnn(self) -> bool:
        return self is not Variant.HE

    @property
    def uses_features(self) -> bool:
        return self in (Variant.GNN_X, Variant.GNN_XNE, Variant.GNN_X_HE, Variant.GNN_XNE_HE)

    @property
    def uses_node_embeddings(self) -> bool:
        return self in (Variant.GNN_NE, Variant.GNN_XNE, Variant.GNN_NE_HE, Variant.GNN_XNE_HE)

    @property
    def uses_heuristics(self) -> bool:
        return self in (Variant.HE, Variant.GNN_X_HE, Variant.GNN_NE_HE, Variant.GNN_XNE_HE)


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    """Training configuration. Defaults are the ogbl-ddi settings: GCN with
    2 layers, 4-layer MLP, 512-d node embeddings, lr 0.003, dropout 0.3,
    clip 5, batch 100000."""

    variant: Variant = Variant.GNN_NE
    gnn_layers: int = 2
    predictor_layers: int = 4
    node_emb_dim: int = 512
    hidden_dim: int = 256
    heuristic_kinds: list[HeuristicKind] = field(default_factory=list)
    dim_h: int = 32
    int_cap: int = 64
    num_bins: int = 64
    combine: Combine = Combine.HADAMARD
    lr: float = 0.003
    lr_gamma: float = 1.0
    dropout: float = 0.3
    clip_norm: float = 5.0
    batch_size: int = 100000
    epochs: int = 100
    patience: int = 20
    valid_metric: str = "hits@20"
    seed: int = 0
    katz_beta: float = 0.05
    katz_max_len: int = 4
    simrank_decay: float = 0.8
    simrank_iters: int = 5
    spd_cap: int = 6

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.combine = Combine(self.combine)
        self.heuristic_kinds = parse_kinds(self.heuristic_kinds)
        if self.variant.uses_heuristics and not self.heuristic_kinds:
            raise ConfigError(f"variant {self.variant.value} needs at least one heuristic kind")
        if self.variant.uses_gnn and self.gnn_layers < 1:
            raise ConfigError("GNN variants need gnn_layers >= 1")
        if self.predictor_layers < 1:
            raise ConfigError("predictor_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        from .metrics import parse_metric_name

        parse_metric_name(self.valid_metric)

    @property
    def heuristic_config(self) -> HeuristicConfig:
        return HeuristicConfig(
            katz_beta=self.katz_beta,
            katz_max_len=self.katz_max_len,
            simrank_decay=self.simrank_decay,
            simrank_iters=self.simrank_iters,
            spd_cap=self.spd_cap,
        )

    @property
    def encoding_config(self) -> EncodingConfig:
        return EncodingConfig(self.int_cap, self.num_bins, self.dim_h, self.heuristic_config)

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["variant"] = self.variant.value
        d["combine"] = self.combine.value
        d["heuristic_kinds"] = [k.value for k in self.heuristic_kinds]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ModelConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass
class ForwardCache:
    pairs: np.ndarray
    h: list = field(default_factory=list)
    gnn: list = field(default_factory=list)
    hv: np.ndarray | None = None
    hu: np.ndarray | None = None
    heur_idx: np.ndarray | None = None
    mlp: list = field(default_factory=list)


class ModelBundle:
    """All trainable state for one variant, plus the fixed node features."""

    def __init__(self, cfg: ModelConfig, node_count: int, features: np.ndarray | None, encoder: HeuristicEncoder | None, rng):
        self.cfg = cfg
        self.node_count = node_count
        self.features = features
        self.encoder = encoder
        self.node_emb: Param | None = None
        self.gcn: list[Param] = []

        in_dim = 0
        if cfg.variant.uses_features:
            if features is None:
                raise ConfigError(f"variant {cfg.variant.value} needs a feature matrix")
            if features.shape[0] != node_count:
                raise ConfigError(f"feature matrix has {features.shape[0]} rows for {node_count} nodes")
            in_dim += features.shape[1]
        if cfg.variant.uses_node_embeddings:
            d = cfg.node_emb_dim
            self.node_emb = Param(
                "node_emb", init_params((node_count, d), Init.XAVIER, rng, fan_in=d, fan_out=d), row_sparse=True
            )
            in_dim += d
        if cfg.variant.uses_gnn:
            for l in range(cfg.gnn_layers):
                self.gcn.append(Param(f"gcn.{l}.weight", init_params((in_dim, cfg.hidden_dim), Init.XAVIER, rng)))
                in_dim = cfg.hidden_dim

        pred_in = 0
        if cfg.variant.uses_gnn:
            pred_in += cfg.hidden_dim * (2 if cfg.combine is Combine.CONCAT else 1)
        if cfg.variant.uses_heuristics:
            if encoder is None:
                raise ConfigError(f"variant {cfg.variant.value} needs a fitted heuristic encoder")
            pred_in += encoder.width
        else:
            self.encoder = None
        widths = [pred_in] + [cfg.hidden_dim] * (cfg.predictor_layers - 1) + [1]
        self.mlp = Mlp("mlp", widths, rng)

    # -- parameters ---------------------------------------------------------

    def params(self) -> list[Param]:
        out = []
        if self.node_emb is not None:
            out.append(self.node_emb)
        out.extend(self.gcn)
        if self.encoder is not None:
            out.extend(self.encoder.params())
        out.extend(self.mlp.params())
        return out

    def named_params(self) -> dict[str, Param]:
        return {p.name: p for p in self.params()}

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    # -- forward / backward -------------------------------------------------

    def node_inputs(self) -> np.ndarray:
        parts = []
        if self.cfg.variant.uses_features:
            parts.append(self.features)
        if self.node_emb is not None:
            parts.append(self.node_emb.value)
        return np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]

    def node_representations(self, g: Graph, training=False, rng=None, cache: ForwardCache | None = None):
        h = self.node_inputs()
        last = len(self.gcn) - 1
        for l, w in enumerate(self.gcn):
            z, agg = gcn_forward(g, h, w.value)
            if l < last:
                h, mask = dropout(relu(z), self.cfg.dropout, rng, training)
            else:
                h, mask = z, None
            if cache is not None:
                cache.gnn.append((agg, z, mask))
        return h

    def forward(self, g: Graph, pairs, heur_values=None, training=False, rng=None):
        """Logits for ``pairs``; returns (logits, cache for backward)."""
        if g.node_count != self.node_count:
            raise ConfigError(f"model built for {self.node_count} nodes, graph has {g.node_count}")
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        cache = ForwardCache(pairs)
        parts = []
        if self.gcn:
            h = self.node_representations(g, training, rng, cache)
            cache.hv, cache.hu = h[pairs[:, 0]], h[pairs[:, 1]]
            parts.append(combine(cache.hv, cache.hu, self.cfg.combine))
        if self.encoder is not None:
            if heur_values is None:
                raise ValueError("heuristic variant needs heuristic values for every pair")
            cache.heur_idx = self.encoder.indices(heur_values)
            parts.append(self.encoder.forward(cache.heur_idx))
        x = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
        logits, cache.mlp = self.mlp.forward(x, self.cfg.dropout, rng, training)
        return logits, cache

    def backward(self, g: Graph, cache: ForwardCache, grad_logits: np.ndarray) -> None:
        grad_x = self.mlp.backward(cache.mlp, grad_logits)
        col = 0
        if self.gcn:
            width = self.cfg.hidden_dim * (2 if self.cfg.combine is Combine.CONCAT else 1)
            g_hv, g_hu = combine_backward(cache.hv, cache.hu, grad_x[:, :width], self.cfg.combine)
            col = width
            grad_h = _scatter_rows(self.node_count, cache.pairs.T.ravel(), np.concatenate([g_hv, g_hu]))
            for l in range(len(self.gcn) - 1, -1, -1):
                agg, z, mask = cache.gnn[l]
                if l < len(self.gcn) - 1:
                    if mask is not None:
                        grad_h = grad_h * mask
                    grad_h = grad_h * (z > 0)
                grad_h = gcn_backward(g, agg, self.gcn[l], grad_h)
            if self.node_emb is not None:
                d = self.cfg.node_emb_dim
                self.node_emb.grad += grad_h[:, grad_h.shape[1] - d :]
        if self.encoder is not None:
            self.encoder.backward(cache.heur_idx, grad_x[:, col:])

    # -- persistence --------------------------------------------------------

    def manifest(self) -> dict:
        return {
            "format": "linkhe-checkpoint",
            "version": __version__,
            "node_count": self.node_count,
            "config": self.cfg.to_json(),
            "bin_specs": self.encoder.specs_json() if self.encoder is not None else [],
            "params": {p.name: list(p.shape) for p in self.params()},
            "feature_dim": None if self.features is None else int(self.features.shape[1]),
        }


def _scatter_rows(n: int, rows: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Sum ``values`` into an (n, width) zero array at ``rows``."""
    sel = sp.csr_matrix((np.ones(len(rows)), (rows, np.arange(len(rows)))), shape=(n, len(rows)))
    return np.asarray(sel @ values)


def build_model(
    g: Graph | int,
    cfg: ModelConfig,
    specs: list[BinSpec] | None = None,
    features: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> ModelBundle:
    """Allocate exactly the parameters ``cfg.variant`` needs."""
    n = g if isinstance(g, int) else g.node_count
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 1])
    encoder = None
    if cfg.variant.uses_heuristics:
        if specs is None:
            raise ConfigError(f"variant {cfg.variant.value} needs fitted bin specs")
        by_kind = {s.kind: s for s in specs}
        missing = [k.value for k in cfg.heuristic_kinds if k not in by_kind]
        if missing:
            raise ConfigError(f"no bin spec for heuristics: {', '.join(missing)}")
        encoder = HeuristicEncoder([by_kind[k] for k in cfg.heuristic_kinds], rng)
    return ModelBundle(cfg, n, features, encoder, rng)


# ---------------------------------------------------------------------------
# checkpoints: JSON manifest + one little-endian f64 file per array


def _write_array(path, arr):
    np.ascontiguousarray(arr, dtype="<f8").tofile(path)


def _read_array(path, shape):
    arr = np.fromfile(path, dtype="<f8")
    return arr.reshape(shape).astype(np.float64)


def save_checkpoint(bundle: ModelBundle, directory, extra: dict | None = None, arrays: dict | None = None) -> None:
    os.makedirs(directory, exist_ok=True)
    manifest = bundle.manifest()
    manifest["extra_arrays"] = {}
    for p in bundle.params():
        _write_array(os.path.join(directory, f"{p.name}.f64"), p.value)
    if bundle.features is not None:
        _write_array(os.path.join(directory, "features.f64"), bundle.features)
        manifest["features_shape"] = list(bundle.features.shape)
    for name, arr in (arrays or {}).items():
        _write_array(os.path.join(directory, f"{name}.f64"), arr)
        manifest["extra_arrays"][name] = list(np.shape(arr))
    manifest.update(extra or {})
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(directory):
    """Returns (bundle, manifest, extra arrays)."""
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg = ModelConfig.from_json(manifest["config"])
    specs = [BinSpec.from_json(d) for d in manifest["bin_specs"]] or None
    features = None
    if manifest.get("features_shape"):
        features = _read_array(os.path.join(directory, "features.f64"), manifest["features_shape"])
    bundle = build_model(int(manifest["node_count"]), cfg, specs, features, rng=np.random.default_rng(0))
    params = bundle.named_params()
    if set(params) != set(manifest["params"]):
        raise ConfigError(f"checkpoint parameter set does not match variant {cfg.variant.value}")
    for name, shape in manifest["params"].items():
        params[name].value[...] = _read_array(os.path.join(directory, f"{name}.f64"), shape)
    extra = {
        name: _read_array(os.path.join(directory, f"{name}.f64"), shape)
        for name, shape in manifest.get("extra_arrays", {}).items()
    }
    return bundle, manifest, extra
