"""Training loop: fresh negatives per batch, per-epoch validation, early stopping."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .encoding import BinSpec, fit as fit_bins
from .graph import DatasetSplit, Graph, sample_negative_edges
from .heuristics import batch_score
from .metrics import metric_value
from .model import ModelBundle, ModelConfig, build_model, load_checkpoint, save_checkpoint
from .nn import Adam, bce_loss, clip_grad_norm, lr_decay

log = logging.getLogger(__name__)

# every random draw comes from one of these sub-streams of the run seed
STREAMS = {"init": 1, "sampling": 2, "dropout": 3, "shuffle": 4, "encoder": 5, "features": 6, "split": 7}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, STREAMS[name]])


@dataclass
class TrainState:
    bundle: ModelBundle
    adam: Adam
    rngs: dict
    epoch: int = 0
    best_metric: float = float("-inf")
    best_epoch: int = -1
    best_params: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    stopped_early: bool = False

    def snapshot_best(self):
        self.best_params = {p.name: p.value.copy() for p in self.bundle.params()}

    def restore_best(self):
        for p in self.bundle.params():
            if p.name in self.best_params:
                p.value[...] = self.best_params[p.name]

    def rng_states(self) -> dict:
        return {k: r.bit_generator.state for k, r in self.rngs.items()}


def heuristic_values(g: Graph, bundle: ModelBundle, pairs, workers: int = 1) -> np.ndarray | None:
    """Heuristics on the message-passing graph; a pair that is an edge of it is
    scored with that edge removed so a training positive never sees its label."""
    if bundle.encoder is None:
        return None
    return batch_score(
        g, pairs, bundle.encoder.kinds, bundle.cfg.heuristic_config, workers=workers, exclude_target_edge=True
    )


def fit_encoder(g: Graph, split: DatasetSplit, cfg: ModelConfig, workers: int = 1) -> list[BinSpec] | None:
    """Bins fitted on training positives plus an equal number of sampled negatives."""
    if not cfg.variant.uses_heuristics:
        return None
    rng = stream(cfg.seed, "encoder")
    neg = sample_negative_edges(g, len(split.train_pos), rng, exclusion=split.all_positives())
    pairs = np.concatenate([split.train_pos, neg])
    values = batch_score(
        g, pairs, cfg.heuristic_kinds, cfg.heuristic_config, workers=workers, exclude_target_edge=True
    )
    return fit_bins({k: values[:, j] for j, k in enumerate(cfg.heuristic_kinds)}, cfg.encoding_config)


def init_state(g: Graph, split: DatasetSplit, cfg: ModelConfig, features=None, workers: int = 1) -> TrainState:
    specs = fit_encoder(g, split, cfg, workers)
    bundle = build_model(g, cfg, specs, features, rng=stream(cfg.seed, "init"))
    rngs = {name: stream(cfg.seed, name) for name in ("sampling", "dropout", "shuffle")}
    state = TrainState(bundle, Adam(), rngs)
    state.snapshot_best()
    return state


def train_step(g: Graph, state: TrainState, pos: np.ndarray, neg: np.ndarray, lr: float) -> float:
    """One optimizer step on a batch of positive and negative pairs."""
    bundle = state.bundle
    pairs = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    heur = heuristic_values(g, bundle, pairs)
    bundle.zero_grad()
    logits, cache = bundle.forward(g, pairs, heur, training=True, rng=state.rngs["dropout"])
    loss, grad = bce_loss(logits, labels)
    bundle.backward(g, cache, grad)
    params = bundle.params()
    clip_grad_norm(params, bundle.cfg.clip_norm)
    state.adam.step(params, lr)
    return loss


def train_epoch(g: Graph, state: TrainState, split: DatasetSplit) -> float:
    """One pass over shuffled training positives; returns mean batch loss."""
    cfg = state.bundle.cfg
    if not len(split.train_pos):
        raise ValueError("split has no training positives")
    order = state.rngs["shuffle"].permutation(len(split.train_pos))
    exclusion = split.all_positives()
    lr = lr_decay(cfg.lr, cfg.lr_gamma, state.epoch)
    losses = []
    for start in range(0, len(order), cfg.batch_size):
        pos = split.train_pos[order[start : start + cfg.batch_size]]
        neg = sample_negative_edges(g, len(pos), state.rngs["sampling"], exclusion=exclusion)
        losses.append(train_step(g, state, pos, neg, lr))
    return float(np.mean(losses))


def predict_scores(g: Graph, bundle: ModelBundle, pairs, workers: int = 1) -> np.ndarray:
    """Evaluation-mode logits, one per pair, in input order."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if not len(pairs):
        return np.zeros(0)
    logits, _ = bundle.forward(g, pairs, heuristic_values(g, bundle, pairs, workers), training=False)
    return logits


def validate(g: Graph, bundle: ModelBundle, split: DatasetSplit, workers: int = 1) -> float:
    pos = predict_scores(g, bundle, split.valid_pos, workers)
    neg = predict_scores(g, bundle, split.valid_neg, workers)
    return metric_value(bundle.cfg.valid_metric, pos, neg)


def fit(
    g: Graph,
    split: DatasetSplit,
    cfg: ModelConfig,
    features=None,
    out_dir=None,
    state: TrainState | None = None,
    workers: int = 1,
    max_epochs: int | None = None,
) -> TrainState:
    """Train for up to ``cfg.epochs`` epochs, keeping the best-validation parameters.

    Passing a ``state`` resumes it.  ``max_epochs`` bounds how many epochs this
    call runs (for interrupt/resume); early stopping uses ``cfg.patience``.
    On return the bundle holds the best parameters seen.
    """
    if state is None:
        state = init_state(g, split, cfg, features, workers)
    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_fh = open(os.path.join(out_dir, "train_log.jsonl"), "a", encoding="utf-8")
    has_valid = len(split.valid_pos) and len(split.valid_neg)
    ran = 0
    try:
        while state.epoch < cfg.epochs and not state.stopped_early:
            if max_epochs is not None and ran >= max_epochs:
                break
            lr = lr_decay(cfg.lr, cfg.lr_gamma, state.epoch)
            loss = train_epoch(g, state, split)
            metric = validate(g, state.bundle, split, workers) if has_valid else -loss
            record = {"epoch": state.epoch, "loss": loss, "valid_metric": metric, "lr": lr}
            state.history.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            log.info("epoch %d loss %.5f %s %.5f", state.epoch, loss, cfg.valid_metric, metric)
            if metric > state.best_metric:
                state.best_metric, state.best_epoch = metric, state.epoch
                state.snapshot_best()
            state.epoch += 1
            ran += 1
            if state.epoch - 1 - state.best_epoch >= cfg.patience:
                state.stopped_early = True
            if out_dir is not None:
                save_train_state(state, os.path.join(out_dir, "last"))
    finally:
        if log_fh is not None:
            log_fh.close()
    if state.epoch >= cfg.epochs or state.stopped_early:
        state.restore_best()
        if out_dir is not None:
            save_checkpoint(state.bundle, os.path.join(out_dir, "best"), extra=_state_meta(state))
    return state


def _state_meta(state: TrainState) -> dict:
    return {
        "epoch": state.epoch,
        "best_metric": state.best_metric if np.isfinite(state.best_metric) else None,
        "best_epoch": state.best_epoch,
        "stopped_early": state.stopped_early,
        "rng_states": state.rng_states(),
        "history": state.history,
    }


def save_train_state(state: TrainState, directory) -> None:
    """Everything needed to continue training bit-identically."""
    arrays = dict(state.adam.state_arrays())
    arrays.update({f"best.{k}": v for k, v in state.best_params.items()})
    save_checkpoint(state.bundle, directory, extra=_state_meta(state), arrays=arrays)


def load_train_state(directory) -> TrainState:
    bundle, manifest, arrays = load_checkpoint(directory)
    adam = Adam()
    adam.load_state_arrays({k: v for k, v in arrays.items() if k.startswith("adam.")})
    rngs = {}
    for name, st in manifest["rng_states"].items():
        r = np.random.default_rng()
        r.bit_generator.state = st
        rngs[name] = r
    best = manifest.get("best_metric")
    return TrainState(
        bundle=bundle,
        adam=adam,
        rngs=rngs,
        epoch=int(manifest["epoch"]),
        best_metric=float("-inf") if best is None else float(best),
        best_epoch=int(manifest["best_epoch"]),
        best_params={k[len("best.") :]: v for k, v in arrays.items() if k.startswith("best.")},
        history=list(manifest.get("history", [])),
        stopped_early=bool(manifest.get("stopped_early", False)),
    )
