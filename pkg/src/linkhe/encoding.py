"""Heuristic encoding: map heuristic values to rows of trainable lookup tables.

Integer heuristics (CN, PA, SPD) index an identity vocabulary capped at
``int_cap``; real-valued ones fall into equal-width bins fitted on training
pairs.  Every real value maps to some row, so encoding never fails.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .heuristics import HeuristicConfig, HeuristicKind
from .nn import Init, Param, init_params


class BinMode(str, enum.Enum):
    INTEGER = "integer"
    FLOAT = "float"


@dataclass(frozen=True)
class BinSpec:
    kind: HeuristicKind
    mode: BinMode
    vocab_size: int
    dim_h: int = 32
    int_cap: int | None = None
    boundaries: tuple[float, ...] | None = None
    # training range; values outside it go to the out-of-range row
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.mode is BinMode.INTEGER:
            if self.vocab_size != self.int_cap + 2:
                raise ValueError(f"{self.kind.value}: integer vocab must be int_cap + 2")
        else:
            b = np.asarray(self.boundaries, dtype=np.float64)
            if len(b) > 1 and not np.all(np.diff(b) > 0):
                raise ValueError(f"{self.kind.value}: bin boundaries must be strictly increasing")
            if self.vocab_size != len(b) + 2:
                raise ValueError(f"{self.kind.value}: float vocab must be bins + 1")

    @property
    def overflow_index(self) -> int:
        return self.vocab_size - 1

    def to_json(self) -> dict:
        d = {"kind": self.kind.value, "mode": self.mode.value, "vocab_size": self.vocab_size, "dim_h": self.dim_h}
        if self.mode is BinMode.INTEGER:
            d["int_cap"] = self.int_cap
        else:
            d["boundaries"] = list(self.boundaries)
            d["lo"] = self.lo
            d["hi"] = self.hi
        return d

    @classmethod
    def from_json(cls, d: dict) -> "BinSpec":
        mode = BinMode(d["mode"])
        return cls(
            kind=HeuristicKind.parse(d["kind"]),
            mode=mode,
            vocab_size=int(d["vocab_size"]),
            dim_h=int(d.get("dim_h", 32)),
            int_cap=None if mode is BinMode.FLOAT else int(d["int_cap"]),
            boundaries=None if mode is BinMode.INTEGER else tuple(float(x) for x in d["boundaries"]),
            lo=None if mode is BinMode.INTEGER else float(d["lo"]),
            hi=None if mode is BinMode.INTEGER else float(d["hi"]),
        )


@dataclass(frozen=True)
class EncodingConfig:
    int_cap: int = 64
    num_bins: int = 64
    dim_h: int = 32
    heuristics: HeuristicConfig = field(default_factory=HeuristicConfig)


def fit(train_values: dict, config: EncodingConfig = EncodingConfig()) -> list[BinSpec]:
    """Fit one BinSpec per kind, in the iteration order of ``train_values``.

    SPD gets a vocabulary wide enough for its unreachable sentinel
    (spd_cap + 1) so that "disconnected" keeps its own row.
    """
    specs = []
    for kind, values in train_values.items():
        kind = HeuristicKind.parse(kind)
        values = np.asarray(values, dtype=np.float64).ravel()
        if not len(values):
            raise ValueError(f"no training values for heuristic {kind.value!r}")
        if kind.is_integer:
            cap = config.int_cap
            if kind is HeuristicKind.SPD:
                cap = max(cap, config.heuristics.spd_cap + 1)
            specs.append(BinSpec(kind, BinMode.INTEGER, cap + 2, config.dim_h, int_cap=cap))
        else:
            lo, hi = float(values.min()), float(values.max())
            if hi > lo:
                k = np.arange(1, config.num_bins)
                bounds = tuple(float(x) for x in lo + (hi - lo) * k / config.num_bins)
            else:
                bounds = ()
            specs.append(
                BinSpec(kind, BinMode.FLOAT, len(bounds) + 2, config.dim_h, boundaries=bounds, lo=lo, hi=hi)
            )
    return specs


def encode(spec: BinSpec, value) -> np.ndarray | int:
    """Lookup row(s) for value(s); scalar in, int out."""
    scalar = np.ndim(value) == 0
    x = np.asarray(value, dtype=np.float64).ravel()
    if spec.mode is BinMode.INTEGER:
        idx = np.rint(np.nan_to_num(x, nan=-1.0, posinf=spec.int_cap + 1.0, neginf=-1.0))
        idx = np.where((idx < 0) | (idx > spec.int_cap), spec.overflow_index, idx).astype(np.int64)
    else:
        b = np.asarray(spec.boundaries, dtype=np.float64)
        # right-closed top bin: value == hi falls into the last regular bin
        idx = np.searchsorted(b, x, side="right").astype(np.int64)
        outside = ~((x >= spec.lo) & (x <= spec.hi))
        idx[outside] = spec.overflow_index
    return int(idx[0]) if scalar else idx


class HeuristicEncoder:
    """Fitted bin specs plus one trainable table per spec."""

    def __init__(self, specs: list[BinSpec], rng: np.random.Generator):
        self.specs = list(specs)
        self.tables = [
            Param(
                f"heuristic.{s.kind.value}",
                init_params((s.vocab_size, s.dim_h), Init.XAVIER, rng, fan_in=s.dim_h, fan_out=s.dim_h),
                row_sparse=True,
            )
            for s in self.specs
        ]

    @property
    def kinds(self) -> list[HeuristicKind]:
        return [s.kind for s in self.specs]

    @property
    def width(self) -> int:
        return sum(s.dim_h for s in self.specs)

    def params(self) -> list[Param]:
        return list(self.tables)

    def indices(self, values: np.ndarray) -> np.ndarray:
        """(B, k) heuristic values -> (B, k) row indices."""
        values = np.asarray(values, dtype=np.float64).reshape(-1, len(self.specs))
        return np.stack([encode(s, values[:, j]) for j, s in enumerate(self.specs)], axis=1)

    def forward(self, idx: np.ndarray) -> np.ndarray:
        return np.concatenate([t.value[idx[:, j]] for j, t in enumerate(self.tables)], axis=1)

    def backward(self, idx: np.ndarray, grad: np.ndarray) -> None:
        col = 0
        for j, t in enumerate(self.tables):
            w = t.value.shape[1]
            np.add.at(t.grad, idx[:, j], grad[:, col : col + w])
            col += w

    def specs_json(self) -> list[dict]:
        return [s.to_json() for s in self.specs]


def embed_pair(enc: HeuristicEncoder, values) -> np.ndarray:
    """Concatenated heuristic embedding for one pair's values (one per spec)."""
    idx = enc.indices(np.asarray(values, dtype=np.float64).reshape(1, -1))
    return enc.forward(idx)[0]


def save_specs(path, specs: list[BinSpec]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_json() for s in specs], fh, indent=2)
        fh.write("\n")


def load_specs(path) -> list[BinSpec]:
    with open(path, encoding="utf-8") as fh:
        return [BinSpec.from_json(d) for d in json.load(fh)]
