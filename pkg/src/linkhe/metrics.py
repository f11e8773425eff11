"""Ranking metrics with fixed tie rules.

Hits@K counts a positive only if it is strictly above the K-th best
negative; MRR and AUC give half credit for ties.
"""

from __future__ import annotations

import json
import math
import re

import numpy as np

DEFAULT_HITS = (20, 50, 100)


def hits_at_k(pos, neg, k: int) -> float:
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if len(neg) < k:
        raise ValueError(f"Hits@{k} needs at least {k} negative scores, got {len(neg)}")
    if not len(pos):
        raise ValueError("no positive scores")
    threshold = np.partition(neg, len(neg) - k)[len(neg) - k]
    return int(np.count_nonzero(pos > threshold)) / len(pos)


def _greater_and_ties(pos: np.ndarray, neg_sorted: np.ndarray):
    """For each positive: (#neg strictly greater, #neg equal)."""
    lo = np.searchsorted(neg_sorted, pos, side="left")
    hi = np.searchsorted(neg_sorted, pos, side="right")
    return len(neg_sorted) - hi, hi - lo


def mrr(pos, neg) -> float:
    """Mean reciprocal rank.

    ``neg`` is either one shared 1-D pool, a 2-D array with one row of
    negatives per positive, or a list of per-positive arrays.
    """
    pos = np.asarray(pos, dtype=np.float64).ravel()
    if not len(pos):
        raise ValueError("no positive scores")
    if isinstance(neg, np.ndarray) and neg.ndim == 1 or (
        not isinstance(neg, np.ndarray) and (len(neg) == 0 or np.ndim(neg[0]) == 0)
    ):
        shared = np.sort(np.asarray(neg, dtype=np.float64))
        greater, ties = _greater_and_ties(pos, shared)
    else:
        if len(neg) != len(pos):
            raise ValueError(f"{len(pos)} positives but {len(neg)} negative lists")
        greater = np.empty(len(pos), dtype=np.int64)
        ties = np.empty(len(pos), dtype=np.int64)
        for i, row in enumerate(neg):
            gr, ti = _greater_and_ties(pos[i : i + 1], np.sort(np.asarray(row, dtype=np.float64).ravel()))
            greater[i], ties[i] = gr[0], ti[0]
    ranks = 1.0 + greater + 0.5 * ties
    return math.fsum((1.0 / ranks).tolist()) / len(pos)


def auc(pos, neg) -> float:
    """P(pos > neg) + 0.5 P(pos == neg) over all cross pairs, via sorting."""
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.sort(np.asarray(neg, dtype=np.float64).ravel())
    if not len(pos) or not len(neg):
        raise ValueError("AUC needs at least one positive and one negative score")
    lo = np.searchsorted(neg, pos, side="left")
    hi = np.searchsorted(neg, pos, side="right")
    wins = int(lo.sum())
    ties = int((hi - lo).sum())
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


_METRIC_RE = re.compile(r"^(hits@(\d+)|mrr|auc)$")


def parse_metric_name(name: str):
    m = _METRIC_RE.match(name.strip().lower())
    if not m:
        raise ValueError(f"unknown metric {name!r}; use hits@K, mrr or auc")
    return ("hits", int(m.group(2))) if m.group(2) else (m.group(1), None)


def metric_value(name: str, pos, neg) -> float:
    kind, k = parse_metric_name(name)
    if kind == "hits":
        return hits_at_k(pos, neg, k)
    if kind == "mrr":
        return mrr(pos, neg)
    return auc(pos, neg)


def evaluate(pos, neg, ks=DEFAULT_HITS) -> dict:
    """Shared-negative report. Hits@K with fewer than K negatives is omitted."""
    neg = np.asarray(neg, dtype=np.float64).ravel()
    report = {}
    for k in ks:
        if len(neg) >= k:
            report[f"hits@{k}"] = hits_at_k(pos, neg, k)
    report["mrr"] = mrr(pos, neg)
    report["auc"] = auc(pos, neg)
    return report


def write_report(metrics: dict, json_path, csv_path=None) -> None:
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if csv_path is not None:
        keys = sorted(metrics)
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(",".join(keys) + "\n")
            fh.write(",".join(repr(float(metrics[k])) for k in keys) + "\n")
