"""Accuracy, node homophily, silhouette, and the JSON experiment report."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .data import write_features
from .graph import CsrMatrix


def _indices(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if mask.dtype == bool and mask.shape != (n,):
        raise ValueError("mask length does not match")
    return idx


def accuracy(predictions, labels, mask) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    idx = _indices(mask, len(labels))
    if len(idx) == 0:
        raise ValueError("accuracy over an empty mask")
    return float(np.mean(predictions[idx] == labels[idx]))


def homophily_rate(graph: CsrMatrix, labels) -> float:
    """Mean over non-isolated nodes of the fraction of same-label neighbours."""
    labels = np.asarray(labels)
    deg = graph.degrees()
    if not np.any(deg > 0):
        raise ValueError("homophily is undefined when every node is isolated")
    rows = np.repeat(np.arange(graph.n_rows), deg)
    same = (labels[rows] == labels[graph.col_idx]).astype(np.float64)
    same_count = np.bincount(rows, weights=same, minlength=graph.n_rows)
    keep = deg > 0
    return float(np.mean(same_count[keep] / deg[keep]))


def silhouette(embeddings, labels, mask=None) -> float:
    """Mean silhouette over the selected points (Euclidean distance).

    A point alone in its cluster scores 0.
    """
    E = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    idx = np.arange(len(labels)) if mask is None else _indices(mask, len(labels))
    E, y = E[idx], labels[idx]
    classes, y = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("silhouette needs at least two clusters")
    D = cdist(E, E)
    onehot = np.eye(len(classes))[y]
    sizes = onehot.sum(axis=0)
    sums = D @ onehot                                   # distance mass into each cluster
    own = sizes[y]
    a = np.where(own > 1, sums[np.arange(len(y)), y] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / sizes[None, :]
    mean_other[np.arange(len(y)), y] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


@dataclass
class Report:
    config: dict
    accuracies: list[float]
    homophily_rate: float | None
    silhouette: float | None
    failures: int = 0
    best_epochs: list[int] = field(default_factory=list)
    silhouettes: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        # population std, as in mean +- std tables
        return float(np.std(self.accuracies))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean"] = self.mean
        d["std"] = self.std
        return d


def _round(x):
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return float(f"{x:.6g}")
    if isinstance(x, dict):
        return {str(k): _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_round(v) for v in x]
    return x


def report_json(report: Report) -> str:
    return json.dumps(_round(report.to_dict()), sort_keys=True, indent=2) + "\n"


def write_report(report: Report, path, embeddings: np.ndarray | None = None) -> None:
    """Write the report JSON; optionally dump embeddings next to it as ``.bin``."""
    if not report.accuracies:
        raise ValueError("refusing to write a report with no completed repeats")
    path = Path(path)
    path.write_text(report_json(report), encoding="utf-8")
    if embeddings is not None:
        write_features(path.with_suffix(".embeddings.bin"), embeddings)


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
