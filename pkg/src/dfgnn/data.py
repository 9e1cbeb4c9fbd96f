"""Dataset container, the on-disk directory format, and a synthetic SBM generator.

Directory layout::

    meta.json      {"name", "num_nodes", "num_features", "num_classes"}
    edges.tsv      "i<TAB>j" per line, 0-based, no self-loops
    labels.tsv     one integer per line (-1 = unlabeled)
    features.bin   b"DFGF", u64 N, u64 d, N*d float32 LE (row-major)
    features.tsv   text fallback accepted on load
    splits.json    optional {"train": [...], "val": [...], "test": [...]}
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import CsrMatrix, from_edges
from .seeding import make_rng

FEATURE_MAGIC = b"DFGF"


class DatasetError(ValueError):
    pass


@dataclass(eq=False)
class Dataset:
    graph: CsrMatrix
    X: np.ndarray
    labels: np.ndarray
    name: str
    num_classes: int
    splits: dict[str, np.ndarray] | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.graph.n_rows:
            raise DatasetError(f"feature rows {self.X.shape} do not match {self.graph.n_rows} nodes")
        if self.labels.shape != (self.graph.n_rows,):
            raise DatasetError("labels must have one entry per node")
        if np.any(self.labels < -1) or np.any(self.labels >= self.num_classes):
            raise DatasetError(f"labels must lie in {{-1, 0..{self.num_classes - 1}}}")

    @property
    def num_nodes(self) -> int:
        return self.graph.n_rows

    @property
    def num_features(self) -> int:
        return self.X.shape[1]

    @property
    def num_edges(self) -> int:
        return self.graph.nnz // 2


def write_features(path, X: np.ndarray) -> None:
    X = np.asarray(X, dtype="<f4")
    Path(path).write_bytes(FEATURE_MAGIC + struct.pack("<QQ", *X.shape)
                           + np.ascontiguousarray(X).tobytes())


def read_features(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:4] != FEATURE_MAGIC:
        raise DatasetError(f"{path}: bad magic")
    n, d = struct.unpack_from("<QQ", buf, 4)
    if len(buf) != 20 + 4 * n * d:
        raise DatasetError(f"{path}: expected {n}x{d} float32 payload, file size is {len(buf)}")
    return np.frombuffer(buf, dtype="<f4", offset=20).reshape(n, d).astype(np.float32)


def _read_int_lines(path) -> list[str]:
    return [ln for ln in Path(path).read_text().splitlines() if ln.strip()]


def load_dataset(directory) -> Dataset:
    """Load and validate a dataset directory."""
    root = Path(directory)
    for required in ("meta.json", "edges.tsv", "labels.tsv"):
        if not (root / required).is_file():
            raise DatasetError(f"{root}: missing {required}")
    meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
    try:
        n, d, C = int(meta["num_nodes"]), int(meta["num_features"]), int(meta["num_classes"])
        name = str(meta["name"])
    except KeyError as exc:
        raise DatasetError(f"meta.json lacks {exc}") from None

    edges = []
    for lineno, ln in enumerate(_read_int_lines(root / "edges.tsv"), 1):
        parts = ln.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"edges.tsv:{lineno}: expected two tab-separated integers")
        edges.append((int(parts[0]), int(parts[1])))
    try:
        graph = from_edges(n, edges, symmetrize=True)
    except ValueError as exc:
        raise DatasetError(f"edges.tsv: {exc}") from None

    labels = np.array([int(x) for x in _read_int_lines(root / "labels.tsv")], dtype=np.int64)
    if len(labels) != n:
        raise DatasetError(f"labels.tsv has {len(labels)} lines, meta says {n} nodes")
    if np.any(labels < -1) or np.any(labels >= C):
        raise DatasetError(f"labels.tsv contains ids outside -1..{C - 1}")

    if (root / "features.bin").is_file():
        X = read_features(root / "features.bin")
    elif (root / "features.tsv").is_file():
        rows = [[float(v) for v in ln.split("\t")] for ln in _read_int_lines(root / "features.tsv")]
        # same precision as the binary layout
        X = np.array(rows, dtype=np.float32).reshape(len(rows), -1)
    else:
        raise DatasetError(f"{root}: missing features.bin / features.tsv")
    if X.shape != (n, d):
        raise DatasetError(f"features are {X.shape}, meta says ({n}, {d})")
    if not np.all(np.isfinite(X)):
        raise DatasetError("features contain non-finite values")

    splits = None
    if (root / "splits.json").is_file():
        raw = json.loads((root / "splits.json").read_text())
        splits = {k: np.asarray(raw[k], dtype=np.int64) for k in ("train", "val", "test")}
    return Dataset(graph, X, labels, name, C, splits)


def save_dataset(ds: Dataset, directory) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"name": ds.name, "num_nodes": ds.num_nodes, "num_features": ds.num_features,
            "num_classes": ds.num_classes}
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    edges = ds.graph.edge_list()
    (root / "edges.tsv").write_text("".join(f"{i}\t{j}\n" for i, j in edges))
    (root / "labels.tsv").write_text("".join(f"{int(y)}\n" for y in ds.labels))
    write_features(root / "features.bin", ds.X)
    if ds.splits is not None:
        (root / "splits.json").write_text(
            json.dumps({k: [int(i) for i in ds.splits[k]] for k in ("train", "val", "test")}))


def _partner_map(C: int, rng: np.random.Generator) -> np.ndarray:
    """Each class picks one other class uniformly; several may pick the same."""
    if C == 1:
        return np.zeros(1, dtype=np.int64)
    offs = rng.integers(1, C, size=C)
    return (np.arange(C) + offs) % C


def gen_sbm(n: int, C: int, homophily: float, avg_degree: float, feat_dim: int,
            feat_noise: float, seed: int, name: str | None = None) -> Dataset:
    """Balanced stochastic block model with patterned heterophily.

    Every class has a designated partner class. A node expects
    ``homophily * avg_degree`` neighbours in its own class and sends
    ``(1 - homophily) * avg_degree / 2`` edges to its partner class; the
    matching half arrives from classes that chose it as their partner, so the
    mean degree is ``avg_degree``. Features are a unit-norm Gaussian class
    mean plus ``N(0, feat_noise^2)`` noise.
    """
    if C < 1 or n < 4 * C:
        raise ValueError("need n >= 4 * C and C >= 1")
    if not 0.0 <= homophily <= 1.0:
        raise ValueError("homophily must be in [0, 1]")
    if avg_degree < 0 or feat_dim < 1 or feat_noise < 0:
        raise ValueError("avg_degree, feat_noise must be >= 0 and feat_dim >= 1")
    rng = make_rng(seed, "sbm")
    labels = np.repeat(np.arange(C), -(-n // C))[:n]
    labels = labels[rng.permutation(n)]
    sizes = np.bincount(labels, minlength=C).astype(np.float64)

    partner = _partner_map(C, rng)
    # expected edge counts between class blocks
    expected = np.zeros((C, C))
    expected[np.arange(C), np.arange(C)] = homophily * avg_degree * sizes / 2.0
    send = (1.0 - homophily) * avg_degree * sizes / 2.0
    for c in range(C):
        if partner[c] != c:
            expected[c, partner[c]] += send[c]
            expected[partner[c], c] += send[c]
    pairs = np.outer(sizes, sizes)
    pairs[np.diag_indices(C)] = sizes * (sizes - 1) / 2.0
    prob = np.clip(expected / np.maximum(pairs, 1.0), 0.0, 1.0)

    iu, ju = np.triu_indices(n, k=1)
    p_edge = prob[labels[iu], labels[ju]]
    hit = rng.random(len(iu)) < p_edge
    graph = from_edges(n, np.stack([iu[hit], ju[hit]], axis=1), symmetrize=True)

    means = rng.normal(size=(C, feat_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    X = means[labels] + feat_noise * rng.normal(size=(n, feat_dim))
    name = name or f"sbm-n{n}-c{C}-h{homophily:g}"
    # features are stored as float32 on disk; keep the in-memory copy identical
    return Dataset(graph, X.astype(np.float32), labels, name, C)
