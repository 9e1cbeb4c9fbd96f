"""Training loop, optimizer, split generation and multi-split experiments."""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .autodiff import NonFiniteError, Tape
from .data import Dataset
from .graph import GraphOperators, build_operators
from .metrics import Report, accuracy, homophily_rate, silhouette
from .model import DFGNN_VARIANTS, SCALAR_NAMES, VARIANTS, ModelConfig, init_model, model_tape
from .seeding import make_rng

LR_RANGE = (1e-5, 1e-2)
SWEEP_DEPTHS = (2, 4, 8, 16, 32)
LOG_HEADER = ("epoch", "train_loss", "train_acc", "val_acc", "test_acc")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    max_epochs: int = 1000
    patience: int = 25
    K: int = 3
    hidden_dim: int = 64
    repeats: int = 10
    seed: int = 0
    weight_decay: float = 0.0
    variant: str = "full"
    gcn_layers: int = 2
    dropout: float = 0.0
    # separate rate for a1..a4, beta1, beta2; None means the global rate
    scalar_learning_rate: float | None = None
    allow_any_lr: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.patience < 1 or self.repeats < 1:
            raise ValueError("patience and repeats must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not self.allow_any_lr:
            for lr in (self.learning_rate, self.scalar_learning_rate):
                if lr is not None and not LR_RANGE[0] <= lr <= LR_RANGE[1]:
                    raise ValueError(f"learning rate {lr} outside {LR_RANGE}; set allow_any_lr to override")
        self.model_config()

    def model_config(self) -> ModelConfig:
        return ModelConfig(hidden_dim=self.hidden_dim, K=self.K, variant=self.variant,
                           gcn_layers=self.gcn_layers, dropout=self.dropout)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def make_splits(labels, seed: int, ratios=(0.6, 0.2, 0.2)) -> Split:
    """Per-class shuffle cut into train/val/test (floors; remainder to test)."""
    labels = np.asarray(labels)
    rng = make_rng(seed, "splits")
    parts = ([], [], [])
    for c in np.unique(labels[labels >= 0]):
        members = np.flatnonzero(labels == c)
        if len(members) < 3:
            raise ValueError(f"class {c} has {len(members)} labeled nodes; need at least 3")
        members = members[rng.permutation(len(members))]
        n_train = int(np.floor(ratios[0] * len(members)))
        n_val = int(np.floor(ratios[1] * len(members)))
        parts[0].append(members[:n_train])
        parts[1].append(members[n_train:n_train + n_val])
        parts[2].append(members[n_train + n_val:])
    train, val, test = (np.sort(np.concatenate(p)) if p else np.zeros(0, dtype=np.int64) for p in parts)
    return Split(train, val, test)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0,
              lr_overrides: dict[str, float] | None = None):
    """Bias-corrected Adam with coupled L2 weight decay. Returns ``(params, state)``."""
    b1, b2 = betas
    step = state.step + 1
    new_params, m_out, v_out = {}, {}, {}
    for name, w in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != np.shape(w):
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {np.shape(w)}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name} at step {step}")
        if weight_decay:
            g = g + weight_decay * w
        m = b1 * state.m.get(name, 0.0) + (1 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** step)
        v_hat = v / (1 - b2 ** step)
        rate = lr if not lr_overrides or name not in lr_overrides else lr_overrides[name]
        new_params[name] = w - rate * m_hat / (np.sqrt(v_hat) + eps)
        m_out[name], v_out[name] = m, v
    return new_params, AdamState(m_out, v_out, step)


@dataclass
class RepeatResult:
    index: int
    log: list[tuple[int, float, float, float, float]]
    best_epoch: int
    best_val_acc: float
    test_acc: float
    silhouette: float | None
    params: dict[str, np.ndarray]
    embedding: np.ndarray | None = None
    failed: bool = False
    error: str = ""

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for epoch, *vals in self.log:
            w.writerow([epoch] + [f"{v:.6g}" for v in vals])
        return buf.getvalue()


def _evaluate(values, dataset, ops, mc):
    t = Tape()
    out = model_tape(t, dataset.X, ops, values, mc)
    return out.logits.value, out.embedding.value


def train_one(dataset: Dataset, ops: GraphOperators, config: TrainConfig, split: Split,
              init_seed: int | None = None, index: int = 0) -> RepeatResult:
    """Train to early stop on validation accuracy and restore the best checkpoint."""
    mc = config.model_config()
    seed = config.seed if init_seed is None else init_seed
    labels = dataset.labels
    values = init_model(mc, dataset.num_features, dataset.num_classes, seed)
    state = AdamState()
    dropout_rng = make_rng(seed, "dropout") if mc.dropout > 0 else None
    overrides = None
    if config.scalar_learning_rate is not None:
        overrides = {k: config.scalar_learning_rate for k in SCALAR_NAMES if k in values}

    log = []
    best_val, best_epoch, best_values = -1.0, 0, values
    wait = 0
    try:
        for epoch in range(1, config.max_epochs + 1):
            t = Tape()
            out = model_tape(t, dataset.X, ops, values, mc, dropout_rng)
            loss = t.softmax_cross_entropy_masked(out.logits, labels, split.train)
            logits = out.logits.value
            if dropout_rng is not None:
                logits, _ = _evaluate(values, dataset, ops, mc)
            pred = logits.argmax(axis=1)
            train_acc = accuracy(pred, labels, split.train)
            val_acc = accuracy(pred, labels, split.val)
            test_acc = accuracy(pred, labels, split.test)
            log.append((epoch, float(loss.value), train_acc, val_acc, test_acc))
            grads = t.backward(loss)
            if val_acc > best_val:
                best_val, best_epoch, best_values, wait = val_acc, epoch, values, 0
            else:
                wait += 1
                if wait >= config.patience:
                    break
            values, state = adam_step(values, grads, state, config.learning_rate,
                                      weight_decay=config.weight_decay, lr_overrides=overrides)
    except NonFiniteError as exc:
        return RepeatResult(index, log, best_epoch, best_val, float("nan"), None, best_values,
                            failed=True, error=str(exc))

    logits, emb = _evaluate(best_values, dataset, ops, mc)
    pred = logits.argmax(axis=1)
    test_idx = split.test[labels[split.test] >= 0]
    try:
        sc = silhouette(emb, labels, test_idx)
    except ValueError:
        sc = None
    return RepeatResult(index, log, best_epoch, best_val, accuracy(pred, labels, split.test),
                        sc, best_values, emb)


@dataclass
class RunResult:
    config: TrainConfig
    repeats: list[RepeatResult]
    homophily_rate: float | None
    wall_time: float = 0.0

    @property
    def completed(self) -> list[RepeatResult]:
        return [r for r in self.repeats if not r.failed]

    @property
    def accuracies(self) -> list[float]:
        return [r.test_acc for r in self.completed]

    @property
    def failures(self) -> int:
        return len(self.repeats) - len(self.completed)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    def report(self, dataset_name: str = "") -> Report:
        scs = [r.silhouette for r in self.completed if r.silhouette is not None]
        cfg = asdict(self.config)
        cfg["dataset"] = dataset_name
        return Report(
            config=cfg,
            accuracies=self.accuracies,
            homophily_rate=self.homophily_rate,
            silhouette=float(np.mean(scs)) if scs else None,
            failures=self.failures,
            best_epochs=[r.best_epoch for r in self.completed],
            silhouettes=scs,
        )


class AllRepeatsFailed(RuntimeError):
    pass


def worker_count() -> int:
    env = os.environ.get("DFGNN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _split_for(dataset: Dataset, seed: int) -> Split:
    if dataset.splits is not None:
        s = dataset.splits
        return Split(np.sort(s["train"]), np.sort(s["val"]), np.sort(s["test"]))
    return make_splits(dataset.labels, seed)


def run_experiment(dataset: Dataset, config: TrainConfig, ops: GraphOperators | None = None,
                   workers: int | None = None) -> RunResult:
    """``config.repeats`` fresh splits and inits; repeat r uses seed ``config.seed + r``."""
    ops = ops or build_operators(dataset.graph)
    start = time.perf_counter()

    def one(r: int) -> RepeatResult:
        seed = config.seed + r
        return train_one(dataset, ops, config, _split_for(dataset, seed), init_seed=seed, index=r)

    workers = min(workers or worker_count(), config.repeats)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            repeats = list(pool.map(one, range(config.repeats)))
    else:
        repeats = [one(r) for r in range(config.repeats)]
    try:
        hr = homophily_rate(dataset.graph, dataset.labels)
    except ValueError:
        hr = None
    result = RunResult(config, repeats, hr, time.perf_counter() - start)
    if not result.completed:
        raise AllRepeatsFailed("; ".join(r.error for r in repeats))
    return result


def sweep_depth(dataset: Dataset, config: TrainConfig, depths, variants=("gcn", "full"),
                ops: GraphOperators | None = None, workers: int | None = None):
    """Rows ``(depth, variant, mean_acc, std_acc)``. Depth is K for DFGNN
    variants and the layer count for GCN."""
    depths = [int(d) for d in depths]
    bad = [d for d in depths if d not in SWEEP_DEPTHS]
    if not depths or bad:
        raise ValueError(f"depths must be drawn from {SWEEP_DEPTHS}, got {depths}")
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    ops = ops or build_operators(dataset.graph)
    rows = []
    for depth in depths:
        for v in variants:
            if v in DFGNN_VARIANTS:
                cfg = replace(config, variant=v, K=depth)
            elif v == "gcn":
                cfg = replace(config, variant=v, gcn_layers=depth)
            else:
                cfg = replace(config, variant=v)
            res = run_experiment(dataset, cfg, ops, workers)
            rows.append((depth, v, res.mean, res.std))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("depth", "variant", "mean_acc", "std_acc"))
    for depth, v, mean, std in rows:
        w.writerow([depth, v, f"{mean:.6g}", f"{std:.6g}"])
    return buf.getvalue()
