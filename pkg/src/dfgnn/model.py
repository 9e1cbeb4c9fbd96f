"""Unrolled dual-frequency model, its ablations, and the GCN/MLP baselines.

Every forward is recorded on an :class:`~dfgnn.autodiff.Tape`, so the same
code path serves training (with gradients) and inference.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .autodiff import Node, NonFiniteError, Tape
from .graph import GraphOperators, spmm
from .prox import nuclear_norm
from .seeding import make_rng

VARIANTS = ("full", "no-high", "no-low", "no-constraints", "gcn", "mlp")
DFGNN_VARIANTS = ("full", "no-high", "no-low", "no-constraints")
ALPHA_NAMES = ("a1", "a2", "a3", "a4")
SCALAR_NAMES = ALPHA_NAMES + ("beta1", "beta2")
MAX_K = 32

# softplus(RAW_HALF) == 0.5
RAW_HALF = float(np.log(np.expm1(0.5)))


def softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    K: int = 3
    variant: str = "full"
    gcn_layers: int = 2
    dropout: float = 0.0
    # pins alpha_i (post-softplus) to a constant; 0 for alpha_3/alpha_4 turns that prox off
    fixed_alphas: dict[str, float] = field(default_factory=dict)
    # test-only: identity activations and no prox steps
    linear: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not 1 <= self.K <= MAX_K:
            raise ValueError(f"K must be in 1..{MAX_K}, got {self.K}")
        if self.gcn_layers < 2:
            raise ValueError("gcn_layers must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        for name, value in self.fixed_alphas.items():
            if name not in ALPHA_NAMES or value < 0:
                raise ValueError(f"bad fixed alpha {name}={value}")


@dataclass
class ModelParams:
    W_in: np.ndarray
    W_F: np.ndarray
    W_Q: np.ndarray
    b: np.ndarray
    a1: float
    a2: float
    a3: float
    a4: float
    beta1: float
    beta2: float

    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: np.asarray(getattr(self, f.name), dtype=np.float64) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> ModelParams:
        kw = {}
        for f in fields(cls):
            v = np.asarray(d[f.name], dtype=np.float64)
            kw[f.name] = float(v.reshape(())) if f.name in SCALAR_NAMES else v
        return cls(**kw)

    def alphas(self) -> tuple[float, float, float, float]:
        return tuple(softplus(getattr(self, n)) for n in ALPHA_NAMES)


@dataclass
class ForwardState:
    F: np.ndarray
    Zl: np.ndarray
    Zh: np.ndarray
    Q: np.ndarray
    logits: np.ndarray
    history: list = field(default_factory=list)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(d: int, h: int, C: int, seed: int) -> ModelParams:
    if min(d, h, C) < 1:
        raise ValueError("d, h and C must all be >= 1")
    rng = make_rng(seed, "init")
    return ModelParams(
        W_in=glorot(rng, d, h),
        W_F=glorot(rng, h, h),
        W_Q=glorot(rng, 2 * h, C),
        b=np.zeros((1, C)),
        a1=RAW_HALF, a2=RAW_HALF, a3=RAW_HALF, a4=RAW_HALF,
        beta1=0.5, beta2=0.5,
    )


def init_baseline_params(variant: str, d: int, h: int, C: int, seed: int,
                         layers: int = 2) -> dict[str, np.ndarray]:
    rng = make_rng(seed, "init")
    if variant == "mlp":
        return {"W0": glorot(rng, d, h), "W1": glorot(rng, h, C)}
    if variant == "gcn":
        if layers < 2:
            raise ValueError("GCN needs at least 2 layers")
        dims = [d] + [h] * (layers - 1) + [C]
        return {f"W{i}": glorot(rng, dims[i], dims[i + 1]) for i in range(layers)}
    raise ValueError(f"{variant!r} is not a baseline")


def init_model(config: ModelConfig, d: int, C: int, seed: int) -> dict[str, np.ndarray]:
    """Flat parameter dictionary for any variant."""
    if config.variant in DFGNN_VARIANTS:
        return init_params(d, config.hidden_dim, C, seed).as_dict()
    return init_baseline_params(config.variant, d, config.hidden_dim, C, seed,
                                layers=config.gcn_layers)


# ---------------------------------------------------------------------------
# tape-level building blocks


@dataclass
class _Alphas:
    a1: Node
    a2: Node
    a3: Node
    a4: Node
    prox_low: bool
    prox_high: bool


def _alphas(t: Tape, p: dict[str, Node], config: ModelConfig) -> _Alphas:
    out = {}
    for name in ALPHA_NAMES:
        if name in config.fixed_alphas:
            out[name] = t.const(config.fixed_alphas[name], name=f"fixed_{name}")
        else:
            out[name] = t.softplus(p[name])
    constrained = config.variant != "no-constraints" and not config.linear
    return _Alphas(
        **out,
        prox_low=constrained and config.fixed_alphas.get("a3", 1.0) != 0.0,
        prox_high=constrained and config.fixed_alphas.get("a4", 1.0) != 0.0,
    )


def _iteration(t: Tape, F: Node, Zl: Node | None, Zh: Node | None, Xh: Node,
               W_F: Node, al: _Alphas, ops: GraphOperators, variant: str, linear: bool):
    """One unrolled step; every update reads the k-th iterates."""
    A = ops.adj_norm
    act = (lambda x: x) if linear else t.relu
    low = variant != "no-low"
    high = variant != "no-high"

    # L̃ = I - Ã, so every L̃ product reuses an Ã product the step needs anyway
    AF = t.spmm_const(A, F)
    LF = t.sub(F, AF) if high else None
    AZl = t.spmm_const(A, Zl) if low else None
    AZh = t.spmm_const(A, Zh) if high else None

    agg = None
    if low:
        agg = t.scale(al.a1, t.spmm_const(A, AF))
    if high:
        hp = t.scale(al.a2, t.sub(LF, t.spmm_const(A, LF)))
        agg = hp if agg is None else t.add(agg, hp)
    F_next = t.sub(Xh, act(t.matmul(agg, W_F)))
    if low:
        F_next = t.add(F_next, t.scale(al.a1, AZl))
    if high:
        F_next = t.add(F_next, t.scale(al.a2, t.sub(Zh, AZh)))

    Zl_next = Zh_next = None
    if low:
        Zl_next = t.mul_const(0.5, t.add(act(AZl), AF))
        if al.prox_low:
            Zl_next = t.prox_nuclear_node(Zl_next, al.a3)
    if high:
        Zh_next = t.sub(LF, act(AZh))
        if al.prox_high:
            Zh_next = t.soft_threshold_node(Zh_next, al.a4)
    return F_next, Zl_next, Zh_next


@dataclass
class TapeOutput:
    logits: Node
    embedding: Node
    F: Node | None = None
    Zl: Node | None = None
    Zh: Node | None = None
    history: list = field(default_factory=list)


def _dropout(t: Tape, x: Node, rate: float, rng) -> Node:
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return t.mul_const(keep, x)


def dfgnn_tape(t: Tape, X: np.ndarray, ops: GraphOperators, p: dict[str, Node],
               config: ModelConfig, dropout_rng=None, keep_history: bool = False) -> TapeOutput:
    variant = config.variant
    act = (lambda x: x) if config.linear else t.relu
    x = _dropout(t, t.const(X), config.dropout, dropout_rng)
    Xh = act(t.matmul(x, p["W_in"]))
    al = _alphas(t, p, config)
    A, L = ops.adj_norm, ops.lap_norm
    F = Xh
    Zl = t.spmm_const(A, Xh) if variant != "no-low" else None
    Zh = t.spmm_const(L, Xh) if variant != "no-high" else None
    history = []
    for k in range(config.K):
        try:
            F, Zl, Zh = _iteration(t, F, Zl, Zh, Xh, p["W_F"], al, ops, variant, config.linear)
        except NonFiniteError as exc:
            raise NonFiniteError(f"iteration {k}: {exc}") from exc
        if keep_history:
            history.append(tuple(None if z is None else z.value.copy() for z in (F, Zl, Zh)))
    if Zl is None:
        Z = t.scale(p["beta2"], Zh)
    elif Zh is None:
        Z = t.scale(p["beta1"], Zl)
    else:
        Z = t.add(t.scale(p["beta1"], Zl), t.scale(p["beta2"], Zh))
    Q = t.concat_cols(F, Z)
    logits = t.add_bias(t.matmul(_dropout(t, Q, config.dropout, dropout_rng), p["W_Q"]), p["b"])
    return TapeOutput(logits, Q, F, Zl, Zh, history)


def gcn_tape(t: Tape, X: np.ndarray, ops: GraphOperators, p: dict[str, Node],
             config: ModelConfig, dropout_rng=None) -> TapeOutput:
    layers = len([k for k in p if k.startswith("W")])
    if layers < 2:
        raise ValueError("GCN needs at least 2 layers")
    H = t.const(X)
    hidden = H
    for i in range(layers):
        H = _dropout(t, H, config.dropout, dropout_rng)
        W = p[f"W{i}"]
        if H.shape[1] != W.shape[0]:
            raise ValueError(f"layer {i}: {H.shape} does not fit weight {W.shape}")
        H = t.spmm_const(ops.adj_norm, t.matmul(H, W))
        if i < layers - 1:
            H = t.relu(H)
            hidden = H
    return TapeOutput(H, hidden)


def mlp_tape(t: Tape, X: np.ndarray, p: dict[str, Node], config: ModelConfig,
             dropout_rng=None) -> TapeOutput:
    H = t.relu(t.matmul(_dropout(t, t.const(X), config.dropout, dropout_rng), p["W0"]))
    return TapeOutput(t.matmul(_dropout(t, H, config.dropout, dropout_rng), p["W1"]), H)


def model_tape(t: Tape, X: np.ndarray, ops: GraphOperators, values: dict[str, np.ndarray],
               config: ModelConfig, dropout_rng=None) -> TapeOutput:
    """Register ``values`` as parameters on ``t`` and run the configured variant."""
    p = {name: t.param(name, v) for name, v in values.items()}
    if config.variant in DFGNN_VARIANTS:
        return dfgnn_tape(t, X, ops, p, config, dropout_rng)
    if config.variant == "gcn":
        return gcn_tape(t, X, ops, p, config, dropout_rng)
    return mlp_tape(t, X, p, config, dropout_rng)


# ---------------------------------------------------------------------------
# plain-array API


def init_state(Xh: np.ndarray, ops: GraphOperators):
    """``(F0, Zl0, Zh0) = (Xh, Ã Xh, L̃ Xh)``."""
    if Xh.shape[0] != ops.n:
        raise ValueError(f"Xh has {Xh.shape[0]} rows, graph has {ops.n} nodes")
    return Xh.copy(), spmm(ops.adj_norm, Xh), spmm(ops.lap_norm, Xh)


def iterate(F, Zl, Zh, Xh, params: ModelParams, ops: GraphOperators,
            variant: str = "full", config: ModelConfig | None = None):
    """One unrolled step on plain arrays. Returns ``(F, Zl, Zh)``; a removed
    branch comes back as ``None``."""
    for M in (F, Xh) + tuple(z for z in (Zl, Zh) if z is not None):
        if M.shape != Xh.shape:
            raise ValueError("iterate inputs must all be n x h")
    config = config or ModelConfig(hidden_dim=Xh.shape[1], variant=variant)
    t = Tape()
    p = {name: t.param(name, v) for name, v in params.as_dict().items()}
    al = _alphas(t, p, config)
    out = _iteration(t, t.const(F), None if Zl is None else t.const(Zl),
                     None if Zh is None else t.const(Zh), t.const(Xh), p["W_F"], al, ops,
                     config.variant, config.linear)
    return tuple(None if z is None else z.value for z in out)


def forward(X: np.ndarray, ops: GraphOperators, params, config: ModelConfig,
            keep_history: bool = False) -> ForwardState:
    """Inference forward pass for a DFGNN variant."""
    if config.variant not in DFGNN_VARIANTS:
        raise ValueError("forward() runs DFGNN variants; use gcn_forward/mlp_forward for baselines")
    values = params.as_dict() if isinstance(params, ModelParams) else params
    t = Tape()
    p = {name: t.param(name, v) for name, v in values.items()}
    out = dfgnn_tape(t, np.asarray(X, dtype=np.float64), ops, p, config, keep_history=keep_history)
    n, h = out.F.shape
    zero = np.zeros((n, h))
    return ForwardState(
        F=out.F.value,
        Zl=zero if out.Zl is None else out.Zl.value,
        Zh=zero if out.Zh is None else out.Zh.value,
        Q=out.embedding.value,
        logits=out.logits.value,
        history=out.history,
    )


def gcn_forward(X: np.ndarray, ops: GraphOperators, *weights: np.ndarray) -> np.ndarray:
    """``Ã ReLU(Ã X W0) W1`` generalized to any number (>= 2) of layers."""
    t = Tape()
    p = {f"W{i}": t.param(f"W{i}", w) for i, w in enumerate(weights)}
    return gcn_tape(t, np.asarray(X, dtype=np.float64), ops, p, ModelConfig(variant="gcn")).logits.value


def mlp_forward(X: np.ndarray, W0: np.ndarray, W1: np.ndarray) -> np.ndarray:
    X, W0, W1 = (np.asarray(a, dtype=np.float64) for a in (X, W0, W1))
    if X.shape[1] != W0.shape[0] or W0.shape[1] != W1.shape[0]:
        raise ValueError("mlp dimension mismatch")
    return np.maximum(X @ W0, 0.0) @ W1


def objective_value(F, Zl, Zh, Xh, ops: GraphOperators, alphas) -> float:
    """The dual-frequency energy that the unrolled iterations descend.

    ``alphas`` are the four (already positive) weights. Low-pass smoothness
    is measured with L̃, high-pass with Ã; the attribute bands are ``ÃF`` and
    ``L̃F``.
    """
    a1, a2, a3, a4 = alphas
    A, L = ops.adj_norm, ops.lap_norm
    F_low, F_high = spmm(A, F), spmm(L, F)
    val = np.sum((F - Xh) ** 2)
    val += a1 * (np.sum(Zl * spmm(L, Zl)) + np.sum((F_low - Zl) ** 2))
    val += a2 * (np.sum(Zh * spmm(A, Zh)) + np.sum((F_high - Zh) ** 2))
    val += a3 * nuclear_norm(Zl) + a4 * np.abs(Zh).sum()
    return float(val)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"DFGM"
CHECKPOINT_VERSION = 1


def save_checkpoint(values: dict[str, np.ndarray], path) -> None:
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    for name, v in values.items():
        arr = np.asarray(v, dtype="<f8")
        arr = arr.reshape(1, 1) if arr.ndim == 0 else arr.reshape(arr.shape[0], -1)
        raw = name.encode("utf-8")
        chunks += [struct.pack("<I", len(raw)), raw, struct.pack("<QQ", *arr.shape),
                   np.ascontiguousarray(arr).tobytes()]
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Parameters by name; scalars come back with shape ``()``."""
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    out = {}
    while pos < len(buf):
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        rows, cols = struct.unpack_from("<QQ", buf, pos)
        pos += 16
        count = rows * cols
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(rows, cols)
        pos += 8 * count
        arr = arr.astype(np.float64)  # owned, writable copy of the buffer slice
        out[name] = arr.reshape(()) if name in SCALAR_NAMES else arr
    return out
