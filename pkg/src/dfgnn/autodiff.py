"""A small reverse-mode tape over dense numpy arrays.

Only the primitives the unrolled model needs are provided. Sparse graph
operators enter as constants; no gradient flows into them.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .graph import CsrMatrix, spmm
from .prox import prox_nuclear, soft_threshold


class NonFiniteError(FloatingPointError):
    """Raised when a forward value stops being finite."""


class Node:
    __slots__ = ("value", "parents", "backward_fn", "name", "trainable", "tape")

    def __init__(self, value, parents=(), backward_fn=None, name=None, trainable=False):
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name
        self.trainable = trainable
        self.tape = None

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        label = self.name or "node"
        return f"<{label} shape={self.shape}>"


class Tape:
    """Records operations in execution order; :meth:`backward` replays them in reverse."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}
        self.check_finite = check_finite

    # leaves -----------------------------------------------------------------

    def param(self, name: str, value) -> Node:
        if name in self.params:
            raise KeyError(f"parameter {name!r} registered twice")
        node = Node(np.asarray(value, dtype=np.float64), name=name, trainable=True)
        self.params[name] = node
        return self._push(node)

    def const(self, value, name=None) -> Node:
        return self._push(Node(np.asarray(value, dtype=np.float64), name=name))

    def _push(self, node: Node) -> Node:
        node.tape = self
        self.nodes.append(node)
        return node

    def _record(self, value, parents, backward_fn, op: str) -> Node:
        # a NaN or inf anywhere poisons the sum, which is cheaper than a full mask
        if self.check_finite and not np.isfinite(np.sum(value)):
            raise NonFiniteError(f"non-finite output from {op} (inputs: {parents})")
        return self._push(Node(value, tuple(parents), backward_fn, name=op))

    # primitives -------------------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        if a.shape[-1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
        return self._record(a.value @ b.value, (a, b),
                            lambda g: (g @ b.value.T, a.value.T @ g), "matmul")

    def spmm_const(self, S: CsrMatrix, a: Node) -> Node:
        St = S.T
        return self._record(spmm(S, a.value), (a,), lambda g: (spmm(St, g),), "spmm")

    def add(self, a: Node, b: Node) -> Node:
        _same_shape(a, b, "add")
        return self._record(a.value + b.value, (a, b), lambda g: (g, g), "add")

    def sub(self, a: Node, b: Node) -> Node:
        _same_shape(a, b, "sub")
        return self._record(a.value - b.value, (a, b), lambda g: (g, -g), "sub")

    def add_bias(self, a: Node, b: Node) -> Node:
        """``a + b`` with a 1 x C row vector ``b`` repeated down the rows."""
        if b.shape != (1, a.shape[1]):
            raise ValueError(f"bias shape {b.shape} does not fit {a.shape}")
        return self._record(a.value + b.value, (a, b),
                            lambda g: (g, g.sum(axis=0, keepdims=True)), "add_bias")

    def scale(self, alpha: Node, a: Node) -> Node:
        """Scalar node times matrix node."""
        if alpha.shape != ():
            raise ValueError("scale expects a scalar node")
        return self._record(alpha.value * a.value, (alpha, a),
                            lambda g: (np.sum(g * a.value), alpha.value * g), "scale")

    def mul_const(self, c: float | np.ndarray, a: Node) -> Node:
        return self._record(c * a.value, (a,), lambda g: (c * g,), "mul_const")

    def relu(self, a: Node) -> Node:
        mask = a.value > 0
        return self._record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")

    def softplus(self, a: Node) -> Node:
        x = a.value
        val = np.logaddexp(0.0, x)
        sig = 1.0 / (1.0 + np.exp(-x))
        return self._record(val, (a,), lambda g: (g * sig,), "softplus")

    def concat_cols(self, a: Node, b: Node) -> Node:
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"concat_cols row mismatch {a.shape} vs {b.shape}")
        k = a.shape[1]
        return self._record(np.concatenate([a.value, b.value], axis=1), (a, b),
                            lambda g: (g[:, :k], g[:, k:]), "concat_cols")

    def soft_threshold_node(self, a: Node, lam: Node) -> Node:
        """l1 prox; exact mask gradient for ``a``, none for the threshold."""
        t = float(lam.value)
        mask = np.abs(a.value) > t
        return self._record(soft_threshold(a.value, t), (a, lam),
                            lambda g: (g * mask, np.zeros(())), "soft_threshold")

    def prox_nuclear_node(self, a: Node, lam: Node) -> Node:
        """Nuclear prox forward with a straight-through backward."""
        return self._record(prox_nuclear(a.value, float(lam.value)), (a, lam),
                            lambda g: (g, np.zeros(())), "prox_nuclear")

    def identity_passthrough(self, a: Node, forward: Callable[[np.ndarray], np.ndarray]) -> Node:
        """Apply ``forward`` to the value but pass the cotangent through unchanged."""
        out = forward(a.value)
        if np.shape(out) != a.shape:
            raise ValueError("straight-through forward must preserve shape")
        return self._record(out, (a,), lambda g: (g,), "straight_through")

    def sum(self, a: Node) -> Node:
        return self._record(np.sum(a.value), (a,),
                            lambda g: (np.full(a.shape, float(g)),), "sum")

    def softmax_cross_entropy_masked(self, logits: Node, labels, mask) -> Node:
        """Mean over masked rows of ``-log softmax(logits)[row, label]``."""
        idx = _mask_indices(mask, logits.shape[0])
        if len(idx) == 0:
            raise ValueError("cross-entropy mask is empty")
        labels = np.asarray(labels)
        y = labels[idx]
        C = logits.shape[1]
        if np.any(y < 0) or np.any(y >= C):
            raise ValueError("masked rows carry invalid class labels")
        z = logits.value[idx]
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = -logp[np.arange(len(idx)), y].mean()

        def backward(g):
            p = np.exp(logp)
            p[np.arange(len(idx)), y] -= 1.0
            out = np.zeros(logits.shape)
            out[idx] = p * (float(g) / len(idx))
            return (out,)

        return self._record(np.asarray(loss), (logits,), backward, "cross_entropy")

    # reverse pass -----------------------------------------------------------

    def backward(self, output: Node, cotangent=None, clear: bool = True) -> dict[str, np.ndarray]:
        """Gradients of ``output`` for every registered parameter.

        Scalar outputs default to a unit cotangent. Parameters the output does
        not depend on receive zeros.
        """
        if output.tape is not self:
            raise ValueError("output node was not recorded on this tape")
        if cotangent is None:
            if output.shape != ():
                raise ValueError("non-scalar output needs an explicit cotangent")
            cotangent = np.ones(())
        grads: dict[int, np.ndarray] = {id(output): np.asarray(cotangent, dtype=np.float64)}
        stop = self.nodes.index(output)
        for node in reversed(self.nodes[: stop + 1]):
            g = grads.get(id(node))
            if g is None or node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        out = {}
        for name, leaf in self.params.items():
            g = grads.get(id(leaf))
            out[name] = np.zeros_like(leaf.value) if g is None else np.asarray(g).reshape(leaf.shape)
        if clear:
            self.nodes.clear()
            self.params.clear()
        return out


def _same_shape(a: Node, b: Node, op: str):
    if a.shape != b.shape:
        raise ValueError(f"{op} shape mismatch {a.shape} vs {b.shape}")


def _mask_indices(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape != (n,):
            raise ValueError("boolean mask length does not match rows")
        return np.flatnonzero(mask)
    return mask.astype(np.int64)


def grad_check(loss_fn: Callable[[dict[str, np.ndarray], Tape], Node],
               params: dict[str, np.ndarray], eps: float = 1e-5, nudge: float = 1e-3) -> float:
    """Max relative error between tape gradients and central differences.

    ``loss_fn(values, tape)`` must register each entry of ``values`` with
    ``tape.param`` and return a scalar node. The error per entry is
    ``|a - f| / max(1, |a|, |f|)``. Entries with magnitude below ``nudge``
    are pushed out to ``+-nudge`` first so no difference straddles a ReLU
    kink at the origin; pass ``nudge=0`` to check the point as given.
    """
    params = {k: _nudged(np.asarray(v, dtype=np.float64), nudge) for k, v in params.items()}
    tape = Tape()
    analytic = tape.backward(loss_fn(params, tape))

    def evaluate(values):
        t = Tape()
        v = float(loss_fn(values, t).value)
        if not np.isfinite(v):
            raise NonFiniteError("loss is not finite during finite differences")
        return v

    worst = 0.0
    for name, value in params.items():
        base = np.asarray(value, dtype=np.float64)
        for idx in np.ndindex(base.shape):
            plus = dict(params)
            minus = dict(params)
            p = base.copy()
            m = base.copy()
            p[idx] += eps
            m[idx] -= eps
            plus[name] = p
            minus[name] = m
            fd = (evaluate(plus) - evaluate(minus)) / (2 * eps)
            a = float(analytic[name][idx])
            worst = max(worst, abs(a - fd) / max(1.0, abs(a), abs(fd)))
    return worst


def _nudged(x: np.ndarray, nudge: float) -> np.ndarray:
    if nudge <= 0:
        return x
    small = np.abs(x) < nudge
    return np.where(small, np.where(x < 0, -nudge, nudge), x)
