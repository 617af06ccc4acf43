"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A ``Tape`` records primitive applications eagerly (forward values are
computed immediately) and replays them backwards to accumulate gradients
for registered trainable leaves.  The primitive set is deliberately small:

    add, sub, scalar_mul, matmul, concat, silu, mse, sum

which is enough to express small MLPs with silu activations plus the
squared-error style losses used for training.  Also provides a central
finite-difference gradient checker and the Adam optimizer.

Everything runs in float64; arrays are plain C-contiguous numpy ndarrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


def as_array(x) -> np.ndarray:
    """Coerce to a C-contiguous float64 ndarray."""
    return np.ascontiguousarray(x, dtype=np.float64)


class Node:
    """One taped value: the forward result plus how to push gradients back.

    ``vjp`` maps the output gradient to a tuple of gradients aligned with
    ``parents``; it is None for leaves.
    """

    __slots__ = ("value", "parents", "vjp", "index", "name")

    def __init__(self, value, parents=(), vjp=None, index=-1, name=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.index = index
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.value.shape}{tag})"


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # branch on sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Tape:
    """Append-only record of primitive applications.

    Single-threaded by design; distinct tapes share no state.  Leaves
    registered with ``trainable=True`` form the parameter registry that
    ``backward`` reports gradients for.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}

    def _record(self, value, parents=(), vjp=None, name=None) -> Node:
        node = Node(as_array(value), tuple(parents), vjp, len(self.nodes), name)
        self.nodes.append(node)
        return node

    def leaf(self, value, name: str | None = None, trainable: bool = False) -> Node:
        """Register an input array; trainable leaves must be named."""
        node = self._record(value, name=name)
        if trainable:
            if name is None:
                raise ValueError("trainable leaf requires a name")
            if name in self.params:
                raise ValueError(f"duplicate parameter name {name!r}")
            self.params[name] = node
        return node

    # -- primitives ---------------------------------------------------------

    def add(self, a: Node, b: Node) -> Node:
        value = a.value + b.value  # numpy broadcasting rules
        return self._record(
            value, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        )

    def sub(self, a: Node, b: Node) -> Node:
        value = a.value - b.value
        return self._record(
            value, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        )

    def scalar_mul(self, a: Node, c: float) -> Node:
        c = float(c)
        return self._record(a.value * c, (a,), lambda g: (g * c,))

    def matmul(self, a: Node, b: Node) -> Node:
        if a.value.ndim != 2 or b.value.ndim != 2:
            raise ValueError(
                f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
        value = a.value @ b.value
        return self._record(
            value, (a, b),
            lambda g: (g @ b.value.T, a.value.T @ g),
        )

    def concat(self, parts: list[Node], axis: int = 0) -> Node:
        if not parts:
            raise ValueError("concat of zero arrays")
        ndim = parts[0].value.ndim
        for p in parts[1:]:
            if p.value.ndim != ndim:
                raise ValueError("concat rank mismatch")
        value = np.concatenate([p.value for p in parts], axis=axis)
        offsets = np.cumsum([p.shape[axis] for p in parts])[:-1]

        def vjp(g):
            return tuple(np.split(g, offsets, axis=axis))

        return self._record(value, tuple(parts), vjp)

    def silu(self, a: Node) -> Node:
        s = _sigmoid(a.value)
        value = a.value * s
        # d/dx x*sigma(x) = sigma(x) * (1 + x * (1 - sigma(x)))
        return self._record(
            value, (a,),
            lambda g: (g * s * (1.0 + a.value * (1.0 - s)),),
        )

    def mse(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ValueError(f"mse shape mismatch: {a.shape} vs {b.shape}")
        diff = a.value - b.value
        n = diff.size
        value = np.asarray(np.mean(diff * diff))
        return self._record(
            value, (a, b),
            lambda g: (g * 2.0 * diff / n, g * (-2.0) * diff / n),
        )

    def sum(self, a: Node) -> Node:
        value = np.asarray(a.value.sum())
        return self._record(
            value, (a,),
            lambda g: (g * np.ones_like(a.value),),
        )

    _PRIMS = ("add", "sub", "scalar_mul", "matmul", "concat", "silu", "mse", "sum")

    def apply_primitive(self, op: str, *inputs, **kwargs) -> Node:
        """Generic dispatch over the eight primitives by name."""
        if op not in self._PRIMS:
            raise ValueError(f"unknown primitive {op!r}")
        return getattr(self, op)(*inputs, **kwargs)

    # -- reverse pass -------------------------------------------------------

    def backward(self, loss: Node) -> dict[str, np.ndarray]:
        """Gradient of a scalar ``loss`` node w.r.t. every trainable leaf.

        Parameters not reachable from the loss get zero gradients.
        """
        if loss.value.size != 1:
            raise ValueError(f"loss node must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
        for node in reversed(self.nodes[: loss.index + 1]):
            g = grads.get(node.index)
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                acc = grads.get(parent.index)
                grads[parent.index] = pg if acc is None else acc + pg
        return {
            name: grads.get(p.index, np.zeros_like(p.value))
            for name, p in self.params.items()
        }


LossBuilder = Callable[[Tape, dict[str, Node]], Node]


def grad_check(build: LossBuilder, params: dict[str, np.ndarray], h: float = 1e-5) -> float:
    """Worst-case error of taped gradients vs central finite differences.

    ``build(tape, leaves)`` must construct a scalar loss node from the given
    trainable leaves.  Each parameter component is perturbed by +-h and the
    analytic gradient compared against (f(p+h) - f(p-h)) / (2h).  Relative
    error is reported except where the analytic gradient magnitude falls
    below 1e-8, where absolute error is used instead.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = {k: as_array(v) for k, v in params.items()}
    tape = Tape()
    leaves = {k: tape.leaf(v, name=k, trainable=True) for k, v in params.items()}
    analytic = tape.backward(build(tape, leaves))

    def loss_at(p):
        t = Tape()
        lv = {k: t.leaf(v, name=k, trainable=True) for k, v in p.items()}
        return float(build(t, lv).value)

    work = {k: v.copy() for k, v in params.items()}
    worst = 0.0
    for name, base in params.items():
        flat = work[name].reshape(-1)
        ana_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_at(work)
            flat[i] = orig - h
            lm = loss_at(work)
            flat[i] = orig
            num = (lp - lm) / (2.0 * h)
            ana = ana_flat[i]
            if abs(ana) < 1e-8:
                err = abs(ana - num)
            else:
                err = abs(ana - num) / max(abs(ana), abs(num))
            worst = max(worst, err)
    return worst


@dataclass
class AdamState:
    """Adam moments and hyperparameters; shapes mirror the parameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; mutates ``state``, returns new params."""
    if set(params) != set(grads):
        raise KeyError(
            f"gradient keys {sorted(grads)} do not match parameters {sorted(params)}")
    state.step_count += 1
    k = state.step_count
    out = {}
    for name, p in params.items():
        g = as_array(grads[name])
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name!r}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - state.beta1 ** k)
        v_hat = v / (1.0 - state.beta2 ** k)
        out[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return out
