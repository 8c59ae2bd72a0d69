"""Minimal reverse-mode automatic differentiation over numpy arrays.

Forward ops record the graph through parent links; ``backward`` walks it
once in reverse topological order. A graph can be differentiated exactly
once: re-running backward without a fresh forward raises.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A value node in the computation graph.

    ``values`` is a float64 ndarray (model activations use shape
    (channels, time)); ``grad`` is populated by ``backward`` and has the
    same shape. Leaf tensors created with ``is_param=True`` are the
    trainable parameters.
    """

    __slots__ = ("values", "grad", "name", "is_param", "_parents", "_backward", "_consumed")

    def __init__(self, values, parents=(), backward=None, name=None, is_param=False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.name = name
        self.is_param = is_param
        self._parents = tuple(parents)
        self._backward = backward
        self._consumed = False

    @property
    def shape(self):
        return self.values.shape

    def accumulate(self, grad) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += grad

    def __repr__(self):
        tag = self.name or ("param" if self.is_param else "node")
        return f"Tensor({tag}, shape={self.values.shape})"


def _toposort(roots):
    order = []
    seen = set()
    stack = [(r, False) for r in roots]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, seed=None) -> None:
    """Reverse-order accumulation from a scalar loss node.

    Each reachable tensor's grad is populated exactly once per call. The
    traversed graph is consumed; call forward again before the next
    backward.
    """
    if not loss._parents and loss._backward is None:
        raise RuntimeError("backward without a recorded forward pass")
    if loss._consumed:
        raise RuntimeError("backward already ran on this graph; run forward again")
    if seed is None:
        if loss.values.size != 1:
            raise ValueError("backward without an explicit seed requires a scalar loss")
        seed = np.ones_like(loss.values)
    order = _toposort([loss])
    loss.accumulate(np.asarray(seed, dtype=np.float64))
    for node in reversed(order):
        node._consumed = True
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def constant(values, name=None) -> Tensor:
    return Tensor(values, name=name)


def parameter(values, name) -> Tensor:
    return Tensor(values, name=name, is_param=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.values.shape != b.values.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def grad_fn(g):
        a.accumulate(g)
        b.accumulate(g)

    return Tensor(a.values + b.values, parents=(a, b), backward=grad_fn)


def scale(a: Tensor, factor: float) -> Tensor:
    def grad_fn(g):
        a.accumulate(g * factor)

    return Tensor(a.values * factor, parents=(a,), backward=grad_fn)


def sub_const(a: Tensor, const: np.ndarray) -> Tensor:
    def grad_fn(g):
        a.accumulate(g)

    return Tensor(a.values - const, parents=(a,), backward=grad_fn)


def square(a: Tensor) -> Tensor:
    def grad_fn(g):
        a.accumulate(2.0 * a.values * g)

    return Tensor(a.values * a.values, parents=(a,), backward=grad_fn)


def mean_all(a: Tensor) -> Tensor:
    n = a.values.size

    def grad_fn(g):
        a.accumulate(np.full_like(a.values, float(g) / n))

    return Tensor(np.mean(a.values), parents=(a,), backward=grad_fn)


def sum_all(a: Tensor) -> Tensor:
    def grad_fn(g):
        a.accumulate(np.full_like(a.values, float(g)))

    return Tensor(np.sum(a.values), parents=(a,), backward=grad_fn)


def elu(a: Tensor) -> Tensor:
    neg = a.values < 0
    out = a.values.copy()
    out[neg] = np.expm1(a.values[neg])  # exp only where it matters

    def grad_fn(g):
        scale_factors = np.ones_like(out)
        scale_factors[neg] = out[neg] + 1.0
        a.accumulate(g * scale_factors)

    return Tensor(out, parents=(a,), backward=grad_fn)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)

    def grad_fn(g):
        a.accumulate(g * (1.0 - out * out))

    return Tensor(out, parents=(a,), backward=grad_fn)


def external_loss(pred: Tensor, value: float, grad_wrt_pred: np.ndarray) -> Tensor:
    """Wrap an externally computed scalar loss (with its analytic gradient)
    as a graph node, so waveform losses can drive the tape."""
    grad_arr = np.asarray(grad_wrt_pred, dtype=np.float64)
    if grad_arr.shape != pred.values.shape:
        raise ValueError(f"loss grad shape {grad_arr.shape} != pred shape {pred.values.shape}")

    def grad_fn(g):
        pred.accumulate(float(g) * grad_arr)

    return Tensor(np.asarray(value, dtype=np.float64), parents=(pred,), backward=grad_fn)


def straight_through(latent: Tensor, quantized_values: np.ndarray) -> Tensor:
    """Forward the quantized values, copy the gradient past quantization."""
    if quantized_values.shape != latent.values.shape:
        raise ValueError("quantized shape mismatch")

    def grad_fn(g):
        latent.accumulate(g)

    return Tensor(quantized_values.copy(), parents=(latent,), backward=grad_fn)


def zero_param_grads(params) -> None:
    for p in params:
        p.grad = np.zeros_like(p.values)
