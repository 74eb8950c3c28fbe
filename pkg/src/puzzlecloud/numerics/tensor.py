"""Reverse-mode autodiff over float64 numpy arrays.

Every op builds a new :class:`Tensor` holding references to its parents and a
closure that maps the output gradient to parent gradients. ``backward`` walks
the graph in reverse topological order. Only nodes with ``requires_grad`` take
part in the backward pass.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, EmptyCloudError, LabelError, ConfigError, NumericError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, op="leaf", parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.data.shape)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        """Propagate ``grad`` (default 1 for scalars) to every upstream leaf."""
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64).reshape(self.data.shape)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.accumulate(g)
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _checked(op, out):
    if not np.all(np.isfinite(out)):
        raise NumericError(op)
    return out


def _make(op, data, parents, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(_checked(op, data), requires_grad=req, op=op,
                  parents=tuple(parents) if req else (), backward=backward if req else None)


def linear(x, weight, bias=None):
    """Affine map along the last axis: ``x @ weight + bias``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.data.ndim != 2 or x.data.shape[-1] != weight.data.shape[0]:
        raise DimensionError(
            f"linear: input last dim {x.data.shape[-1:]} does not match weight {weight.data.shape}")
    din, dout = weight.data.shape
    lead = x.data.shape[:-1]
    x2 = x.data.reshape(-1, din)
    out = x2 @ weight.data
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (dout,):
            raise DimensionError(f"linear: bias shape {bias.data.shape} != ({dout},)")
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(-1, dout)
        gx = (g2 @ weight.data.T).reshape(x.data.shape) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _make("linear", out.reshape(lead + (dout,)), parents, backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    out = np.where(mask, x.data, 0.0)

    def backward(g):
        return (np.where(mask, g, 0.0),)

    return _make("relu", out, [x], backward)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    return _make("add", a.data + b.data, [a, b], lambda g: (g, g))


def scale(x, factor):
    x = as_tensor(x)
    factor = float(factor)
    return _make("scale", x.data * factor, [x], lambda g: (g * factor,))


def reshape(x, shape):
    x = as_tensor(x)
    old = x.data.shape
    return _make("reshape", x.data.reshape(shape), [x], lambda g: (g.reshape(old),))


def max_over_points(x):
    """Max over axis 1 of a (B, K, D) tensor.

    Returns ``(values, argmax)``; the gradient is routed to the first (lowest
    index) maximising point of every feature.
    """
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise DimensionError(f"max_over_points expects (B, K, D), got {x.data.shape}")
    b, k, d = x.data.shape
    if k == 0:
        raise EmptyCloudError("max_over_points over an empty point axis")
    idx = np.argmax(x.data, axis=1)
    out = np.max(x.data, axis=1)
    bi = np.arange(b)[:, None]
    di = np.arange(d)[None, :]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[bi, idx, di] = g
        return (gx,)

    return _make("max_over_points", out, [x], backward), idx


def concat_global(local, glob):
    """Broadcast a (B, G) global feature to every point of (B, K, L) and concatenate."""
    local, glob = as_tensor(local), as_tensor(glob)
    if local.data.ndim != 3 or glob.data.ndim != 2 or local.data.shape[0] != glob.data.shape[0]:
        raise DimensionError(f"concat_global: bad shapes {local.shape} and {glob.shape}")
    b, k, dl = local.data.shape
    dg = glob.data.shape[1]
    out = np.concatenate([local.data, np.broadcast_to(glob.data[:, None, :], (b, k, dg))], axis=2)

    def backward(g):
        return g[:, :, :dl], g[:, :, dl:].sum(axis=1)

    return _make("concat_global", out, [local, glob], backward)


def softmax_cross_entropy(logits, targets):
    """Mean negative log-likelihood of integer ``targets`` under softmax(logits)."""
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy expects (N, C) logits, got {logits.shape}")
    n, c = logits.data.shape
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise DimensionError(f"targets shape {targets.shape} != ({n},)")
    if n == 0:
        raise DimensionError("softmax_cross_entropy over zero rows")
    if not np.issubdtype(targets.dtype, np.integer):
        if not np.all(targets == np.floor(targets)):
            raise LabelError("targets must be integers")
        targets = targets.astype(np.int64)
    if np.any(targets < 0) or np.any(targets >= c):
        raise LabelError(f"target out of range [0, {c})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    nll = logsumexp - shifted[rows, targets]
    loss = np.array(nll.mean())

    def backward(g):
        probs = np.exp(shifted - logsumexp[:, None])
        probs[rows, targets] -= 1.0
        return (probs * (g / n),)

    return _make("softmax_cross_entropy", loss, [logits], backward)


def dropout(x, rate, training, rng):
    """Inverted dropout. Identity in eval mode or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.data.shape) >= rate
    factor = 1.0 / (1.0 - rate)
    mask = keep * factor

    def backward(g):
        return (g * mask,)

    return _make("dropout", x.data * mask, [x], backward)


def batch_standardize(x, gamma, beta, running, training, momentum=0.9, eps=1e-5):
    """Per-feature standardization over every axis but the last.

    ``running`` is a dict with ``mean`` and ``var`` arrays updated in place
    during training (``new = momentum * old + (1 - momentum) * batch``).
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.data.shape[-1]
    x2 = x.data.reshape(-1, d)
    if training:
        mean = x2.mean(axis=0)
        var = x2.var(axis=0)
        running["mean"] = momentum * running["mean"] + (1.0 - momentum) * mean
        running["var"] = momentum * running["var"] + (1.0 - momentum) * var
    else:
        mean, var = running["mean"], running["var"]
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x2 - mean) * inv
    out = (xhat * gamma.data + beta.data).reshape(x.data.shape)
    m = x2.shape[0]

    def backward(g):
        g2 = g.reshape(-1, d)
        ggamma = (g2 * xhat).sum(axis=0)
        gbeta = g2.sum(axis=0)
        gxhat = g2 * gamma.data
        if training:
            gx = inv / m * (m * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0))
        else:
            gx = gxhat * inv
        return gx.reshape(x.data.shape), ggamma, gbeta

    return _make("batch_standardize", out, [x, gamma, beta], backward)
