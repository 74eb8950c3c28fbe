"""Finite-difference verification of autodiff gradients."""

from __future__ import annotations

import numpy as np


def relative_error(analytic, numeric, floor=1e-6):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(forward_fn, params, epsilon=1e-5, max_per_param=20, seed=0):
    """Worst relative error between autodiff and central differences.

    ``forward_fn()`` must return a scalar :class:`Tensor` and be deterministic.
    ``params`` is an iterable of :class:`Parameter` (or bare tensors). At most
    ``max_per_param`` entries per tensor are probed, chosen with ``seed``.
    """
    tensors = [getattr(p, "tensor", p) for p in params]
    for t in tensors:
        t.grad = None
    forward_fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    for t in tensors:
        t.grad = None

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, ga in zip(tensors, analytic):
        t.data = np.ascontiguousarray(t.data)
        flat = t.data.reshape(-1)
        n = flat.size
        picks = np.arange(n) if n <= max_per_param else rng.choice(n, max_per_param, replace=False)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + epsilon
            up = float(forward_fn().data)
            flat[i] = orig - epsilon
            down = float(forward_fn().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            worst = max(worst, relative_error(float(ga.reshape(-1)[i]), numeric))
    return worst
