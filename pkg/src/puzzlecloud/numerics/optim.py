"""Adam and momentum SGD, updating parameters in place."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, StateError


@dataclass
class OptimizerState:
    kind: str
    base_lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    step: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd_momentum"):
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")

    def to_dict(self):
        return {
            "kind": self.kind, "base_lr": self.base_lr, "beta1": self.beta1, "beta2": self.beta2,
            "eps": self.eps, "momentum": self.momentum, "step": self.step,
            "slots": {name: {k: v.ravel().tolist() for k, v in s.items()} for name, s in self.slots.items()},
        }

    @classmethod
    def from_dict(cls, d, params):
        state = cls(kind=d["kind"], base_lr=d["base_lr"], beta1=d["beta1"], beta2=d["beta2"],
                    eps=d["eps"], momentum=d["momentum"], step=d["step"])
        for name, s in d["slots"].items():
            shape = params[name].data.shape
            state.slots[name] = {k: np.asarray(v, dtype=np.float64).reshape(shape) for k, v in s.items()}
        return state


def adam(base_lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    return OptimizerState("adam", base_lr, beta1=beta1, beta2=beta2, eps=eps)


def sgd_momentum(base_lr=0.01, momentum=0.9):
    return OptimizerState("sgd_momentum", base_lr, momentum=momentum)


def optimizer_step(params, state, lr):
    """Apply one update with learning rate ``lr`` and zero the gradients.

    Every parameter must carry a gradient; ``ModelParams.fill_missing_grads``
    exists for branches that were deliberately left out of the backward pass.
    """
    plist = list(params)
    for p in plist:
        if p.tensor.grad is None:
            raise StateError(f"parameter {p.name!r} has no gradient")
    state.step += 1
    t = state.step
    for p in plist:
        g = p.tensor.grad
        slot = state.slots.get(p.name)
        if state.kind == "adam":
            if slot is None:
                slot = state.slots[p.name] = {"m": np.zeros_like(g), "v": np.zeros_like(g)}
            slot["m"] = state.beta1 * slot["m"] + (1.0 - state.beta1) * g
            slot["v"] = state.beta2 * slot["v"] + (1.0 - state.beta2) * (g * g)
            m_hat = slot["m"] / (1.0 - state.beta1 ** t)
            v_hat = slot["v"] / (1.0 - state.beta2 ** t)
            p.tensor.data = p.tensor.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        else:
            if slot is None:
                slot = state.slots[p.name] = {"velocity": np.zeros_like(g)}
            slot["velocity"] = state.momentum * slot["velocity"] + g
            p.tensor.data = p.tensor.data - lr * slot["velocity"]
        p.tensor.grad = None
