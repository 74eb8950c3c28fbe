"""Named, grouped parameters and seeded initialisation."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError
from .tensor import Tensor

GROUPS = ("feature", "main_head", "puzzle_head")


@dataclass
class Parameter:
    name: str
    tensor: Tensor
    group: str

    @property
    def data(self):
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad


def param_rng(seed, name):
    """Generator keyed by (seed, parameter name).

    Initial values therefore do not depend on which other parameters exist,
    so a model with and without the puzzle head share identical encoders.
    """
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def he_uniform(rng, fan_in, shape):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ModelParams:
    """Ordered collection of parameters partitioned into the three groups."""

    def __init__(self):
        self._params = {}

    def add(self, name, value, group):
        if group not in GROUPS:
            raise ConfigError(f"unknown parameter group {group!r}")
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        p = Parameter(name, Tensor(value, requires_grad=True), group)
        self._params[name] = p
        return p

    def add_linear(self, prefix, din, dout, group, seed):
        w = self.add(f"{prefix}.weight", he_uniform(param_rng(seed, f"{prefix}.weight"), din, (din, dout)), group)
        b = self.add(f"{prefix}.bias", np.zeros(dout), group)
        return w, b

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def group(self, group):
        return [p for p in self._params.values() if p.group == group]

    def zero_grad(self):
        for p in self._params.values():
            p.tensor.grad = None

    def fill_missing_grads(self):
        """Give every parameter without a gradient an explicit zero gradient."""
        for p in self._params.values():
            if p.tensor.grad is None:
                p.tensor.grad = np.zeros_like(p.tensor.data)

    def num_values(self):
        return int(sum(p.data.size for p in self._params.values()))

    def state_dict(self):
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_dict(self, state):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ConfigError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, value in state.items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape != self._params[name].data.shape:
                raise DimensionError(f"{name}: shape {value.shape} != {self._params[name].data.shape}")
            self._params[name].tensor.data = value.copy()
