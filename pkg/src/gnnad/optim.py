"""Named parameter storage and the Adam update."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import NumericalError


class ParameterStore:
    """Named leaf tensors plus per-parameter Adam moments and a global step.

    Parameter tensors are updated in place, so any model object holding a
    reference to a tensor sees updates immediately. Names must be unique;
    moment arrays always match their parameter's shape.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name!r}")
        tensor = value if isinstance(value, Tensor) else Tensor(value)
        tensor.name = name
        self._params[name] = tensor
        self._m[name] = np.zeros_like(tensor.data)
        self._v[name] = np.zeros_like(tensor.data)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def moments(self, name: str):
        return self._m[name], self._v[name]

    def clone(self, include=None, reset_optimizer: bool = True) -> "ParameterStore":
        """Deep copy of the store; ``include`` filters names when given.

        With ``reset_optimizer`` (the default) moments are zeroed and the step
        restarts at 0 -- the use case is starting a new training stage from
        pretrained values.
        """
        out = ParameterStore()
        for name, tensor in self._params.items():
            if include is not None and not include(name):
                continue
            out.add(name, Tensor(tensor.data.copy()))
            if not reset_optimizer:
                out._m[name] = self._m[name].copy()
                out._v[name] = self._v[name].copy()
        if not reset_optimizer:
            out.step = self.step
        return out


def adam_step(
    store: ParameterStore,
    grads: dict,
    lr: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParameterStore:
    """One bias-corrected Adam update over every parameter with a gradient.

    The global step increments exactly once per call. A parameter missing
    from ``grads`` is left entirely unchanged, moments included (this is how
    stages that only touch part of the store stay cheap). Returns the store
    for call chaining; the update itself is in place.
    """
    if lr <= 0:
        raise ValueError(f"adam_step: lr must be positive, got {lr}")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError(f"adam_step: betas must lie in [0, 1), got {beta1}, {beta2}")
    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, tensor in store.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != tensor.data.shape:
            raise ValueError(
                f"adam_step: gradient shape {g.shape} != parameter shape"
                f" {tensor.data.shape} for {name!r}"
            )
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        if not np.isfinite(update).all():
            raise NumericalError(f"non-finite Adam update for parameter {name!r}")
        tensor.data -= update
    return store
