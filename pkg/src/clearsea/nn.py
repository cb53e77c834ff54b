"""Thin layer zoo over the autodiff engine.

Modules hold parameters as :class:`~clearsea.engine.Tensor` objects with
``requires_grad=True`` and expose them in a stable, construction-ordered
flat list, which is what the optimizer, the checkpoint writer, and the
parameter-count report all iterate over.  Weight initialization draws
from a generator passed in by the caller, so a model seed fully pins
every parameter.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import engine
from .engine import Tensor


class Module:
    """Base class: parameter discovery, state dicts, call syntax."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            yield from _walk_params(value, f"{prefix}{name}")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def _walk_params(value, key: str) -> Iterator[tuple[str, Tensor]]:
    """Recursive parameter discovery through modules and nested containers."""
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield key, value
    elif isinstance(value, Module):
        yield from value.named_parameters(f"{key}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk_params(item, f"{key}.{i}")


INIT_STD = 0.02  # zero-mean Gaussian for every conv/linear weight


class Conv2d(Module):
    """Conv layer with built-in padding.

    ``pad`` is applied symmetrically to both spatial axes before the
    valid cross-correlation; ``pad_mode`` is ``reflect`` for the image
    pathways and ``zero`` for discriminator-style stacks.
    """

    def __init__(
        self,
        cin: int,
        cout: int,
        k: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int | None = None,
        pad_mode: str = "reflect",
        bias: bool = True,
        dtype=np.float32,
    ):
        self.stride = stride
        self.pad = (k - 1) // 2 if pad is None else pad
        self.pad_mode = pad_mode
        self.weight = Tensor(rng.normal(0.0, INIT_STD, (cout, cin, k, k)).astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if self.pad:
            x = engine.pad2d(x, (self.pad,) * 4, self.pad_mode)
        return engine.conv2d(x, self.weight, self.bias, self.stride)


class Linear(Module):
    def __init__(self, fin: int, fout: int, rng: np.random.Generator, bias: bool = True, dtype=np.float32):
        self.weight = Tensor(rng.normal(0.0, INIT_STD, (fout, fin)).astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(fout, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return engine.linear(x, self.weight, self.bias)

    def zero_(self) -> None:
        """Zero the weight (and bias) in place; used for identity-at-init maps."""
        self.weight.data[...] = 0.0
        if self.bias is not None:
            self.bias.data[...] = 0.0


def channel_stats(x: np.ndarray, eps: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample per-channel spatial mean and eps-floored std of (B, C, H, W).

    The returned std is ``sqrt(var + eps)``, the exact divisor used by
    :func:`clearsea.engine.instance_norm`, so restyling a tensor with its
    own stats reproduces it to round-off.
    """
    x = np.asarray(x)
    mu = x.mean(axis=(2, 3))
    sigma = np.sqrt(x.var(axis=(2, 3)) + eps)
    return mu, sigma


def adain(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Adaptive instance normalization: restyle ``x`` channel-wise.

    ``gamma`` and ``beta`` are (B, C); the content tensor is standardized
    per channel, then scaled and shifted.
    """
    b, c = x.shape[0], x.shape[1]
    if gamma.shape != (b, c) or beta.shape != (b, c):
        raise ValueError(f"adain params must be ({b}, {c}); got {gamma.shape} and {beta.shape}")
    xhat = engine.instance_norm(x, eps)
    g = engine.reshape(gamma, (b, c, 1, 1))
    bt = engine.reshape(beta, (b, c, 1, 1))
    return xhat * g + bt
