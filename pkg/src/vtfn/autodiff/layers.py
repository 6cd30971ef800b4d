"""Static layer descriptions and their initializers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import ShapeError

KINDS = ("conv3d", "maxpool3d", "relu", "linear", "flatten", "concat", "softmax_xent")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    kernel: tuple[int, int, int] = (1, 1, 1)
    stride: tuple[int, int, int] = (1, 1, 1)
    padding: tuple[int, int, int] = (0, 0, 0)
    c_in: int = 0
    c_out: int = 0
    n_in: int = 0
    n_out: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if any(s < 1 for s in self.stride):
            raise ShapeError(f"{self.name}: strides must be >= 1")
        if any(p < 0 for p in self.padding):
            raise ShapeError(f"{self.name}: padding must be >= 0")

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv3d", "linear")

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "conv3d":
            return (self.c_out, self.c_in) + tuple(self.kernel)
        if self.kind == "linear":
            return (self.n_out, self.n_in)
        raise ValueError(f"{self.kind} has no weights")

    @property
    def bias_shape(self) -> tuple[int]:
        return (self.c_out,) if self.kind == "conv3d" else (self.n_out,)

    def fans(self) -> tuple[int, int]:
        if self.kind == "conv3d":
            k = int(np.prod(self.kernel))
            return self.c_in * k, self.c_out * k
        if self.kind == "linear":
            return self.n_in, self.n_out
        raise ValueError(f"{self.kind} has no fans")

    def param_count(self) -> int:
        if not self.has_params:
            return 0
        return int(np.prod(self.weight_shape)) + self.bias_shape[0]


def xavier_bound(spec: LayerSpec) -> float:
    fan_in, fan_out = spec.fans()
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_init(spec: LayerSpec, rng: np.random.Generator, dtype=np.float32):
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero bias."""
    a = xavier_bound(spec)
    w = rng.uniform(-a, a, size=spec.weight_shape).astype(dtype)
    b = np.zeros(spec.bias_shape, dtype=dtype)
    return w, b
