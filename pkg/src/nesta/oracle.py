"""Exact integer reference for MAC accumulation, 9-input dot products and
valid convolution.

Everything here uses Python integers (numpy object arrays for tensors), so
results never wrap.  This is the slow, trusted side of every equivalence
test and deliberately shares no code with the engine.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class LayerShape:
    """N batch, M filters, C channels, H square ifmap side, R kernel, S stride."""

    N: int
    M: int
    C: int
    H: int
    R: int
    S: int = 1

    def __post_init__(self):
        for name in ("N", "M", "C", "H", "R", "S"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.R > self.H:
            raise ValueError(f"kernel R={self.R} larger than ifmap H={self.H}")
        if (self.H - self.R) % self.S:
            raise ValueError(f"(H - R) = {self.H - self.R} not divisible by stride {self.S}")

    @property
    def E(self) -> int:
        return (self.H - self.R + self.S) // self.S

    @property
    def macs(self) -> int:
        return self.N * self.M * self.C * self.E * self.E * self.R * self.R

    @property
    def ifmap_dims(self) -> tuple[int, int, int, int]:
        return (self.N, self.C, self.H, self.H)

    @property
    def filter_dims(self) -> tuple[int, int, int, int]:
        return (self.M, self.C, self.R, self.R)

    @property
    def ofmap_dims(self) -> tuple[int, int, int, int]:
        return (self.N, self.M, self.E, self.E)


def mac_reference(acc: int, w: int, i: int) -> int:
    return int(acc) + int(w) * int(i)


def dot9(pairs: Sequence) -> int:
    pairs = list(pairs)
    if len(pairs) != 9:
        raise ValueError(f"dot9 needs exactly 9 pairs, got {len(pairs)}")
    total = 0
    for p in pairs:
        w, i = (p.w, p.i) if hasattr(p, "w") else p
        total = mac_reference(total, w, i)
    return total


def _check_dims(name, arr, dims):
    if tuple(arr.shape) != tuple(dims):
        raise ValueError(f"{name} has dims {tuple(arr.shape)}, expected {tuple(dims)}")


def conv_layer(ifmap, filters, bias, shape: LayerShape) -> np.ndarray:
    """Direct seven-loop valid convolution; returns an N x M x E x E object array."""
    ifmap = np.asarray(ifmap, dtype=object)
    filters = np.asarray(filters, dtype=object)
    bias = np.asarray(bias, dtype=object).reshape(-1)
    _check_dims("ifmap", ifmap, shape.ifmap_dims)
    _check_dims("filters", filters, shape.filter_dims)
    _check_dims("bias", bias, (shape.M,))

    N, M, C, R, S, E = shape.N, shape.M, shape.C, shape.R, shape.S, shape.E
    out = np.empty(shape.ofmap_dims, dtype=object)
    for z in range(N):
        for u in range(M):
            for x in range(E):
                for y in range(E):
                    acc = int(bias[u])
                    for k in range(C):
                        for i in range(R):
                            for j in range(R):
                                acc = mac_reference(
                                    acc, filters[u, k, i, j], ifmap[z, k, S * x + i, S * y + j]
                                )
                    out[z, u, x, y] = acc
    return out


def window_stream(ifmap, filters, shape: LayerShape, z: int, u: int, x: int, y: int):
    """(weight, input) pairs of one output window, channel-major then row-major."""
    S, R = shape.S, shape.R
    return [
        (int(filters[u, k, i, j]), int(ifmap[z, k, S * x + i, S * y + j]))
        for k in range(shape.C)
        for i in range(R)
        for j in range(R)
    ]
