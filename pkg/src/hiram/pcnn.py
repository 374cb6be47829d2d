"""Piecewise convolutional sentence encoder."""
from __future__ import annotations

from . import tensor as tc
from .corpus import Span
from .tensor import Tensor


def segments(head: Span, tail: Span, n: int) -> list[tuple[int, int]]:
    """Three consecutive column ranges split after each entity, ordered by position."""
    first, second = sorted((head, tail), key=lambda s: s.start)
    cut1 = min(first.end, n)
    cut2 = max(cut1, min(second.end, n))
    return [(0, cut1), (cut1, cut2), (cut2, n)]


def encode(V: Tensor, head: Span, tail: Span, kernels: Tensor, bias: Tensor) -> Tensor:
    """s = tanh([maxpool(H1); maxpool(H2); maxpool(H3)]) with H = conv1d(V)."""
    H = tc.conv1d(V, kernels, bias)
    n = H.shape[1]
    pooled = [tc.pool(H, "max", a, b) for a, b in segments(head, tail, n)]
    return tc.tanh(tc.concat(pooled))
