"""Multi-granular selective attention over the sentences of a bag."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import tensor as tc
from .alignment import AlignedSentence
from .errors import ContractError
from .tensor import Tensor


@dataclass
class SelectiveHead:
    level: int
    queries: Tensor  # one d_h query per class at this level
    bilinear: Tensor  # d_h x d_h

    @classmethod
    def from_params(cls, p: Mapping[str, Tensor], level: int) -> "SelectiveHead":
        return cls(level, p[f"sel{level}.query"], p[f"sel{level}.bilinear"])

    @property
    def num_classes(self) -> int:
        return self.queries.shape[0]


def selective_heads(p: Mapping[str, Tensor], levels: int) -> list[SelectiveHead]:
    return [SelectiveHead.from_params(p, l) for l in range(levels + 1)]


def stack_rows(reps: Sequence[Tensor]) -> Tensor:
    return tc.concat([tc.reshape(r, (1, r.shape[0])) for r in reps], axis=0)


def selective_attention(reps: Sequence[Tensor], query_index: int, head: SelectiveHead,
                        stacked: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """b = sum_j alpha_j u_j with alpha = softmax_j(u_j^T A q_r); returns (b, alpha)."""
    if not reps:
        raise ContractError("selective attention over an empty bag")
    if not 0 <= query_index < head.num_classes:
        raise ContractError(f"query {query_index} out of range for {head.num_classes} classes")
    U = stack_rows(reps) if stacked is None else stacked
    q = tc.reshape(tc.take(head.queries, [query_index]), (-1,))
    alpha = tc.softmax(tc.matmul(U, tc.matmul(head.bilinear, q)))
    return tc.matmul(tc.transpose(U), alpha), alpha


Dropout = Callable[[Tensor], Tensor]


def bag_representation(aligned: Sequence[AlignedSentence], labels: Sequence[int],
                       heads: Sequence[SelectiveHead], dropout: Dropout | None = None) -> Tensor:
    """b = [b^(0); ...; b^(M)], each level attended with the query of ``labels[l]``."""
    parts = []
    for head in heads:
        reps = [a.levels[head.level] for a in aligned]
        if dropout is not None:
            reps = [dropout(r) for r in reps]
        b, _ = selective_attention(reps, labels[head.level], head)
        parts.append(b)
    return parts[0] if len(parts) == 1 else tc.concat(parts)


def bag_logits(b: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return tc.affine(weight, b, bias)


def bag_distribution(b: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return tc.softmax(bag_logits(b, weight, bias))


def sweep_confidences(aligned: Sequence[AlignedSentence], heads: Sequence[SelectiveHead],
                      ancestors: np.ndarray, weight: Tensor, bias: Tensor) -> np.ndarray:
    """Inference-time confidence for every fine relation.

    For candidate r every level attends with the query of r's ancestor at that
    level, and the reported confidence is P(r | b_r) under that attention.
    ``ancestors[l][r]`` is the level-l class index of fine class r.
    """
    per_level = []
    for head in heads:
        reps = [a.levels[head.level] for a in aligned]
        U = stack_rows(reps)
        per_level.append([selective_attention(reps, c, head, stacked=U)[0] for c in range(head.num_classes)])
    n_fine = heads[0].num_classes
    conf = np.empty(n_fine)
    for r in range(n_fine):
        parts = [per_level[h.level][ancestors[h.level][r]] for h in heads]
        b = parts[0] if len(parts) == 1 else tc.concat(parts)
        conf[r] = bag_distribution(b, weight, bias).data[r]
    return conf


def total_loss(bag_loss: Tensor, sentence_loss: Tensor, beta: float) -> Tensor:
    """L = L_bl + beta * L_sl."""
    if beta < 0:
        raise ContractError(f"beta must be nonnegative, got {beta}")
    if beta == 0:
        return bag_loss
    return tc.add(bag_loss, tc.scale(sentence_loss, beta))
