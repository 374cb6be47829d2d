"""Relation-guided type-sentence alignment, one untied head per hierarchy level."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from . import tensor as tc
from .embedding import PairwiseTypeSet
from .errors import ContractError
from .tensor import Tensor


@dataclass
class AlignmentHead:
    level: int
    proj_w: Tensor  # d_h x d_c
    proj_b: Tensor
    bilinear: Tensor  # d_h x d_h
    gate_w: Tensor  # d_h x 2 d_h
    gate_b: Tensor
    ln_gain: Tensor
    ln_shift: Tensor
    cls_w: Tensor  # classes at this level x d_h
    cls_b: Tensor

    @classmethod
    def from_params(cls, p: Mapping[str, Tensor], level: int) -> "AlignmentHead":
        pre = f"align{level}"
        return cls(level, p[f"{pre}.proj.w"], p[f"{pre}.proj.b"], p[f"{pre}.bilinear"],
                   p[f"{pre}.gate.w"], p[f"{pre}.gate.b"], p[f"{pre}.ln.gain"], p[f"{pre}.ln.shift"],
                   p[f"{pre}.cls.w"], p[f"{pre}.cls.b"])

    @property
    def num_classes(self) -> int:
        return self.cls_w.shape[0]


def heads_from_params(p: Mapping[str, Tensor], levels: int) -> list[AlignmentHead]:
    return [AlignmentHead.from_params(p, l) for l in range(levels + 1)]


@dataclass
class AlignedSentence:
    levels: list[Tensor]  # u^(0) .. u^(M)
    weights: list[Tensor]  # a^(0) .. a^(M)

    @property
    def hierarchical(self) -> Tensor:
        """u^(h) = [u^(0); ...; u^(M)]."""
        return self.levels[0] if len(self.levels) == 1 else tc.concat(self.levels)


def project(C: PairwiseTypeSet, head: AlignmentHead) -> Tensor:
    """C~ = tanh(W_p C + b_p), d_h x m; independent of the sentence."""
    return tc.tanh(tc.affine(head.proj_w, C.columns, head.proj_b))


def align(s: Tensor, C: PairwiseTypeSet, head: AlignmentHead,
          projected: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Alignment distribution a = softmax(C~^T W_al s) and the projected pairs C~."""
    C_t = project(C, head) if projected is None else projected
    scores = tc.matmul(tc.transpose(C_t), tc.matmul(head.bilinear, s))
    return tc.softmax(scores), C_t


def integrate(a: Tensor, C_t: Tensor, s: Tensor, head: AlignmentHead) -> Tensor:
    """u = LayerNorm(s + g * s + (1 - g) * z) with z = C~ a and g = sigmoid(W_g [s; z] + b_g)."""
    z = tc.matmul(C_t, a)
    g = tc.sigmoid(tc.affine(head.gate_w, tc.concat([s, z]), head.gate_b))
    mixed = tc.add(tc.hadamard(g, s), tc.hadamard(1.0 - g, z))
    return tc.layer_norm(tc.add(s, mixed), head.ln_gain, head.ln_shift)


def sentence_logits(u: Tensor, head: AlignmentHead) -> Tensor:
    return tc.affine(head.cls_w, u, head.cls_b)


def sentence_distribution(u: Tensor, head: AlignmentHead) -> Tensor:
    return tc.softmax(sentence_logits(u, head))


def hier_align(s: Tensor, C: PairwiseTypeSet, heads: Sequence[AlignmentHead],
               projected: Sequence[Tensor] | None = None) -> AlignedSentence:
    us, weights = [], []
    for i, head in enumerate(heads):
        a, C_t = align(s, C, head, None if projected is None else projected[i])
        us.append(integrate(a, C_t, s, head))
        weights.append(a)
    return AlignedSentence(us, weights)


def sentence_loss(aligned: Sequence[AlignedSentence], labels: Sequence[Sequence[int]],
                  heads: Sequence[AlignmentHead], guidance: bool = True) -> Tensor:
    """Mean over sentences of the level-summed negative log-likelihood.

    ``labels[j][l]`` is sentence j's gold class index at level l. With guidance
    off the loss is a constant zero that is disconnected from every parameter.
    """
    if not guidance or not aligned:
        return tc.constant(0.0)
    if len(labels) != len(aligned):
        raise ContractError(f"{len(aligned)} sentences but {len(labels)} label rows")
    terms = []
    for sent, gold in zip(aligned, labels):
        for head, u in zip(heads, sent.levels):
            idx = gold[head.level]
            if not 0 <= idx < head.num_classes:
                raise ContractError(f"level-{head.level} label {idx} out of range for {head.num_classes} classes")
            terms.append(tc.cross_entropy(sentence_logits(u, head), idx))
    total = tc.sum_all(tc.concat([tc.reshape(t, (1,)) for t in terms]))
    return tc.scale(total, 1.0 / len(aligned))
