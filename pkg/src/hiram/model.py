"""HiRAM forward pass: type enrichment, PCNN, hierarchical alignment, bag attention."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import tensor as tc
from .alignment import AlignedSentence, heads_from_params, hier_align, project, sentence_loss
from .bag import bag_logits, bag_representation, selective_heads, sweep_confidences, total_loss
from .config import TrainConfig
from .corpus import RelationHierarchy
from .embedding import TypeContext, bag_types, word_inputs
from .features import EncodedBag
from .params import ModelParams, init_params
from .pcnn import encode
from .tensor import Tensor

Dropout = Callable[[Tensor], Tensor]


@dataclass
class BagForward:
    types: TypeContext
    sentences: list[Tensor]  # s per sentence
    aligned: list[AlignedSentence]


@dataclass
class BatchLoss:
    total: Tensor
    bag: Tensor
    sentence: Tensor


class HiRAM:
    def __init__(self, config: TrainConfig, params: ModelParams, hierarchy: RelationHierarchy):
        self.config = config
        self.params = params
        self.hierarchy = hierarchy
        self.levels = config.active_levels
        if hierarchy.levels < self.levels:
            raise ValueError(f"hierarchy has {hierarchy.levels} coarse levels, config needs {self.levels}")
        self.ancestors = hierarchy.ancestor_index[: self.levels + 1]

    @classmethod
    def create(cls, config: TrainConfig, hierarchy: RelationHierarchy, vocab_size: int,
               num_entities: int) -> "HiRAM":
        classes = [hierarchy.num_classes(l) for l in range(hierarchy.levels + 1)]
        return cls(config, init_params(config, vocab_size, num_entities, classes), hierarchy)

    # -- forward ------------------------------------------------------------

    def forward_bag(self, bag: EncodedBag, p: Mapping[str, Tensor], dropout: Dropout | None = None) -> BagForward:
        c = self.config
        ctx = bag_types(bag.subject_types, bag.object_types, bag.subject_entity, bag.object_entity,
                        p, c.type_repr, c.type_aug, c.cfte)
        heads = heads_from_params(p, self.levels)
        projected = [project(ctx.pairs, h) for h in heads]
        sents, aligned = [], []
        for sent in bag.sentences:
            s = encode(word_inputs(sent, ctx, p), sent.head, sent.tail, p["cnn.kernels"], p["cnn.bias"])
            if dropout is not None:
                s = dropout(s)
            sents.append(s)
            aligned.append(hier_align(s, ctx.pairs, heads, projected))
        return BagForward(ctx, sents, aligned)

    def bag_logits(self, fwd: BagForward, labels: Sequence[int], p: Mapping[str, Tensor],
                   dropout: Dropout | None = None) -> Tensor:
        b = bag_representation(fwd.aligned, labels, selective_heads(p, self.levels), dropout)
        return bag_logits(b, p["bag.w"], p["bag.b"])

    def batch_loss(self, bags: Sequence[EncodedBag], p: Mapping[str, Tensor],
                   dropout: Dropout | None = None) -> BatchLoss:
        """L = mean bag NLL + beta * mean sentence NLL (summed over levels)."""
        bag_terms, aligned, labels = [], [], []
        for bag in bags:
            fwd = self.forward_bag(bag, p, dropout)
            logits = self.bag_logits(fwd, bag.labels, p, dropout)
            bag_terms.append(tc.reshape(tc.cross_entropy(logits, bag.fine_label), (1,)))
            aligned.extend(fwd.aligned)
            labels.extend([bag.labels] * len(fwd.aligned))
        l_bl = tc.mean(tc.concat(bag_terms))
        heads = heads_from_params(p, self.levels)
        l_sl = sentence_loss(aligned, labels, heads, guidance=self.config.guidance)
        beta = self.config.beta if self.config.guidance else 0.0
        return BatchLoss(total_loss(l_bl, l_sl, beta), l_bl, l_sl)

    # -- inference ----------------------------------------------------------

    def inference_leaves(self) -> dict[str, Tensor]:
        return self.params.leaves(requires_grad=False)

    def predict(self, bag: EncodedBag, p: Mapping[str, Tensor] | None = None) -> np.ndarray:
        """Confidence for every fine class (index 0 is NA) under the query sweep."""
        with tc.no_grad():
            p = p if p is not None else self.inference_leaves()
            fwd = self.forward_bag(bag, p)
            return sweep_confidences(fwd.aligned, selective_heads(p, self.levels), self.ancestors,
                                     p["bag.w"], p["bag.b"])

    def predict_many(self, bags: Sequence[EncodedBag]) -> np.ndarray:
        p = self.inference_leaves()
        return np.stack([self.predict(b, p) for b in bags]) if bags else np.zeros((0, self.hierarchy.num_classes(0)))

    def accuracy(self, bags: Sequence[EncodedBag]) -> float:
        if not bags:
            return float("nan")
        conf = self.predict_many(bags)
        gold = np.array([b.fine_label for b in bags])
        return float((conf.argmax(axis=1) == gold).mean())

    def alignments(self, bag: EncodedBag) -> list[dict]:
        """Per-sentence, per-level alignment weights with their (l, k) type sources."""
        with tc.no_grad():
            p = self.inference_leaves()
            fwd = self.forward_bag(bag, p)
        out = []
        for j, sent in enumerate(fwd.aligned):
            for level, a in enumerate(sent.weights):
                out.append({"bag": list(bag.key), "sentence": j, "level": level,
                            "weights": a.data.tolist(), "sources": [list(s) for s in fwd.types.pairs.sources]})
        return out
