"""Index-level encoding of bags, shared by training and inference."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Bag, RelationHierarchy, Span, TypeInventory, Vocabulary, relative_distances, tokenize_type


@dataclass(frozen=True)
class EncodedSentence:
    words: np.ndarray  # (n,) vocabulary ids
    dist_s: np.ndarray  # (n,) position-table rows for the subject distance
    dist_o: np.ndarray
    head: Span
    tail: Span

    @property
    def length(self) -> int:
        return len(self.words)


@dataclass(frozen=True)
class TypeTokens:
    """Flattened mention tokens plus the averaging matrix that mean-pools them."""
    mentions: tuple[str, ...]
    token_ids: np.ndarray  # (L,)
    averager: np.ndarray  # (K, L)


@dataclass(frozen=True)
class EncodedBag:
    key: tuple[str, str, str]
    sentences: tuple[EncodedSentence, ...]
    subject_entity: int
    object_entity: int
    subject_types: TypeTokens
    object_types: TypeTokens
    labels: tuple[int, ...]  # class index at levels 0..M

    @property
    def fine_label(self) -> int:
        return self.labels[0]


def encode_types(mentions: list[str], vocab: Vocabulary) -> TypeTokens:
    ids, rows = [], []
    for j, mention in enumerate(mentions):
        toks = vocab.lookup(tokenize_type(mention)) or [vocab["BLANK"]]
        rows.append((j, len(ids), len(toks)))
        ids.extend(toks)
    avg = np.zeros((len(mentions), len(ids)))
    for j, start, width in rows:
        avg[j, start:start + width] = 1.0 / width
    return TypeTokens(tuple(mentions), np.asarray(ids, dtype=np.int64), avg)


class Featurizer:
    """Turns bags into index arrays given a vocabulary, type inventory and hierarchy."""

    def __init__(self, vocab: Vocabulary, types: TypeInventory, hierarchy: RelationHierarchy,
                 max_distance: int, entities: dict[str, int] | None = None):
        self.vocab = vocab
        self.types = types
        self.hierarchy = hierarchy
        self.max_distance = max_distance
        # row 0 of the entity table stands for any entity unseen in training
        self.entities = entities if entities is not None else {}

    @classmethod
    def for_training(cls, bags: list[Bag], vocab, types, hierarchy, max_distance) -> "Featurizer":
        entities: dict[str, int] = {}
        for bag in bags:
            for eid in (bag.subject_id, bag.object_id):
                entities.setdefault(eid, len(entities) + 1)
        return cls(vocab, types, hierarchy, max_distance, entities)

    @property
    def num_entities(self) -> int:
        return len(self.entities) + 1

    def sentence(self, inst) -> EncodedSentence:
        ds, do = relative_distances(inst, self.max_distance)
        shift = self.max_distance
        return EncodedSentence(
            np.asarray(self.vocab.lookup(inst.tokens), dtype=np.int64),
            np.asarray(ds, dtype=np.int64) + shift,
            np.asarray(do, dtype=np.int64) + shift,
            inst.head, inst.tail)

    def bag(self, bag: Bag) -> EncodedBag:
        return EncodedBag(
            bag.key,
            tuple(self.sentence(i) for i in bag.instances),
            self.entities.get(bag.subject_id, 0),
            self.entities.get(bag.object_id, 0),
            encode_types(self.types.mentions(bag.subject_id), self.vocab),
            encode_types(self.types.mentions(bag.object_id), self.vocab),
            tuple(self.hierarchy.indices(bag.relation)),
        )

    def bags(self, bags: list[Bag]) -> list[EncodedBag]:
        return [self.bag(b) for b in bags]
