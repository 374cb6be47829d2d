"""Sentence/bag data model, corpus I/O, relation hierarchy and vocabulary."""
from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, CorpusError

log = logging.getLogger(__name__)

NA = "NA"
PAD, UNK, BLANK = "<pad>", "<unk>", "BLANK"
PAD_ID, UNK_ID, BLANK_ID = 0, 1, 2

DEFAULT_TYPE_LIMIT = 4
DEFAULT_MAX_DISTANCE = 100
DEFAULT_MIN_FREQ = 2

SPLITS = ("train", "test")
TYPES_FILE = "types.jsonl"


@dataclass(frozen=True)
class Span:
    start: int
    end: int  # exclusive

    def __len__(self):
        return self.end - self.start


@dataclass(frozen=True)
class SentenceInstance:
    tokens: tuple[str, ...]
    head: Span
    tail: Span
    relation: str
    head_id: str = ""
    tail_id: str = ""

    def validate(self):
        n = len(self.tokens)
        if n < 1:
            raise ContractError("sentence has no tokens")
        for role, span in (("head", self.head), ("tail", self.tail)):
            if not 0 <= span.start < span.end <= n:
                raise ContractError(f"{role} span [{span.start}, {span.end}) outside {n} tokens")
        if self.head.start < self.tail.end and self.tail.start < self.head.end:
            raise ContractError("head and tail spans overlap")

    def to_record(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "head": {"id": self.head_id, "start": self.head.start, "end": self.head.end},
            "tail": {"id": self.tail_id, "start": self.tail.start, "end": self.tail.end},
            "relation": self.relation,
        }


@dataclass(frozen=True)
class Bag:
    subject_id: str
    object_id: str
    relation: str
    instances: tuple[SentenceInstance, ...]
    coarse_labels: tuple[str, ...] = ()

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.subject_id, self.object_id, self.relation)

    def with_instances(self, instances: Sequence[SentenceInstance]) -> "Bag":
        return Bag(self.subject_id, self.object_id, self.relation, tuple(instances), self.coarse_labels)


# ---------------------------------------------------------------------------
# relation hierarchy


def derive_hierarchy(label: str, levels: int) -> list[str]:
    """Coarse ancestors of a '/'-path relation: level l drops the last l segments."""
    if label == NA:
        return [NA] * levels
    parts = [p for p in label.split("/") if p]
    if not label.startswith("/") or len(parts) < levels + 1:
        raise ContractError(f"relation {label!r} has too few path segments for {levels} coarse levels")
    return ["/" + "/".join(parts[:len(parts) - l]) for l in range(1, levels + 1)]


class RelationHierarchy:
    """Per-level label sets with contiguous indices; level 0 is the fine label.

    NA, when present, takes index 0 at every level.
    """

    def __init__(self, fine_labels: Iterable[str], levels: int):
        self.levels = levels
        fine = sorted(set(fine_labels) | {NA}, key=lambda r: (r != NA, r))
        self.labels: list[list[str]] = [fine]
        self.parents: dict[str, list[str]] = {r: derive_hierarchy(r, levels) for r in fine}
        for l in range(1, levels + 1):
            coarse = {self.parents[r][l - 1] for r in fine}
            self.labels.append(sorted(coarse, key=lambda r: (r != NA, r)))
        self.index = [{lab: i for i, lab in enumerate(labs)} for labs in self.labels]
        # ancestor_index[l][fine_idx] -> index at level l
        self.ancestor_index = np.array(
            [[self.index[l][self.chain(r)[l]] for r in fine] for l in range(levels + 1)], dtype=np.int64)

    def chain(self, label: str) -> list[str]:
        return [label] + self.parents[label] if label in self.parents else [label] + derive_hierarchy(label, self.levels)

    def num_classes(self, level: int) -> int:
        return len(self.labels[level])

    def indices(self, label: str) -> list[int]:
        """Class index of ``label`` and of each of its ancestors, levels 0..M."""
        return [self.index[l][lab] for l, lab in enumerate(self.chain(label))]

    def truncated(self, levels: int) -> "RelationHierarchy":
        return RelationHierarchy(self.labels[0], levels)


# ---------------------------------------------------------------------------
# vocabulary and entity types

_TYPE_SPLIT = re.compile(r"[/._]+")


def tokenize_type(mention: str) -> list[str]:
    if mention == BLANK:
        return [BLANK]
    return [t for t in _TYPE_SPLIT.split(mention.lower()) if t]


class Vocabulary:
    def __init__(self, words: Iterable[str] = ()):
        self.itos = [PAD, UNK, BLANK]
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        for w in words:
            if w not in self.stoi:
                self.stoi[w] = len(self.itos)
                self.itos.append(w)

    @classmethod
    def build(cls, counts: Counter, min_freq: int = DEFAULT_MIN_FREQ) -> "Vocabulary":
        kept = sorted((w for w, c in counts.items() if c >= min_freq), key=lambda w: (-counts[w], w))
        return cls(kept)

    def __len__(self):
        return len(self.itos)

    def __getitem__(self, word: str) -> int:
        return self.stoi.get(word, UNK_ID)

    def lookup(self, words: Iterable[str]) -> list[int]:
        return [self.stoi.get(w, UNK_ID) for w in words]


class TypeInventory:
    """Entity id -> exactly ``limit`` type mentions, BLANK-padded at the tail."""

    def __init__(self, raw: dict[str, list[str]], limit: int = DEFAULT_TYPE_LIMIT):
        self.raw = raw
        self.limit = limit
        self.untyped: set[str] = set()

    def mentions(self, entity_id: str) -> list[str]:
        types = [t for t in self.raw.get(entity_id, []) if t and t != BLANK]
        if not types:
            self.untyped.add(entity_id)
        types = list(dict.fromkeys(types))[: self.limit]
        return types + [BLANK] * (self.limit - len(types))

    def token_counts(self) -> Counter:
        counts = Counter()
        for types in self.raw.values():
            for t in types:
                counts.update(tokenize_type(t))
        return counts


def relative_distances(inst: SentenceInstance, max_distance: int = DEFAULT_MAX_DISTANCE) -> tuple[list[int], list[int]]:
    """Signed distance of each token to the nearest token of the head/tail span, clipped."""

    def dist(i: int, span: Span) -> int:
        if i < span.start:
            d = i - span.start
        elif i >= span.end:
            d = i - (span.end - 1)
        else:
            d = 0
        return max(-max_distance, min(max_distance, d))

    n = len(inst.tokens)
    return [dist(i, inst.head) for i in range(n)], [dist(i, inst.tail) for i in range(n)]


def long_tail_filter(bags: Sequence[Bag], threshold: int = 100, count: str = "sentences") -> set[str]:
    """Non-NA relations with fewer than ``threshold`` training sentences (or bags)."""
    if count not in ("sentences", "bags"):
        raise ContractError(f"unknown count unit {count!r}")
    counts = relation_counts(bags, count)
    return {r for r, c in counts.items() if r != NA and c < threshold}


def relation_counts(bags: Sequence[Bag], count: str = "sentences") -> Counter:
    counts = Counter()
    for bag in bags:
        counts[bag.relation] += len(bag.instances) if count == "sentences" else 1
    return counts


# ---------------------------------------------------------------------------
# corpus files


@dataclass
class LoadReport:
    path: str
    records: int = 0
    rejected: int = 0
    rejected_lines: list[int] = field(default_factory=list)

    def __str__(self):
        return f"{self.path}: {self.records} records, {self.rejected} rejected"


def _span(obj, line: int) -> tuple[Span, str]:
    try:
        return Span(int(obj["start"]), int(obj["end"])), str(obj.get("id", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"bad entity field {obj!r}", line) from exc


def read_instances(path: str | Path) -> tuple[list[SentenceInstance], LoadReport]:
    path = Path(path)
    report = LoadReport(str(path))
    instances = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                tokens = tuple(str(t) for t in rec["tokens"])
                relation = str(rec["relation"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"malformed record: {exc}", lineno) from exc
            head, head_id = _span(rec.get("head"), lineno)
            tail, tail_id = _span(rec.get("tail"), lineno)
            inst = SentenceInstance(tokens, head, tail, relation, head_id, tail_id)
            try:
                inst.validate()
            except ContractError as exc:
                report.rejected += 1
                report.rejected_lines.append(lineno)
                log.warning("%s line %d rejected: %s", path, lineno, exc)
                continue
            instances.append(inst)
            report.records += 1
    if report.records == 0:
        log.warning("%s: no usable records", path)
    return instances, report


def group_bags(instances: Iterable[SentenceInstance], levels: int | None = None) -> list[Bag]:
    """Group sentences by (subject, object, relation), keeping first-seen order."""
    groups: dict[tuple[str, str, str], list[SentenceInstance]] = {}
    for inst in instances:
        groups.setdefault((inst.head_id, inst.tail_id, inst.relation), []).append(inst)
    bags = []
    for (s, o, r), insts in groups.items():
        coarse = tuple(derive_hierarchy(r, levels)) if levels else ()
        bags.append(Bag(s, o, r, tuple(insts), coarse))
    return bags


def read_types(path: str | Path) -> dict[str, list[str]]:
    raw: dict[str, list[str]] = {}
    path = Path(path)
    if not path.exists():
        log.warning("no types file at %s; every entity is untyped", path)
        return raw
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                raw[str(rec["id"])] = [str(t) for t in rec["types"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"malformed type record: {exc}", lineno) from exc
    return raw


@dataclass
class Corpus:
    train: list[Bag]
    test: list[Bag]
    types: TypeInventory
    vocab: Vocabulary
    hierarchy: RelationHierarchy
    reports: list[LoadReport] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return self.hierarchy.levels


def load_corpus(directory: str | Path, levels: int = 2, type_limit: int = DEFAULT_TYPE_LIMIT,
                min_freq: int = DEFAULT_MIN_FREQ) -> Corpus:
    """Load ``train.jsonl``, ``test.jsonl`` and ``types.jsonl`` from a directory."""
    directory = Path(directory)
    splits, reports = {}, []
    for name in SPLITS:
        path = directory / f"{name}.jsonl"
        if path.exists():
            insts, rep = read_instances(path)
            reports.append(rep)
        else:
            log.warning("missing split file %s", path)
            insts = []
        splits[name] = insts
    labels = {i.relation for insts in splits.values() for i in insts}
    hierarchy = RelationHierarchy(labels, levels)
    types = TypeInventory(read_types(directory / TYPES_FILE), type_limit)

    counts = Counter(t for inst in splits["train"] for t in inst.tokens)
    counts.update(types.token_counts())
    vocab = Vocabulary.build(counts, min_freq)

    corpus = Corpus(group_bags(splits["train"], levels), group_bags(splits["test"], levels),
                    types, vocab, hierarchy, reports)
    for bag in corpus.train + corpus.test:
        types.mentions(bag.subject_id)
        types.mentions(bag.object_id)
    if types.untyped:
        log.warning("%d entities have no known types; padded with BLANK", len(types.untyped))
    return corpus


def write_instances(path: str | Path, bags: Iterable[Bag]):
    with Path(path).open("w", encoding="utf-8") as fh:
        for bag in bags:
            for inst in bag.instances:
                fh.write(json.dumps(inst.to_record(), sort_keys=True) + "\n")


def write_types(path: str | Path, raw: dict[str, list[str]]):
    with Path(path).open("w", encoding="utf-8") as fh:
        for eid in sorted(raw):
            fh.write(json.dumps({"id": eid, "types": raw[eid]}, sort_keys=True) + "\n")


def save_corpus(corpus: Corpus, directory: str | Path):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_instances(directory / "train.jsonl", corpus.train)
    write_instances(directory / "test.jsonl", corpus.test)
    write_types(directory / TYPES_FILE, corpus.types.raw)
