"""Deterministic synthetic corpora with planted entity types.

Each fine relation is governed by one (subject type, object type) pair. The
subject type encodes the relation's coarse ancestry and the object type its
position among siblings, so neither type alone identifies the relation.
Trigger tokens appear in a configurable fraction of sentences; the remaining
sentences carry no lexical evidence and are only classifiable through types.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass
from pathlib import Path

from .corpus import NA, derive_hierarchy
from .errors import ContractError

MENTION = "entity"


@dataclass
class SynthSpec:
    relations: int = 8
    levels: int = 1
    branching: int = 2
    train_bags: int = 200
    test_bags: int = 100
    max_bag_size: int = 3
    min_length: int = 8
    max_length: int = 14
    filler_vocab: int = 60
    triggers_per_relation: int = 2
    trigger_rate: float = 1.0
    zipf: float = 0.0
    wrong_label_rate: float = 0.0
    types_per_entity: int = 3
    distractor_types: int = 12
    na_rate: float = 0.0

    def validate(self):
        if not 0.0 <= self.wrong_label_rate <= 1.0:
            raise ContractError(f"wrong_label_rate must lie in [0, 1], got {self.wrong_label_rate}")
        if not 0.0 <= self.trigger_rate <= 1.0:
            raise ContractError(f"trigger_rate must lie in [0, 1], got {self.trigger_rate}")
        if not 0.0 <= self.na_rate < 1.0:
            raise ContractError(f"na_rate must lie in [0, 1), got {self.na_rate}")
        if self.relations < 2 or self.levels < 0 or self.branching < 1:
            raise ContractError("need at least two relations, levels >= 0 and branching >= 1")
        if self.zipf < 0:
            raise ContractError(f"zipf exponent must be nonnegative, got {self.zipf}")
        if not 3 <= self.min_length <= self.max_length:
            raise ContractError("sentence lengths must satisfy 3 <= min_length <= max_length")
        if self.max_bag_size < 1 or self.train_bags < 1 or self.test_bags < 0:
            raise ContractError("bag counts and sizes must be positive")
        if self.types_per_entity < 1 or self.types_per_entity - 1 > self.distractor_types:
            raise ContractError("types_per_entity must be >= 1 and fit the distractor pool")

    def relation_label(self, i: int) -> str:
        segs = [f"l{l}x{i // self.branching ** l}" for l in range(self.levels, 0, -1)]
        return "/" + "/".join(segs + [f"r{i}"])

    def governing_types(self, i: int) -> tuple[str, str]:
        ancestry = ".".join(f"l{l}x{i // self.branching ** l}" for l in range(self.levels, 0, -1))
        subject = f"{ancestry}.agent" if ancestry else "agent"
        return subject, f"kind{i % self.branching}.target"


def allocate(total: int, weights: list[float]) -> list[int]:
    """Largest-remainder apportionment of ``total`` items."""
    z = sum(weights)
    exact = [total * w / z for w in weights]
    counts = [math.floor(e) for e in exact]
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


class _Builder:
    def __init__(self, spec: SynthSpec, rng: random.Random):
        self.spec = spec
        self.rng = rng
        self.types: dict[str, list[str]] = {}
        self.next_entity = 0
        self.fillers = [f"w{k}" for k in range(spec.filler_vocab)]
        self.triggers = {i: [f"t{i}x{k}" for k in range(spec.triggers_per_relation)]
                         for i in range(spec.relations)}
        self.distractors = [f"misc.tag{k}" for k in range(spec.distractor_types)]

    def entity(self, governing: str | None) -> str:
        eid = f"e{self.next_entity}"
        self.next_entity += 1
        spec, rng = self.spec, self.rng
        if governing is None:
            k = rng.randint(1, spec.types_per_entity)
            types = rng.sample(self.distractors, k)
        else:
            k = rng.randint(0, spec.types_per_entity - 1)
            types = rng.sample(self.distractors, k) + [governing]
            rng.shuffle(types)
        self.types[eid] = types
        return eid

    def sentence(self, rel: int | None, subj: str, obj: str, label: str) -> dict:
        spec, rng = self.spec, self.rng
        n = rng.randint(spec.min_length, spec.max_length)
        tokens = [rng.choice(self.fillers) for _ in range(n)]
        p_subj, p_obj = sorted(rng.sample(range(n), 2))
        if rng.random() < 0.5:
            p_subj, p_obj = p_obj, p_subj
        # entity ids stay out of the text so bags cannot be memorized by name
        tokens[p_subj] = tokens[p_obj] = MENTION
        if rel is not None and rng.random() < spec.trigger_rate:
            lo, hi = sorted((p_subj, p_obj))
            free = [i for i in range(n) if i not in (p_subj, p_obj)]
            between = [i for i in free if lo < i < hi]
            tokens[rng.choice(between or free)] = rng.choice(self.triggers[rel])
        return {
            "tokens": tokens,
            "head": {"id": subj, "start": p_subj, "end": p_subj + 1},
            "tail": {"id": obj, "start": p_obj, "end": p_obj + 1},
            "relation": label,
        }

    def bags(self, count: int, noisy: bool) -> tuple[list[dict], list[dict]]:
        spec, rng = self.spec, self.rng
        weights = [1.0 / (r + 1) ** spec.zipf for r in range(spec.relations)]
        n_na = round(count * spec.na_rate)
        plan = [None] * n_na
        for r, c in enumerate(allocate(count - n_na, weights)):
            plan.extend([r] * c)
        rng.shuffle(plan)

        positive = [j for j, rel in enumerate(plan) if rel is not None]
        flipped = set(rng.sample(positive, round(len(positive) * spec.wrong_label_rate))) if noisy else set()
        records, meta = [], []
        for j, rel in enumerate(plan):
            true_label = NA if rel is None else spec.relation_label(rel)
            label = true_label
            if j in flipped:
                label = spec.relation_label(rng.choice([r for r in range(spec.relations) if r != rel]))
            gov = spec.governing_types(rel) if rel is not None else (None, None)
            subj, obj = self.entity(gov[0]), self.entity(gov[1])
            size = rng.randint(1, spec.max_bag_size)
            records.extend(self.sentence(rel, subj, obj, label) for _ in range(size))
            meta.append({"subject": subj, "object": obj, "label": label, "true": true_label})
        return records, meta


def generate_synthetic(spec: SynthSpec, seed: int, out_dir: str | Path) -> Path:
    """Write train/test/types files plus ``meta.json`` describing the planted structure."""
    spec.validate()
    for i in range(spec.relations):
        derive_hierarchy(spec.relation_label(i), spec.levels)
    rng = random.Random(seed)
    builder = _Builder(spec, rng)
    train, train_meta = builder.bags(spec.train_bags, noisy=True)
    test, test_meta = builder.bags(spec.test_bags, noisy=False)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, records in (("train", train), ("test", test)):
        with (out / f"{name}.jsonl").open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with (out / "types.jsonl").open("w", encoding="utf-8") as fh:
        for eid, types in builder.types.items():
            fh.write(json.dumps({"id": eid, "types": types}, sort_keys=True) + "\n")
    meta = {
        "seed": seed,
        "spec": asdict(spec),
        "relations": {spec.relation_label(i): {
            "governing": list(spec.governing_types(i)),
            "triggers": builder.triggers[i],
        } for i in range(spec.relations)},
        "train_bags": train_meta,
        "test_bags": test_meta,
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return out


def load_meta(directory: str | Path) -> dict:
    return json.loads((Path(directory) / "meta.json").read_text(encoding="utf-8"))
