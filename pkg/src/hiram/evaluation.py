"""Held-out metrics: PR curve and AUC, P@N under One/Two/All, macro Hits@K.

Every (bag, non-NA relation) pair is one scored prediction. A pair is a true
positive iff the bag's gold label is that relation, so NA never counts as a
positive. Rankings sort by descending confidence and break ties by
(bag key, relation index).
"""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import NA, Bag, long_tail_filter
from .errors import ContractError

log = logging.getLogger(__name__)

SETTINGS = ("one", "two", "all")
P_AT = (100, 200, 300)
HITS_K = (10, 15, 20)
LONG_TAIL = (100, 200)


@dataclass(frozen=True)
class PredictionRecord:
    key: tuple[str, ...]
    gold: str
    confidences: dict[str, float]  # non-NA relation -> score, in relation-index order
    setting: str = "all"

    def to_json(self) -> str:
        return json.dumps({"subject": self.key[0], "object": self.key[1], "key": list(self.key),
                           "gold": self.gold, "setting": self.setting,
                           "confidences": [[r, s] for r, s in self.confidences.items()]}, sort_keys=True)

    @classmethod
    def from_dict(cls, rec: dict) -> "PredictionRecord":
        return cls(tuple(rec["key"]), rec["gold"], {r: float(s) for r, s in rec["confidences"]},
                   rec.get("setting", "all"))


def make_records(bags: Sequence[Bag], confidences: np.ndarray, relations: Sequence[str],
                 setting: str = "all") -> list[PredictionRecord]:
    """Wrap a (bags x fine classes) confidence matrix, dropping the NA column."""
    keep = [i for i, r in enumerate(relations) if r != NA]
    return [PredictionRecord(bag.key, bag.relation, {relations[i]: float(row[i]) for i in keep}, setting)
            for bag, row in zip(bags, confidences)]


def write_predictions(path: str | Path, records: Iterable[PredictionRecord]):
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_predictions(path: str | Path) -> list[PredictionRecord]:
    with Path(path).open(encoding="utf-8") as fh:
        return [PredictionRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def _select(records: Sequence[PredictionRecord], setting: str | None) -> list[PredictionRecord]:
    if setting is None:
        return list(records)
    return [r for r in records if r.setting == setting]


def ranked_pairs(records: Sequence[PredictionRecord]) -> list[tuple[float, bool]]:
    """(confidence, is_positive) for every pair, best first."""
    rows = []
    for rec in records:
        for idx, (rel, score) in enumerate(rec.confidences.items()):
            if not np.isfinite(score):
                raise ContractError(f"non-finite confidence for {rec.key} / {rel}")
            rows.append((-score, rec.key, idx, rel == rec.gold))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return [(-r[0], r[3]) for r in rows]


def positives(records: Sequence[PredictionRecord]) -> int:
    return sum(1 for r in records if r.gold != NA and r.gold in r.confidences)


def pr_curve(records: Sequence[PredictionRecord]) -> list[tuple[float, float]]:
    """(recall, precision) at each distinct confidence threshold, highest first."""
    total = positives(records)
    if total == 0:
        raise ContractError("no gold positives; recall is undefined")
    pairs = ranked_pairs(records)
    points = []
    tp = 0
    for i, (score, pos) in enumerate(pairs):
        tp += pos
        if i + 1 == len(pairs) or pairs[i + 1][0] != score:
            points.append((tp / total, tp / (i + 1)))
    return points


def curve_area(points: Sequence[tuple[float, float]]) -> float:
    """Trapezoid area under (recall, precision), starting at recall 0 with the first precision."""
    if not points:
        return 0.0
    r = np.array([0.0] + [p[0] for p in points])
    p = np.array([points[0][1]] + [p[1] for p in points])
    return float(np.sum((r[1:] - r[:-1]) * (p[1:] + p[:-1]) / 2.0))


def pr_auc(records: Sequence[PredictionRecord], setting: str | None = None) -> float:
    return curve_area(pr_curve(_select(records, setting)))


def precision_at_n(records: Sequence[PredictionRecord], n: int, setting: str | None = None) -> float:
    """Percentage of correct predictions among the top-n scored pairs."""
    pairs = ranked_pairs(_select(records, setting))
    if len(pairs) < n:
        raise ContractError(f"only {len(pairs)} scored pairs, cannot take the top {n}")
    return 100.0 * sum(pos for _, pos in pairs[:n]) / n


def subsample_bags(bags: Sequence[Bag], setting: str, seed: int) -> list[Bag]:
    """One/Two keep 1 or 2 random sentences of each bag with >= 2 sentences; All keeps everything."""
    if setting not in SETTINGS:
        raise ContractError(f"unknown setting {setting!r}")
    if setting == "all":
        return list(bags)
    keep = 1 if setting == "one" else 2
    rng = np.random.default_rng(seed)
    out = []
    for bag in bags:
        if len(bag.instances) < 2:
            continue
        idx = np.sort(rng.choice(len(bag.instances), size=keep, replace=False))
        out.append(bag.with_instances([bag.instances[i] for i in idx]))
    return out


def hits_at_k(records: Sequence[PredictionRecord], k: int, long_tail: set[str]) -> float:
    """Macro average over long-tail relations of the share of bags whose gold ranks in the top k."""
    if not long_tail:
        raise ContractError("empty long-tail relation set")
    per_rel: dict[str, list[bool]] = defaultdict(list)
    for rec in records:
        if rec.gold == NA or rec.gold not in long_tail or rec.gold not in rec.confidences:
            continue
        rels = list(rec.confidences)
        gi = rels.index(rec.gold)
        gold_score = rec.confidences[rec.gold]
        # rank = number of relations ordered before gold (ties go to the lower index)
        rank = sum(1 for i, r in enumerate(rels)
                   if rec.confidences[r] > gold_score or (rec.confidences[r] == gold_score and i < gi))
        per_rel[rec.gold].append(rank < k)
    if not per_rel:
        raise ContractError("no test bags carry a long-tail gold relation")
    return 100.0 * float(np.mean([np.mean(v) for _, v in sorted(per_rel.items())]))


def export_pr(records: Sequence[PredictionRecord], path: str | Path, setting: str | None = None):
    points = pr_curve(_select(records, setting))
    with Path(path).open("w", encoding="utf-8") as fh:
        for recall, precision in points:
            fh.write(f"{recall!r}\t{precision!r}\n")


def read_pr(path: str | Path) -> list[tuple[float, float]]:
    with Path(path).open(encoding="utf-8") as fh:
        return [tuple(float(x) for x in line.split("\t")) for line in fh if line.strip()]


def summarize(records: Sequence[PredictionRecord], long_tail: dict[int, set[str]]) -> list[dict]:
    """Summary rows: P@N per setting (plus Mean), AUC on All, Hits@K per long-tail threshold."""
    rows = []
    for setting in SETTINGS:
        sel = _select(records, setting)
        values = {}
        for n in P_AT:
            try:
                values[str(n)] = precision_at_n(sel, n)
            except ContractError:
                values[str(n)] = None
        got = [v for v in values.values() if v is not None]
        values["mean"] = float(np.mean(got)) if len(got) == len(P_AT) else None
        rows.append({"metric": "P@N", "setting": setting, **values})
    try:
        rows.append({"metric": "AUC", "setting": "all", "value": pr_auc(records, "all")})
    except ContractError:
        rows.append({"metric": "AUC", "setting": "all", "value": None})
    for threshold, rels in sorted(long_tail.items()):
        values = {}
        for k in HITS_K:
            try:
                values[str(k)] = hits_at_k(_select(records, "all"), k, rels)
            except ContractError:
                values[str(k)] = None
        rows.append({"metric": "Hits@K", "threshold": threshold, **values})
    return rows


def score_bags(model, featurizer, bags: Sequence[Bag], setting: str = "all") -> list[PredictionRecord]:
    """Run the query sweep on every bag and wrap the confidences as records."""
    known = featurizer.hierarchy.index[0]
    kept = [b for b in bags if b.relation in known]
    if len(kept) < len(bags):
        log.warning("skipped %d bags whose gold relation the model does not know", len(bags) - len(kept))
    conf = model.predict_many(featurizer.bags(kept))
    return make_records(kept, conf, featurizer.hierarchy.labels[0], setting)


def evaluate_model(model, featurizer, test_bags: Sequence[Bag], train_bags: Sequence[Bag],
                   seed: int = 0, count_unit: str = "sentences") -> tuple[list[PredictionRecord], list[dict]]:
    """Score the test split under One/Two/All and build the summary table."""
    records = []
    for setting in SETTINGS:
        sample = subsample_bags(test_bags, setting, seed)
        log.info("setting %s: %d bags (subsample seed %d)", setting, len(sample), seed)
        records.extend(score_bags(model, featurizer, sample, setting))
    tails = {t: long_tail_filter(train_bags, t, count_unit) for t in LONG_TAIL}
    return records, summarize(records, tails)


def write_summary(path: str | Path, rows: Iterable[dict]):
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
