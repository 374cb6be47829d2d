from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiram.corpus import NA, Bag, SentenceInstance, Span
from hiram.errors import ContractError
from hiram.evaluation import (PredictionRecord, export_pr, hits_at_k, make_records, pr_auc, pr_curve,
                              precision_at_n, read_pr, read_predictions, subsample_bags, summarize,
                              write_predictions)

RELS = ("/r/a", "/r/b", "/r/c")


def rec(i, gold, scores, setting="all"):
    return PredictionRecord((f"s{i}", f"o{i}", gold), gold, dict(zip(RELS, scores)), setting)


# -- independent oracles -----------------------------------------------------

def oracle_pairs(records):
    pairs = []
    for r in records:
        for idx, (rel, score) in enumerate(r.confidences.items()):
            pairs.append((score, r.key, idx, rel == r.gold))
    return pairs


def oracle_auc(records):
    """Threshold sweep in exact rational arithmetic: at each distinct score t, predict every pair >= t."""
    pairs = oracle_pairs(records)
    total = sum(1 for r in records if r.gold in r.confidences)
    points = []
    for t in sorted({p[0] for p in pairs}, reverse=True):
        chosen = [p for p in pairs if p[0] >= t]
        tp = sum(p[3] for p in chosen)
        points.append((Fraction(tp, total), Fraction(tp, len(chosen))))
    area, prev = Fraction(0), (Fraction(0), points[0][1])
    for pt in points:
        area += (pt[0] - prev[0]) * (pt[1] + prev[1]) / 2
        prev = pt
    return float(area)


def oracle_precision_at(records, n):
    pairs = oracle_pairs(records)

    def better(a, b):
        return a[0] > b[0] or (a[0] == b[0] and (a[1], a[2]) < (b[1], b[2]))

    top = [p for p in pairs if sum(better(q, p) for q in pairs) < n]
    return 100.0 * sum(p[3] for p in top) / n


def oracle_hits(records, k, tail):
    by_rel = {}
    for r in records:
        if r.gold not in tail:
            continue
        rels = list(r.confidences)
        g = rels.index(r.gold)
        ahead = [j for j, rel in enumerate(rels)
                 if r.confidences[rel] > r.confidences[r.gold] or (r.confidences[rel] == r.confidences[r.gold] and j < g)]
        by_rel.setdefault(r.gold, []).append(len(ahead) < k)
    return 100.0 * sum(sum(v) / len(v) for v in by_rel.values()) / len(by_rel)


scores = st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])
fixture = st.lists(st.tuples(st.sampled_from(RELS + (NA,)), st.tuples(scores, scores, scores)),
                   min_size=1, max_size=10)


def build(rows):
    return [rec(i, g, s) for i, (g, s) in enumerate(rows)]


# -- pr_auc ------------------------------------------------------------------

def test_perfect_ranking_auc_is_one():
    records = [rec(0, "/r/a", (0.9, 0.1, 0.2)), rec(1, "/r/b", (0.3, 0.8, 0.1)), rec(2, NA, (0.2, 0.3, 0.1))]
    assert pr_auc(records) == 1.0


def test_all_equal_confidences_give_prevalence():
    records = [rec(0, "/r/a", (0.5,) * 3), rec(1, NA, (0.5,) * 3), rec(2, "/r/c", (0.5,) * 3)]
    assert pr_auc(records) == pytest.approx(2 / 9)
    assert oracle_auc(records) == pytest.approx(2 / 9)


def test_four_item_hand_case():
    # ranked P, N, P, N over 4 pairs (2 bags x 2 relations)
    records = [PredictionRecord(("a", "x", "/r/a"), "/r/a", {"/r/a": 0.9, "/r/b": 0.8}),
               PredictionRecord(("b", "y", "/r/b"), "/r/b", {"/r/a": 0.6, "/r/b": 0.7})]
    # points (1/2, 1), (1/2, 1/2), (1, 2/3), (1, 1/2) from (0, 1)
    assert pr_auc(records) == pytest.approx(19 / 24, rel=1e-15)


def test_zero_positives_is_contract_error():
    with pytest.raises(ContractError):
        pr_auc([rec(0, NA, (0.2, 0.3, 0.1))])


@settings(max_examples=200)
@given(rows=fixture)
def test_auc_matches_oracle(rows):
    records = build(rows)
    if not any(r.gold != NA for r in records):
        return
    value = pr_auc(records)
    assert value == pytest.approx(oracle_auc(records), abs=1e-12)
    assert 0.0 <= value <= 1.0


@settings(max_examples=100)
@given(rows=fixture)
def test_auc_invariant_under_monotone_transform(rows):
    records = build(rows)
    if not any(r.gold != NA for r in records):
        return
    moved = [PredictionRecord(r.key, r.gold, {k: 3.0 * v ** 3 + 2.0 for k, v in r.confidences.items()}) for r in records]
    assert pr_auc(moved) == pytest.approx(pr_auc(records), abs=1e-12)


# -- precision_at_n ----------------------------------------------------------

def test_perfect_model_hundred_at_every_n():
    records = [rec(i, RELS[i % 3], tuple(1.0 if j == i % 3 else 0.0 for j in range(3))) for i in range(9)]
    for n in (1, 5, 9):
        assert precision_at_n(records, n) == 100.0


def test_always_na_gives_zero():
    records = [rec(i, NA, (0.1, 0.2, 0.05)) for i in range(4)]
    assert precision_at_n(records, 12) == 0.0


def test_five_bag_hand_scored():
    records = [rec(0, "/r/a", (0.9, 0.2, 0.1)),   # a correct at 0.9
               rec(1, "/r/b", (0.8, 0.3, 0.0)),   # wrong at 0.8
               rec(2, "/r/c", (0.1, 0.2, 0.7)),   # c correct at 0.7
               rec(3, NA, (0.6, 0.1, 0.1)),       # wrong at 0.6
               rec(4, "/r/b", (0.2, 0.5, 0.4))]   # b correct at 0.5
    assert precision_at_n(records, 1) == 100.0
    assert precision_at_n(records, 2) == 50.0
    assert precision_at_n(records, 3) == pytest.approx(200 / 3)
    assert precision_at_n(records, 5) == 60.0


def test_too_few_pairs_is_contract_error():
    with pytest.raises(ContractError):
        precision_at_n([rec(0, "/r/a", (0.1, 0.2, 0.3))], 4)


def test_ties_broken_by_key_then_relation_index():
    records = [rec(1, "/r/a", (0.5, 0.5, 0.5)), rec(0, "/r/c", (0.5, 0.5, 0.5))]
    # bag ("s0", ...) first; its gold /r/c sits at relation index 2
    assert precision_at_n(records, 2) == 0.0
    assert precision_at_n(records, 3) == pytest.approx(100 / 3)


def test_precision_non_increasing_when_tail_is_wrong():
    records = [rec(i, "/r/a", (1.0 - i / 10, 0.0, 0.0)) for i in range(4)]
    values = [precision_at_n(records, n) for n in range(4, 13)]
    assert values == sorted(values, reverse=True)


@settings(max_examples=200)
@given(rows=fixture, data=st.data())
def test_precision_matches_oracle(rows, data):
    records = build(rows)
    n = data.draw(st.integers(1, 3 * len(records)))
    assert precision_at_n(records, n) == pytest.approx(oracle_precision_at(records, n), abs=1e-12)


def test_setting_filter():
    records = [rec(0, "/r/a", (0.9, 0.1, 0.1), "one"), rec(1, "/r/b", (0.9, 0.1, 0.1), "all")]
    assert precision_at_n(records, 1, "one") == 100.0
    assert precision_at_n(records, 1, "all") == 0.0


# -- subsampling -------------------------------------------------------------

def _bag(i, n):
    insts = tuple(SentenceInstance((f"w{j}", "x"), Span(0, 1), Span(1, 2), "/r/a", f"s{i}", f"o{i}") for j in range(n))
    return Bag(f"s{i}", f"o{i}", "/r/a", insts)


def test_subsample_settings():
    bags = [_bag(0, 1), _bag(1, 2), _bag(2, 5)]
    one = subsample_bags(bags, "one", 3)
    two = subsample_bags(bags, "two", 3)
    assert [len(b.instances) for b in one] == [1, 1]
    assert [len(b.instances) for b in two] == [2, 2]
    assert subsample_bags(bags, "all", 3) == bags
    assert subsample_bags(bags, "one", 3) == one
    for b, orig in zip(two, bags[1:]):
        assert set(b.instances) <= set(orig.instances)
    with pytest.raises(ContractError):
        subsample_bags(bags, "three", 0)


# -- hits_at_k ---------------------------------------------------------------

def test_hits_exhaustive_k():
    records = [rec(0, "/r/a", (0.1, 0.5, 0.9)), rec(1, "/r/b", (0.9, 0.1, 0.5))]
    assert hits_at_k(records, 3, {"/r/a", "/r/b"}) == 100.0


def test_hits_single_relation_ranked_first():
    records = [rec(0, "/r/c", (0.1, 0.2, 0.9)), rec(1, "/r/c", (0.3, 0.2, 0.4))]
    assert hits_at_k(records, 1, {"/r/c"}) == 100.0


def test_hits_three_relation_hand_case():
    records = [rec(0, "/r/a", (0.9, 0.5, 0.1)),   # a rank 1
               rec(1, "/r/a", (0.2, 0.5, 0.9)),   # a rank 3
               rec(2, "/r/b", (0.5, 0.4, 0.3)),   # b rank 2
               rec(3, "/r/c", (0.9, 0.2, 0.1)),   # not long tail
               rec(4, NA, (0.9, 0.2, 0.1))]
    tail = {"/r/a", "/r/b"}
    assert hits_at_k(records, 1, tail) == pytest.approx(100 * (0.5 + 0.0) / 2)
    assert hits_at_k(records, 2, tail) == pytest.approx(100 * (0.5 + 1.0) / 2)
    assert hits_at_k(records, 3, tail) == 100.0


def test_hits_empty_tail_is_contract_error():
    with pytest.raises(ContractError):
        hits_at_k([rec(0, "/r/a", (0.9, 0.1, 0.1))], 1, set())


@settings(max_examples=200)
@given(rows=fixture, tail=st.sets(st.sampled_from(RELS), min_size=1))
def test_hits_matches_oracle_and_is_monotone(rows, tail):
    records = build(rows)
    if not any(r.gold in tail for r in records):
        with pytest.raises(ContractError):
            hits_at_k(records, 1, tail)
        return
    values = [hits_at_k(records, k, tail) for k in (1, 2, 3, 4)]
    assert values == sorted(values)
    assert values[-1] == 100.0
    for k, v in zip((1, 2, 3), values):
        assert v == pytest.approx(oracle_hits(records, k, tail), abs=1e-12)


# -- export and I/O ----------------------------------------------------------

def test_export_round_trip_and_point_count(tmp_path):
    records = [rec(0, "/r/a", (0.9, 0.2, 0.2)), rec(1, "/r/b", (0.3, 0.8, 0.2)), rec(2, NA, (0.2, 0.3, 0.1))]
    export_pr(records, tmp_path / "pr.tsv")
    curve = read_pr(tmp_path / "pr.tsv")
    assert curve == pr_curve(records)
    distinct = {s for r in records for s in r.confidences.values()}
    assert len(curve) == len(distinct)


def test_perfect_ranking_curve_shape(tmp_path):
    records = [rec(0, "/r/a", (0.9, 0.1, 0.2)), rec(1, "/r/b", (0.3, 0.8, 0.15))]
    curve = pr_curve(records)
    recalls = [r for r, _ in curve]
    assert recalls == sorted(recalls)
    assert curve[-1] == (1.0, 2 / 6)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        export_pr([rec(0, "/r/a", (0.9, 0.1, 0.2))], tmp_path / "missing" / "pr.tsv")


def test_predictions_round_trip(tmp_path):
    records = [rec(0, "/r/a", (0.9, 0.1, 0.2), "one"), rec(1, NA, (0.3, 0.8, 0.15))]
    write_predictions(tmp_path / "p.jsonl", records)
    assert read_predictions(tmp_path / "p.jsonl") == records


def test_make_records_drops_na_column():
    bag = _bag(0, 1)
    out = make_records([bag], np.array([[0.4, 0.1, 0.5]]), [NA, "/r/a", "/r/b"])
    assert out[0].confidences == {"/r/a": 0.1, "/r/b": 0.5}


def test_summary_rows():
    records = [rec(i, RELS[i % 3], (0.2, 0.5, 0.3), s) for i in range(120) for s in ("one", "two", "all")]
    rows = summarize(records, {100: {"/r/a"}, 200: {"/r/a", "/r/b"}})
    by = {(r["metric"], r.get("setting", r.get("threshold"))): r for r in rows}
    assert by[("P@N", "all")]["300"] is not None and by[("P@N", "all")]["mean"] is not None
    assert by[("Hits@K", 100)]["10"] == 100.0
    assert 0 <= by[("AUC", "all")]["value"] <= 1
