import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiram.alignment import AlignedSentence
from hiram.bag import (SelectiveHead, bag_distribution, bag_representation, selective_attention,
                       sweep_confidences, total_loss)
from hiram.errors import ContractError
from hiram.gradsuite import check_model, toy_model
from hiram.tensor import Tensor


def sel_head(level=0, classes=3, d_h=4, seed=0):
    rng = np.random.default_rng(seed)
    return SelectiveHead(level, Tensor(rng.standard_normal((classes, d_h))), Tensor(rng.standard_normal((d_h, d_h))))


def reps(n, d_h=4, seed=0):
    rng = np.random.default_rng(seed)
    return [Tensor(rng.standard_normal(d_h)) for _ in range(n)]


def test_single_sentence_bag():
    (u,) = reps(1)
    b, alpha = selective_attention([u], 1, sel_head())
    np.testing.assert_array_equal(b.data, u.data)
    np.testing.assert_array_equal(alpha.data, [1.0])


def test_identical_sentences():
    u = reps(1)[0]
    b, alpha = selective_attention([u, u, u], 2, sel_head())
    np.testing.assert_allclose(b.data, u.data, rtol=1e-14)
    assert abs(alpha.data.sum() - 1) <= 1e-9


def test_empty_bag_and_bad_query_rejected():
    with pytest.raises(ContractError):
        selective_attention([], 0, sel_head())
    with pytest.raises(ContractError):
        selective_attention(reps(2), 3, sel_head(classes=3))


@settings(max_examples=50)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 6), q=st.integers(0, 2))
def test_attention_is_convex_and_permutation_invariant(seed, n, q):
    rs = reps(n, seed=seed)
    head = sel_head(seed=seed + 1)
    b, alpha = selective_attention(rs, q, head)
    U = np.stack([r.data for r in rs])
    assert abs(alpha.data.sum() - 1) <= 1e-9
    assert np.all(b.data <= U.max(0) + 1e-12) and np.all(b.data >= U.min(0) - 1e-12)
    perm = np.random.default_rng(seed).permutation(n)
    b2, _ = selective_attention([rs[i] for i in perm], q, head)
    np.testing.assert_allclose(b2.data, b.data, rtol=1e-12, atol=1e-14)


def _aligned(levels, d_h=4, seed=0):
    rng = np.random.default_rng(seed)
    return AlignedSentence([Tensor(rng.standard_normal(d_h)) for _ in range(levels + 1)], [])


def test_bag_representation_shapes_and_singleton():
    heads = [sel_head(l, c, seed=l) for l, c in enumerate((5, 3, 2))]
    a = _aligned(2)
    b = bag_representation([a], [1, 0, 1], heads)
    assert b.shape == (12,)
    np.testing.assert_array_equal(b.data, a.hierarchical.data)
    flat = bag_representation([a, _aligned(2, seed=1)], [1], heads[:1])
    assert flat.shape == (4,)


def test_bag_representation_default_width():
    d_h = 690
    heads = [sel_head(l, c, d_h=d_h, seed=l) for l, c in enumerate((53, 36, 9))]
    b = bag_representation([_aligned(2, d_h, s) for s in range(2)], [4, 3, 2], heads)
    assert b.shape == (2070,)


def test_bag_distribution_contracts():
    b = Tensor(np.random.default_rng(1).standard_normal(8))
    rng = np.random.default_rng(2)
    W, bias = Tensor(rng.standard_normal((53, 8))), Tensor(rng.standard_normal(53))
    p = bag_distribution(b, W, bias).data
    assert abs(p.sum() - 1) <= 1e-9
    assert bag_distribution(b, W, bias).data.tobytes() == p.tobytes()
    uniform = bag_distribution(b, Tensor(np.zeros((53, 8))), Tensor(np.zeros(53))).data
    np.testing.assert_allclose(uniform, np.full(53, 1 / 53), rtol=1e-14)


def test_total_loss_arithmetic():
    assert total_loss(Tensor(0.5), Tensor(0.25), 1.0).item() == 0.75
    assert total_loss(Tensor(0.5), Tensor(0.25), 0.0).item() == 0.5
    assert total_loss(Tensor(0.0), Tensor(0.0), 1.0).item() == 0.0
    with pytest.raises(ContractError):
        total_loss(Tensor(0.5), Tensor(0.25), -1.0)


def test_sweep_uses_each_relations_own_attention():
    heads = [sel_head(0, 3, seed=0), sel_head(1, 2, seed=1)]
    aligned = [_aligned(1, seed=s) for s in range(3)]
    ancestors = np.array([[0, 1, 2], [0, 1, 1]])
    rng = np.random.default_rng(3)
    W, bias = Tensor(rng.standard_normal((3, 8))), Tensor(rng.standard_normal(3))
    conf = sweep_confidences(aligned, heads, ancestors, W, bias)
    for r in range(3):
        b = bag_representation(aligned, [r, ancestors[1][r]], heads)
        assert conf[r] == pytest.approx(bag_distribution(b, W, bias).data[r], rel=1e-14)


def test_model_bag_order_invariance():
    model, bags = toy_model(0)
    bag = bags[0]
    flipped = type(bag)(bag.key, bag.sentences[::-1], bag.subject_entity, bag.object_entity,
                        bag.subject_types, bag.object_types, bag.labels)
    np.testing.assert_allclose(model.predict(flipped), model.predict(bag), rtol=1e-12)
    p = model.params.leaves(False)
    l1 = model.batch_loss([bag], p).bag.item()
    l2 = model.batch_loss([flipped], p).bag.item()
    assert l1 == pytest.approx(l2, rel=1e-12)


def test_total_loss_grad_check_on_two_sentence_bag():
    reports = check_model(1e-4, 3)
    assert all(r.passed for r in reports), [str(r) for r in reports if not r.passed]


def test_prediction_is_deterministic():
    model, bags = toy_model(1)
    assert model.predict(bags[0]).tobytes() == model.predict(bags[0]).tobytes()
