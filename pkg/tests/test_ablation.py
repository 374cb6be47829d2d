"""Each preset's defining behaviour, asserted directly on a small model."""
import numpy as np

from hiram import tensor as tc
from hiram.config import PRESETS, TrainConfig, apply_preset
from hiram.embedding import embed_sentence, word_inputs
from hiram.gradsuite import toy_model
from hiram.trainer import gradients


def preset_model(name, seed=0):
    overrides = PRESETS[name]
    return toy_model(seed, **overrides)


def test_no_hierarchy_sentence_representation_is_u():
    model, bags = preset_model("no-hierarchy")
    full, _ = preset_model("full")
    assert model.levels == 0 and full.levels == 1
    p = model.inference_leaves()
    with tc.no_grad():
        fwd = model.forward_bag(bags[0], p)
        for sent in fwd.aligned:
            assert len(sent.levels) == 1
            np.testing.assert_array_equal(sent.hierarchical.data, sent.levels[0].data)
            assert sent.hierarchical.shape == (model.config.d_h,)
    assert not any(n.startswith("align1.") for n in model.params)
    assert any(n.startswith("align1.") for n in full.params)


def test_no_guidance_zero_sentence_classifier_gradients():
    model, bags = preset_model("no-guidance")
    loss, grads = gradients(model, bags, model.params.leaves())
    assert loss.sentence.item() == 0.0
    cls = [n for n in grads if ".cls." in n]
    assert cls
    for name in cls:
        np.testing.assert_array_equal(grads[name], 0.0)
    full, _ = preset_model("full")
    _, full_grads = gradients(full, bags, full.params.leaves())
    assert any(np.any(full_grads[n] != 0) for n in cls)


def test_type_concat_bypasses_pairwise_embedding():
    model, bags = preset_model("type-concat")
    p = model.inference_leaves()
    with tc.no_grad():
        fwd = model.forward_bag(bags[0], p)
    assert fwd.types.pairs.m == 1 and fwd.types.pairs.sources == [(-1, -1)]
    assert "pair.sem" not in model.params
    full, _ = preset_model("full")
    assert "pair.sem" in full.params


def test_no_cfte_words_are_plain_embeddings():
    model, bags = preset_model("no-cfte")
    p = model.inference_leaves()
    with tc.no_grad():
        fwd = model.forward_bag(bags[0], p)
        assert fwd.types.q_f is None
        for sent in bags[0].sentences:
            np.testing.assert_array_equal(word_inputs(sent, fwd.types, p).data, embed_sentence(sent, p).data)
    _, grads = gradients(model, bags, model.params.leaves())
    for name in (n for n in grads if n.startswith("cfte.")):
        np.testing.assert_array_equal(grads[name], 0.0)


def test_full_model_enriches_words():
    model, bags = preset_model("full")
    p = model.inference_leaves()
    with tc.no_grad():
        fwd = model.forward_bag(bags[0], p)
        sent = bags[0].sentences[0]
        assert not np.array_equal(word_inputs(sent, fwd.types, p).data, embed_sentence(sent, p).data)


def test_presets_change_only_their_switch():
    base = TrainConfig()
    for name, changes in PRESETS.items():
        config = apply_preset(base, name)
        diff = {k for k, v in config.to_dict().items() if v != base.to_dict()[k]}
        assert diff == set(changes)
