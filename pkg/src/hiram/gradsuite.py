"""Finite-difference checks for every differentiable op and for the composed model."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from . import tensor as tc
from .config import TrainConfig
from .corpus import Bag, RelationHierarchy, SentenceInstance, Span, TypeInventory, Vocabulary
from .features import EncodedBag, Featurizer
from .gradcheck import GradCheckReport, grad_check_named
from .model import HiRAM
from .tensor import Tensor

TOY_CONFIG = dict(word_dim=2, pos_dim=2, filters=2, window=3, levels=1, type_limit=2,
                  max_distance=3, dropout=0.0, weight_decay=0.0, beta=1.0, holdout=0.0)

TOY_LABELS = ("/a/p/x", "/a/p/y", "/b/q/z")


def _sentence(tokens: str, head: int, tail: int, rel: str, subj: str, obj: str) -> SentenceInstance:
    return SentenceInstance(tuple(tokens.split()), Span(head, head + 1), Span(tail, tail + 1), rel, subj, obj)


def toy_bags() -> list[Bag]:
    return [
        Bag("e1", "e2", "/a/p/x", (
            _sentence("e1 runs w1 e2 now", 0, 3, "/a/p/x", "e1", "e2"),
            _sentence("w2 e2 met e1", 3, 1, "/a/p/x", "e1", "e2"),
        ), ()),
        Bag("e3", "e4", "/b/q/z", (
            _sentence("w1 e3 w2 w3 e4 w1", 1, 4, "/b/q/z", "e3", "e4"),
        ), ()),
    ]


def toy_model(seed: int = 0, **overrides) -> tuple[HiRAM, list[EncodedBag]]:
    """A tiny HiRAM (every axis <= 8 at the default settings) and two encoded bags."""
    config = TrainConfig(**{**TOY_CONFIG, "seed": seed, **overrides}).validate()
    bags = toy_bags()
    words = sorted({t for b in bags for i in b.instances for t in i.tokens} | {"person", "place", "org"})
    types = TypeInventory({"e1": ["person"], "e2": ["place", "org"], "e3": ["org"], "e4": ["person.place"]},
                          config.type_limit)
    hierarchy = RelationHierarchy(TOY_LABELS, config.levels)
    feat = Featurizer.for_training(bags, Vocabulary(words), types, hierarchy, config.max_distance)
    model = HiRAM.create(config, hierarchy, len(feat.vocab), feat.num_entities)
    rng = np.random.default_rng(seed + 100)
    # nonzero biases and gains so no parameter sits at a symmetric point
    for name, value in model.params.items():
        model.params[name] = value + 0.1 * rng.standard_normal(value.shape)
    return model, feat.bags(bags)


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    return tc.sum_all(tc.hadamard(out, tc.constant(w)))


def op_cases(seed: int = 0) -> list[tuple[str, Callable[[Mapping[str, Tensor]], Tensor], dict[str, np.ndarray]]]:
    """(name, scalar loss over named inputs, inputs) for each differentiable primitive."""
    rng = np.random.default_rng(seed)

    def r(*shape):
        return rng.uniform(-1.0, 1.0, shape)

    def case(name, fn, out_shape, **inputs):
        w = r(*out_shape) if out_shape else None

        def loss(t):
            out = fn(t)
            return out if w is None else _weighted(out, w)
        return name, loss, inputs

    idx = [2, 0, 2, 1]
    return [
        case("matmul", lambda t: tc.matmul(t["a"], t["b"]), (3, 4), a=r(3, 5), b=r(5, 4)),
        case("matvec", lambda t: tc.matmul(t["a"], t["v"]), (3,), a=r(3, 5), v=r(5)),
        case("add", lambda t: tc.add(t["a"], t["b"]), (3, 2), a=r(3, 2), b=r(3, 2)),
        case("sub", lambda t: tc.sub(t["a"], t["b"]), (3, 2), a=r(3, 2), b=r(3, 2)),
        case("hadamard", lambda t: tc.hadamard(t["a"], t["b"]), (3, 2), a=r(3, 2), b=r(3, 2)),
        case("scale", lambda t: tc.scale(t["a"], -1.7), (4,), a=r(4)),
        case("sigmoid", lambda t: tc.sigmoid(t["a"]), (2, 3), a=r(2, 3)),
        case("tanh", lambda t: tc.tanh(t["a"]), (2, 3), a=r(2, 3)),
        case("elementwise", lambda t: tc.elementwise("hadamard", t["a"], t["b"]), (5,), a=r(5), b=r(5)),
        case("add_bias", lambda t: tc.add_bias(t["x"], t["b"]), (3, 4), x=r(3, 4), b=r(3)),
        case("affine", lambda t: tc.affine(t["w"], t["x"], t["b"]), (3,), w=r(3, 4), x=r(4), b=r(3)),
        case("transpose", lambda t: tc.transpose(t["a"]), (4, 3), a=r(3, 4)),
        case("reshape", lambda t: tc.reshape(t["a"], (6, 2)), (6, 2), a=r(3, 4)),
        case("concat0", lambda t: tc.concat([t["a"], t["b"]]), (5,), a=r(2), b=r(3)),
        case("concat1", lambda t: tc.concat([t["a"], t["b"]], axis=1), (2, 5), a=r(2, 2), b=r(2, 3)),
        case("take", lambda t: tc.take(t["a"], idx), (4, 3), a=r(3, 3)),
        case("repeat_columns", lambda t: tc.repeat_columns(t["v"], 4), (3, 4), v=r(3)),
        case("sum_all", lambda t: tc.sum_all(t["a"]), (), a=r(2, 3)),
        case("mean", lambda t: tc.mean(t["a"], axis=1), (2,), a=r(2, 3)),
        case("softmax", lambda t: tc.softmax(t["a"]), (5,), a=r(5)),
        case("log_softmax", lambda t: tc.log_softmax(t["a"]), (5,), a=r(5)),
        case("cross_entropy", lambda t: tc.cross_entropy(t["a"], 2), (), a=r(5)),
        case("layer_norm", lambda t: tc.layer_norm(t["x"], t["g"], t["b"]), (6,), x=r(6), g=r(6), b=r(6)),
        case("conv1d", lambda t: tc.conv1d(t["x"], t["k"], t["b"]), (2, 5), x=r(3, 5), k=r(2, 3, 3), b=r(2)),
        case("pool_max", lambda t: tc.pool(t["x"], "max", 1, 4), (3,), x=r(3, 5)),
        case("pool_mean", lambda t: tc.pool(t["x"], "mean", 1, 4), (3,), x=r(3, 5)),
    ]


def check_ops(tol: float = 1e-4, seed: int = 0) -> list[GradCheckReport]:
    reports = []
    for name, loss, inputs in op_cases(seed):
        for rep in grad_check_named(loss, inputs, tol=tol, seed=seed):
            rep.name = f"{name}:{rep.name}"
            reports.append(rep)
    return reports


def check_model(tol: float = 1e-4, seed: int = 0, max_coords: int | None = None,
                **overrides) -> list[GradCheckReport]:
    """Total loss of the composed model on the toy bags, checked for every parameter."""
    model, bags = toy_model(seed, **overrides)

    def loss(p):
        return model.batch_loss(bags, p).total

    reports = grad_check_named(loss, dict(model.params.items()), tol=tol, max_coords=max_coords, seed=seed)
    tag = "+".join(f"{k}={v}" for k, v in overrides.items()) or "full"
    for rep in reports:
        rep.name = f"model[{tag}]:{rep.name}"
    return reports


def run_suite(tol: float = 1e-4, seed: int = 0) -> list[GradCheckReport]:
    reports = check_ops(tol, seed)
    reports += check_model(tol, seed)
    reports += check_model(tol, seed, type_repr="concat")
    reports += check_model(tol, seed, levels=2, filters=1)
    return reports
