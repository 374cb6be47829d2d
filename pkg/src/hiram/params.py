"""Named parameter store with Xavier-uniform initialization."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .config import TrainConfig
from .corpus import BLANK_ID, PAD_ID
from .tensor import Tensor


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    if len(shape) == 1:
        raise ValueError("xavier init needs at least two axes")
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    fan_out, fan_in = shape[0] * receptive, shape[1] * receptive
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ModelParams:
    """Ordered name -> float64 array mapping.

    Forward passes wrap the arrays in fresh leaf tensors via :meth:`leaves`, so
    each step gets its own graph while the arrays stay the single source of
    truth for the optimizer and checkpoints.
    """

    def __init__(self, arrays: dict[str, np.ndarray] | None = None):
        self.arrays: dict[str, np.ndarray] = dict(arrays or {})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray):
        self.arrays[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name: str) -> bool:
        return name in self.arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def __len__(self):
        return len(self.arrays)

    def items(self):
        return self.arrays.items()

    def leaves(self, requires_grad: bool = True) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in self.arrays.items()}

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()})

    def count(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def decay_mask(self, name: str) -> np.ndarray | float:
        """Multiplier for weight decay: embedding rows for PAD/BLANK are exempt."""
        if name == "emb.word":
            mask = np.ones((self.arrays[name].shape[0], 1))
            mask[[PAD_ID, BLANK_ID]] = 0.0
            return mask
        return 1.0


def level_classes(num_classes: list[int], config: TrainConfig) -> list[int]:
    return num_classes[: config.active_levels + 1]


def init_params(config: TrainConfig, vocab_size: int, num_entities: int, num_classes: list[int],
                seed: int | None = None) -> ModelParams:
    """Build every learnable array for a model with ``config``.

    ``num_classes[l]`` is the class count at hierarchy level l (0 = fine).
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    c = config
    d_e, d_w, d_h, d_c, d_t = c.word_dim, c.d_w, c.d_h, c.d_c, c.type_dim
    n_pos = 2 * c.max_distance + 1
    p = ModelParams()

    p["emb.word"] = xavier_uniform(rng, (vocab_size, d_e))
    p.arrays["emb.word"][PAD_ID] = 0.0
    p["emb.pos_s"] = xavier_uniform(rng, (n_pos, c.pos_dim))
    p["emb.pos_o"] = xavier_uniform(rng, (n_pos, c.pos_dim))
    p["emb.entity"] = xavier_uniform(rng, (num_entities, d_e))

    if c.type_repr == "pairwise":
        p["pair.sem"] = xavier_uniform(rng, (d_t, d_t))
    if c.cfte:
        p["cfte.query"] = xavier_uniform(rng, (d_c, 2 * d_e))
        for mlp in ("cfte.gate", "cfte.xform"):
            p[f"{mlp}.w1"] = xavier_uniform(rng, (d_w, d_w + d_c))
            p[f"{mlp}.b1"] = np.zeros(d_w)
            p[f"{mlp}.w2"] = xavier_uniform(rng, (d_w, d_w))
            p[f"{mlp}.b2"] = np.zeros(d_w)

    p["cnn.kernels"] = xavier_uniform(rng, (c.filters, d_w, c.window))
    p["cnn.bias"] = np.zeros(c.filters)

    classes = level_classes(num_classes, c)
    for l, n_cls in enumerate(classes):
        pre = f"align{l}"
        p[f"{pre}.proj.w"] = xavier_uniform(rng, (d_h, d_c))
        p[f"{pre}.proj.b"] = np.zeros(d_h)
        p[f"{pre}.bilinear"] = xavier_uniform(rng, (d_h, d_h))
        p[f"{pre}.gate.w"] = xavier_uniform(rng, (d_h, 2 * d_h))
        p[f"{pre}.gate.b"] = np.zeros(d_h)
        p[f"{pre}.ln.gain"] = np.ones(d_h)
        p[f"{pre}.ln.shift"] = np.zeros(d_h)
        p[f"{pre}.cls.w"] = xavier_uniform(rng, (n_cls, d_h))
        p[f"{pre}.cls.b"] = np.zeros(n_cls)
    for l, n_cls in enumerate(classes):
        p[f"sel{l}.query"] = xavier_uniform(rng, (n_cls, d_h))
        p[f"sel{l}.bilinear"] = xavier_uniform(rng, (d_h, d_h))
    p["bag.w"] = xavier_uniform(rng, (classes[0], len(classes) * d_h))
    p["bag.b"] = np.zeros(classes[0])
    return p
