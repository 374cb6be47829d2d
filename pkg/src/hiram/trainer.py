"""AdaDelta training loop, dropout, weight decay and checkpoint files."""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as tc
from .config import TrainConfig, update_dataclass
from .corpus import PAD_ID, Corpus, RelationHierarchy, TypeInventory, Vocabulary
from .errors import ContractError, NumericError
from .features import EncodedBag, Featurizer
from .model import HiRAM
from .params import ModelParams
from .tensor import Tensor

log = logging.getLogger(__name__)

MAGIC = b"HRAMCKPT"
VERSION = 1


# ---------------------------------------------------------------------------
# optimizer


def adadelta_step(param: np.ndarray, grad: np.ndarray, sq_grad: np.ndarray, sq_delta: np.ndarray,
                  rho: float = 0.95, eps: float = 1e-6, lr: float = 0.1):
    """One AdaDelta update; returns (param, sq_grad, sq_delta) as new arrays.

    E[g^2] <- rho E[g^2] + (1 - rho) g^2
    delta  = -lr * sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho E[dx^2] + (1 - rho) delta^2
    """
    if param.shape != grad.shape:
        raise ContractError(f"gradient shape {grad.shape} does not match parameter {param.shape}")
    sq_grad = rho * sq_grad + (1.0 - rho) * grad * grad
    delta = -lr * np.sqrt(sq_delta + eps) / np.sqrt(sq_grad + eps) * grad
    sq_delta = rho * sq_delta + (1.0 - rho) * delta * delta
    return param + delta, sq_grad, sq_delta


@dataclass
class OptimizerState:
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 0.1
    sq_grad: dict[str, np.ndarray] = field(default_factory=dict)
    sq_delta: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, rho: float, eps: float, lr: float) -> "OptimizerState":
        return cls(rho, eps, lr, {k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()})

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]):
        for name in params:
            new, self.sq_grad[name], self.sq_delta[name] = adadelta_step(
                params[name], grads[name], self.sq_grad[name], self.sq_delta[name],
                self.rho, self.eps, self.lr)
            params[name] = new


# ---------------------------------------------------------------------------
# dropout


def apply_dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero each entry with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must lie in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return tc.hadamard(x, tc.constant(mask))


# ---------------------------------------------------------------------------
# checkpoints


def write_tensors(path: str | Path, tensors: dict[str, np.ndarray]):
    """Named-tensor container: name, shape, then raw little-endian float64 values."""
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ContractError(f"{path} is not a checkpoint file")
    version, count = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    pos = 16
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    return out


def save_checkpoint(path: str | Path, params: ModelParams, opt: OptimizerState, manifest: dict):
    tensors = dict(params.items())
    tensors.update({f"opt.sq_grad/{k}": v for k, v in opt.sq_grad.items()})
    tensors.update({f"opt.sq_delta/{k}": v for k, v in opt.sq_delta.items()})
    path = Path(path)
    write_tensors(path, tensors)
    manifest = {**manifest, "optimizer": {"rho": opt.rho, "eps": opt.eps, "lr": opt.lr}}
    path.with_suffix(".json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ModelParams, OptimizerState, dict]:
    path = Path(path)
    tensors = read_tensors(path)
    manifest = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    params = ModelParams({k: v for k, v in tensors.items() if not k.startswith("opt.")})
    o = manifest.get("optimizer", {})
    opt = OptimizerState(o.get("rho", 0.95), o.get("eps", 1e-6), o.get("lr", 0.1),
                         {k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith("opt.sq_grad/")},
                         {k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith("opt.sq_delta/")})
    return params, opt, manifest


def restore_model(path: str | Path, types: TypeInventory) -> tuple[HiRAM, Featurizer, dict]:
    """Rebuild a trained model and its featurizer from a checkpoint and an entity type table."""
    params, _, manifest = load_checkpoint(path)
    config = update_dataclass(TrainConfig(), manifest["config"], "config").validate()
    hierarchy = RelationHierarchy(manifest["relations"], manifest["levels"])
    if hierarchy.labels[0] != manifest["relations"]:
        raise ContractError("checkpoint relation order does not match the rebuilt hierarchy")
    entities = {eid: i + 1 for i, eid in enumerate(manifest["entities"])}
    feat = Featurizer(Vocabulary(manifest["vocab"]), TypeInventory(types.raw, manifest["type_limit"]),
                      hierarchy, config.max_distance, entities)
    return HiRAM(config, params, hierarchy), feat, manifest


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochMetrics:
    epoch: int
    loss_bl: float | None
    loss_sl: float | None
    train_accuracy: float
    holdout_accuracy: float
    eval_loss: float

    def to_record(self) -> dict:
        return {"epoch": self.epoch, "L_bl": self.loss_bl, "L_sl": self.loss_sl,
                "train_accuracy": self.train_accuracy, "holdout_accuracy": self.holdout_accuracy,
                "eval_loss": self.eval_loss}


@dataclass
class TrainResult:
    model: HiRAM
    featurizer: Featurizer
    optimizer: OptimizerState
    metrics: list[EpochMetrics]
    best_epoch: int
    checkpoints: list[Path]
    last_params: ModelParams | None = None


def gradients(model: HiRAM, bags: Sequence[EncodedBag], leaves: dict[str, Tensor], dropout=None):
    """Batch loss and raw gradients (before weight decay) for every parameter."""
    loss = model.batch_loss(bags, leaves, dropout)
    raw = tc.backward(loss.total, leaves.values())
    return loss, {name: raw[t] for name, t in leaves.items()}


def regularize(params: ModelParams, grads: dict[str, np.ndarray], weight_decay: float) -> dict[str, np.ndarray]:
    """Add the gradient of (lambda/2)||theta||^2 and freeze the PAD embedding row."""
    out = {}
    for name, g in grads.items():
        if weight_decay:
            g = g + weight_decay * params.decay_mask(name) * params[name]
        if name == "emb.word":
            g = g.copy()
            g[PAD_ID] = 0.0
        out[name] = g
    return out


def evaluate_bags(model: HiRAM, bags: Sequence[EncodedBag]) -> tuple[float, float]:
    """(accuracy under the query sweep, mean total loss with gold queries), no dropout."""
    if not bags:
        return float("nan"), float("nan")
    p = model.inference_leaves()
    correct, loss = 0, 0.0
    with tc.no_grad():
        for bag in bags:
            correct += int(model.predict(bag, p).argmax() == bag.fine_label)
            loss += model.batch_loss([bag], p).total.item()
    return correct / len(bags), loss / len(bags)


def split_holdout(bags: list, fraction: float, seed: int) -> tuple[list, list]:
    if fraction <= 0 or len(bags) < 2:
        return list(bags), []
    order = np.random.default_rng(seed).permutation(len(bags))
    k = max(1, int(round(fraction * len(bags))))
    held = set(order[:k].tolist())
    return [b for i, b in enumerate(bags) if i not in held], [b for i, b in enumerate(bags) if i in held]


def build_model(corpus: Corpus, config: TrainConfig) -> tuple[HiRAM, Featurizer]:
    hierarchy = corpus.hierarchy.truncated(config.levels) if corpus.hierarchy.levels != config.levels else corpus.hierarchy
    feat = Featurizer.for_training(corpus.train, corpus.vocab, corpus.types, hierarchy, config.max_distance)
    model = HiRAM.create(config, hierarchy, len(corpus.vocab), feat.num_entities)
    return model, feat


def manifest_for(config: TrainConfig, feat: Featurizer, epoch: int) -> dict:
    return {
        "config": config.to_dict(),
        "seed": config.seed,
        "epoch": epoch,
        "vocab": feat.vocab.itos,
        "entities": sorted(feat.entities, key=feat.entities.get),
        "relations": feat.hierarchy.labels[0],
        "levels": feat.hierarchy.levels,
        "type_limit": feat.types.limit,
    }


def train(corpus: Corpus, config: TrainConfig, out_dir: str | Path | None = None) -> TrainResult:
    config.validate()
    model, feat = build_model(corpus, config)
    train_bags, held_bags = split_holdout(corpus.train, config.holdout, config.seed)
    train_enc, held_enc = feat.bags(train_bags), feat.bags(held_bags)
    if not train_enc:
        raise ContractError("no training bags")

    shuffle_rng = np.random.default_rng(config.seed)
    drop_rng = np.random.default_rng(config.seed + 1)
    opt = OptimizerState.for_params(model.params, config.rho, config.eps, config.lr)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_path = out / "metrics.jsonl"

    def dropout(x):
        return apply_dropout(x, config.dropout, True, drop_rng)

    acc, eval_loss = evaluate_bags(model, train_enc)
    metrics = [EpochMetrics(0, None, None, acc, evaluate_bags(model, held_enc)[0], eval_loss)]
    if out is not None:
        metrics_path.write_text(json.dumps(metrics[0].to_record(), sort_keys=True) + "\n", encoding="utf-8")
    checkpoints: list[Path] = []
    best_epoch, best_score = 0, -np.inf
    best_params = model.params.copy()

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_enc))
        sum_bl = sum_sl = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = [train_enc[i] for i in order[start:start + config.batch_size]]
            try:
                loss, grads = gradients(model, batch, model.params.leaves(), dropout)
                total = loss.total.item()
                if not np.isfinite(total):
                    raise NumericError(f"loss is {total}")
            except NumericError as exc:
                raise NumericError(f"epoch {epoch} batch {b}: {exc}") from exc
            opt.step(model.params, regularize(model.params, grads, config.weight_decay))
            sum_bl += loss.bag.item() * len(batch)
            sum_sl += loss.sentence.item() * len(batch)

        acc, eval_loss = evaluate_bags(model, train_enc)
        held_acc = evaluate_bags(model, held_enc)[0]
        m = EpochMetrics(epoch, sum_bl / len(order), sum_sl / len(order), acc, held_acc, eval_loss)
        metrics.append(m)
        log.info("epoch %d: L_bl %.4f L_sl %.4f train acc %.3f holdout acc %.3f",
                 epoch, m.loss_bl, m.loss_sl, m.train_accuracy, m.holdout_accuracy)
        score = held_acc if held_enc else acc
        if score > best_score:
            best_epoch, best_score, best_params = epoch, score, model.params.copy()
        if out is not None:
            path = out / f"checkpoint-{epoch:03d}.bin"
            save_checkpoint(path, model.params, opt, manifest_for(config, feat, epoch))
            checkpoints.append(path)
            with metrics_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(m.to_record(), sort_keys=True) + "\n")

    last_params = model.params
    model.params = best_params
    if out is not None:
        save_checkpoint(out / "best.bin", best_params, opt, manifest_for(config, feat, best_epoch))
        checkpoints.append(out / "best.bin")
    return TrainResult(model, feat, opt, metrics, best_epoch, checkpoints, last_params)
