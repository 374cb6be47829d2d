"""Context-free type-enriched word embeddings.

Words are looked up together with their two relative-position embeddings,
entity types become mean-pooled word embeddings, every (subject type, object
type) pair gets a semantic and a translational part, and a bag-level bilinear
attention compresses the pairs into one vector that gates each word.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from . import tensor as tc
from .features import EncodedSentence, TypeTokens
from .tensor import Tensor


@dataclass
class PairwiseTypeSet:
    columns: Tensor  # d_c x m
    sources: list[tuple[int, int]]  # (subject type l, object type k) behind each column

    @property
    def m(self) -> int:
        return self.columns.shape[1]


def embed_sentence(sent: EncodedSentence, tables: Mapping[str, Tensor]) -> Tensor:
    """Columns [word; subject distance; object distance], shape d_w x n."""
    rows = tc.concat([
        tc.take(tables["emb.word"], sent.words),
        tc.take(tables["emb.pos_s"], sent.dist_s),
        tc.take(tables["emb.pos_o"], sent.dist_o),
    ], axis=1)
    return tc.transpose(rows)


def type_embed(types: TypeTokens, word_table: Tensor) -> Tensor:
    """Row j is the mean word embedding of mention j (K_t x d_e)."""
    return tc.matmul(tc.constant(types.averager), tc.take(word_table, types.token_ids))


def augment(T: Tensor, entity: Tensor | None) -> Tensor:
    """Append the owning entity's embedding to every type row."""
    if entity is None:
        return T
    ent = tc.transpose(tc.repeat_columns(entity, T.shape[0]))
    return tc.concat([T, ent], axis=1)


def pairwise_embed(T_s: Tensor, T_o: Tensor, e_s: Tensor | None, e_o: Tensor | None,
                   w_sem: Tensor) -> PairwiseTypeSet:
    """All |T_s| * |T_o| pair embeddings, row-major over (l, k).

    Each column is [t_s (.) W t_o ; t_o - t_s] on the (optionally
    entity-augmented) type vectors.
    """
    S, O = augment(T_s, e_s), augment(T_o, e_o)
    n_s, n_o = S.shape[0], O.shape[0]
    sources = [(l, k) for l in range(n_s) for k in range(n_o)]
    li = [l for l, _ in sources]
    ki = [k for _, k in sources]
    projected = tc.matmul(O, tc.transpose(w_sem))  # row k = W t_o_k
    s_rep, o_rep = tc.take(S, li), tc.take(O, ki)
    semantic = tc.hadamard(s_rep, tc.take(projected, ki))
    structural = tc.sub(o_rep, s_rep)
    return PairwiseTypeSet(tc.transpose(tc.concat([semantic, structural], axis=1)), sources)


def concat_types(T_s: Tensor, T_o: Tensor, e_s: Tensor | None, e_o: Tensor | None) -> PairwiseTypeSet:
    """Type-concat ablation: a single column [mean(T_s); mean(T_o)], no pairing."""
    S, O = augment(T_s, e_s), augment(T_o, e_o)
    col = tc.concat([tc.mean(S, axis=0), tc.mean(O, axis=0)])
    return PairwiseTypeSet(tc.reshape(col, (col.shape[0], 1)), [(-1, -1)])


def global_query(e_s: Tensor, e_o: Tensor, T_s: Tensor, T_o: Tensor) -> Tensor:
    return tc.sub(tc.concat([e_o, tc.mean(T_o, axis=0)]), tc.concat([e_s, tc.mean(T_s, axis=0)]))


def compress_types(C: PairwiseTypeSet, query: Tensor, w_sa: Tensor) -> tuple[Tensor, Tensor]:
    """Bilinear self-attention over pair columns; returns (q_f, weights)."""
    scores = tc.matmul(tc.transpose(C.columns), tc.matmul(w_sa, query))
    weights = tc.softmax(scores)
    return tc.matmul(C.columns, weights), weights


def mlp(x: Tensor, p: Mapping[str, Tensor], prefix: str) -> Tensor:
    hidden = tc.tanh(tc.affine(p[f"{prefix}.w1"], x, p[f"{prefix}.b1"]))
    return tc.affine(p[f"{prefix}.w2"], hidden, p[f"{prefix}.b2"])


def enrich_words(X: Tensor, q_f: Tensor, p: Mapping[str, Tensor]) -> Tensor:
    """v_i = g_i * x_i + (1 - g_i) * MLP([x_i; q_f]) with g_i = sigmoid(MLP([x_i; q_f]))."""
    joined = tc.concat([X, tc.repeat_columns(q_f, X.shape[1])], axis=0)
    gate = tc.sigmoid(mlp(joined, p, "cfte.gate"))
    transformed = mlp(joined, p, "cfte.xform")
    return tc.add(tc.hadamard(gate, X), tc.hadamard(1.0 - gate, transformed))


@dataclass
class TypeContext:
    """Per-bag type material shared by every sentence of the bag."""
    pairs: PairwiseTypeSet
    q_f: Tensor | None
    compress_weights: Tensor | None


def bag_types(subject: TypeTokens, obj: TypeTokens, e_s_row: int, e_o_row: int,
              p: Mapping[str, Tensor], type_repr: str, type_aug: str, cfte: bool) -> TypeContext:
    word = p["emb.word"]
    T_s, T_o = type_embed(subject, word), type_embed(obj, word)
    e_s = tc.reshape(tc.take(p["emb.entity"], [e_s_row]), (-1,))
    e_o = tc.reshape(tc.take(p["emb.entity"], [e_o_row]), (-1,))
    aug_s, aug_o = (e_s, e_o) if type_aug == "entity" else (None, None)
    if type_repr == "pairwise":
        pairs = pairwise_embed(T_s, T_o, aug_s, aug_o, p["pair.sem"])
    else:
        pairs = concat_types(T_s, T_o, aug_s, aug_o)
    if not cfte:
        return TypeContext(pairs, None, None)
    q_f, weights = compress_types(pairs, global_query(e_s, e_o, T_s, T_o), p["cfte.query"])
    return TypeContext(pairs, q_f, weights)


def word_inputs(sent: EncodedSentence, ctx: TypeContext, p: Mapping[str, Tensor]) -> Tensor:
    """V for one sentence; equals X when type enrichment is switched off."""
    X = embed_sentence(sent, p)
    if ctx.q_f is None:
        return X
    return enrich_words(X, ctx.q_f, p)
