"""Graph-attention encoder + Transformer decoder with a copy gate.

Node states attend only along typed in-edges; each of the 13 relations
(12 direction sectors + unlabeled) selects its own per-head value
transform. The decoder is a standard Transformer whose output mixes a
vocabulary softmax with copying source node tokens, weighted by a learned
gate. A sequence mode swaps the graph encoder for token self-attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .. import tensor_core as tc
from ..tensor_core import (
    Parameter,
    Tensor,
    add,
    concat,
    dropout,
    embedding,
    layer_norm,
    leaky_relu,
    load_checkpoint,
    log,
    make_rng,
    matmul,
    mean_,
    mul,
    relu,
    reshape,
    save_checkpoint,
    sigmoid,
    softmax,
    sum_,
    take_per_row,
    transpose,
    uniform_init,
)
from .data import N_RELATIONS, EncodedInstance
from .vocab import Vocab

MODES = ("graph", "seq2seq")


@dataclass
class ModelConfig:
    d_m: int = 256
    heads: int = 8
    layers: int = 6
    dropout: float = 0.1
    leaky_slope: float = 0.2
    ffn_mult: int = 4
    max_len: int = 120
    mode: str = "graph"

    def validate(self) -> None:
        if self.d_m % self.heads != 0:
            raise ValueError(f"d_m={self.d_m} not divisible by heads={self.heads}")
        if self.layers < 1:
            raise ValueError("need at least one layer")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def d_h(self) -> int:
        return self.d_m // self.heads


def sinusoidal_positions(max_len: int, d_m: int) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    dim = np.arange(d_m, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (dim // 2) / d_m)
    out = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return out.astype(np.float32)


class Graph2Text:
    def __init__(self, config: ModelConfig, type_vocab: Vocab, token_vocab: Vocab, seed: int = 0):
        config.validate()
        self.config = config
        self.type_vocab = type_vocab
        self.token_vocab = token_vocab
        self.seed = seed
        self.params: dict = {}
        self._pos = sinusoidal_positions(config.max_len + 1, config.d_m)
        self._build(make_rng(seed))

    # -- parameter bookkeeping ------------------------------------------------

    def _add(self, name, shape, rng=None, fan_in=None, ones=False):
        if ones:
            data = np.ones(shape, dtype=tc.default_dtype())
        elif rng is None:
            data = np.zeros(shape, dtype=tc.default_dtype())
        else:
            data = uniform_init(rng, shape, fan_in)
        self.params[name] = Parameter(name, Tensor(data, requires_grad=True))

    def p(self, name) -> Tensor:
        return self.params[name].tensor

    def parameters(self):
        return [self.params[k] for k in sorted(self.params)]

    def _build(self, rng) -> None:
        cfg = self.config
        d, dh, h = cfg.d_m, cfg.d_h, cfg.heads
        ff = cfg.ffn_mult * d
        self._add("emb.token", (len(self.token_vocab), d), rng, fan_in=d)
        if cfg.mode == "graph":
            self._add("emb.type", (len(self.type_vocab), d), rng, fan_in=d)
            self._add("enc.fuse", (2 * d, d), rng, fan_in=2 * d)
        for l in range(cfg.layers):
            if cfg.mode == "graph":
                self._add(f"enc.{l}.wv", (h, d, dh), rng, fan_in=d)
                self._add(f"enc.{l}.wu", (N_RELATIONS, h, d, dh), rng, fan_in=d)
                self._add(f"enc.{l}.a1", (h, dh, 1), rng, fan_in=dh)
                self._add(f"enc.{l}.a2", (h, dh, 1), rng, fan_in=dh)
            else:
                for proj in ("wq", "wk", "wv", "wo"):
                    self._add(f"enc.{l}.self.{proj}", (d, d), rng, fan_in=d)
            self._add(f"enc.{l}.ln1.g", (d,), ones=True)
            self._add(f"enc.{l}.ln1.b", (d,))
            self._add(f"enc.{l}.ffn.w1", (d, ff), rng, fan_in=d)
            self._add(f"enc.{l}.ffn.b1", (ff,))
            self._add(f"enc.{l}.ffn.w2", (ff, d), rng, fan_in=ff)
            self._add(f"enc.{l}.ffn.b2", (d,))
            self._add(f"enc.{l}.ln2.g", (d,), ones=True)
            self._add(f"enc.{l}.ln2.b", (d,))
        for l in range(cfg.layers):
            for block in ("self", "cross"):
                for proj in ("wq", "wk", "wv", "wo"):
                    self._add(f"dec.{l}.{block}.{proj}", (d, d), rng, fan_in=d)
            for i in (1, 2, 3):
                self._add(f"dec.{l}.ln{i}.g", (d,), ones=True)
                self._add(f"dec.{l}.ln{i}.b", (d,))
            self._add(f"dec.{l}.ffn.w1", (d, ff), rng, fan_in=d)
            self._add(f"dec.{l}.ffn.b1", (ff,))
            self._add(f"dec.{l}.ffn.w2", (ff, d), rng, fan_in=ff)
            self._add(f"dec.{l}.ffn.b2", (d,))
        self._add("copy.w", (3 * d, 1), rng, fan_in=3 * d)
        self._add("copy.b", (1,))

    # -- shared building blocks -----------------------------------------------

    def _drop(self, x, train, rng):
        if train and self.config.dropout > 0.0:
            return dropout(x, self.config.dropout, rng)
        return x

    def _split_heads(self, x, length):
        cfg = self.config
        return transpose(reshape(x, (length, cfg.heads, cfg.d_h)), (1, 0, 2))

    def _mha(self, prefix, query, keyval, q_len, kv_len, mask=None):
        """Standard multi-head attention; returns output and head weights."""
        cfg = self.config
        q = self._split_heads(matmul(query, self.p(f"{prefix}.wq")), q_len)
        k = self._split_heads(matmul(keyval, self.p(f"{prefix}.wk")), kv_len)
        v = self._split_heads(matmul(keyval, self.p(f"{prefix}.wv")), kv_len)
        scores = mul(matmul(q, transpose(k, (0, 2, 1))), 1.0 / math.sqrt(cfg.d_h))
        alpha = softmax(scores, axis=-1, mask=None if mask is None else mask[None])
        ctx = matmul(alpha, v)  # (h, Tq, d_h)
        merged = reshape(transpose(ctx, (1, 0, 2)), (q_len, cfg.d_m))
        return matmul(merged, self.p(f"{prefix}.wo")), alpha

    def _ffn(self, prefix, x):
        hidden = relu(add(matmul(x, self.p(f"{prefix}.w1")), self.p(f"{prefix}.b1")))
        return add(matmul(hidden, self.p(f"{prefix}.w2")), self.p(f"{prefix}.b2"))

    def _sublayer(self, x, delta, ln_prefix, train, rng):
        # post-norm residual block
        return layer_norm(
            add(x, self._drop(delta, train, rng)),
            self.p(f"{ln_prefix}.g"),
            self.p(f"{ln_prefix}.b"),
        )

    # -- graph encoder ----------------------------------------------------------

    def _graph_layer(self, l, x, rel_masks, any_mask, train, rng):
        cfg = self.config
        n = x.shape[0]
        wv, wu = self.p(f"enc.{l}.wv"), self.p(f"enc.{l}.wu")
        # per-relation per-head value transforms of every node
        u = matmul(reshape(x, (1, 1, n, cfg.d_m)), wu)          # (R, h, N, d_h)
        q = matmul(reshape(x, (1, n, cfg.d_m)), wv)             # (h, N, d_h)
        s_query = matmul(q, self.p(f"enc.{l}.a1"))              # (h, N, 1)
        s_key = matmul(u, reshape(self.p(f"enc.{l}.a2"), (1, cfg.heads, cfg.d_h, 1)))
        scores = leaky_relu(
            add(reshape(s_query, (1, cfg.heads, n, 1)), transpose(s_key, (0, 1, 3, 2))),
            cfg.leaky_slope,
        )                                                        # (R, h, N, N)
        mask_t = Tensor(rel_masks.reshape(N_RELATIONS, 1, n, n))
        combined = sum_(mul(scores, mask_t), axis=0)             # (h, N, N)
        alpha = softmax(combined, axis=-1, mask=any_mask[None])
        per_rel = mul(reshape(alpha, (1, cfg.heads, n, n)), mask_t)
        agg = sum_(matmul(per_rel, u), axis=0)                   # (h, N, d_h)
        merged = reshape(transpose(agg, (1, 0, 2)), (n, cfg.d_m))
        x = self._sublayer(x, merged, f"enc.{l}.ln1", train, rng)
        x = self._sublayer(x, self._ffn(f"enc.{l}.ffn", x), f"enc.{l}.ln2", train, rng)
        return x, alpha

    def embed_nodes(self, inst: EncodedInstance) -> Tensor:
        t_emb = embedding(self.p("emb.type"), inst.node_types)
        w_emb = embedding(self.p("emb.token"), inst.node_tokens)
        return relu(matmul(concat([t_emb, w_emb], axis=-1), self.p("enc.fuse")))

    def encode(self, inst: EncodedInstance, train: bool = False, rng=None):
        cfg = self.config
        n = inst.n_nodes
        if cfg.mode == "graph":
            x = self.embed_nodes(inst)
            any_mask = (inst.rel_masks.sum(axis=0) > 0).astype(inst.rel_masks.dtype)
            for l in range(cfg.layers):
                x, _ = self._graph_layer(l, x, inst.rel_masks, any_mask, train, rng)
            return x
        if n > self._pos.shape[0]:
            raise ValueError(f"source length {n} exceeds max_len {cfg.max_len}")
        emb = mul(embedding(self.p("emb.token"), inst.node_tokens), math.sqrt(cfg.d_m))
        x = self._drop(add(emb, Tensor(self._pos[:n])), train, rng)
        for l in range(cfg.layers):
            attn, _ = self._mha(f"enc.{l}.self", x, x, n, n)
            x = self._sublayer(x, attn, f"enc.{l}.ln1", train, rng)
            x = self._sublayer(x, self._ffn(f"enc.{l}.ffn", x), f"enc.{l}.ln2", train, rng)
        return x

    # -- decoder ----------------------------------------------------------------

    def decode_probs(self, inst: EncodedInstance, memory, in_ids, train=False, rng=None):
        """Teacher-forced probabilities over vocab + this instance's
        extended copy slots, shape (T, V+E)."""
        cfg = self.config
        t_len = len(in_ids)
        if t_len > self._pos.shape[0]:
            raise ValueError(f"target length {t_len} exceeds max_len {cfg.max_len}")
        emb = add(
            mul(embedding(self.p("emb.token"), in_ids), math.sqrt(cfg.d_m)),
            Tensor(self._pos[:t_len]),
        )
        x = self._drop(emb, train, rng)
        causal = np.tril(np.ones((t_len, t_len), dtype=np.float32))
        n = memory.shape[0]
        cross_alpha = None
        for l in range(cfg.layers):
            sa, _ = self._mha(f"dec.{l}.self", x, x, t_len, t_len, mask=causal)
            x = self._sublayer(x, sa, f"dec.{l}.ln1", train, rng)
            ca, cross_alpha = self._mha(f"dec.{l}.cross", x, memory, t_len, n)
            x = self._sublayer(x, ca, f"dec.{l}.ln2", train, rng)
            x = self._sublayer(x, self._ffn(f"dec.{l}.ffn", x), f"dec.{l}.ln3", train, rng)

        vocab_logits = matmul(x, transpose(self.p("emb.token")))  # shared embedding
        p_vocab = softmax(vocab_logits, axis=-1)
        attn_avg = mean_(cross_alpha, axis=0)                     # (T, N)
        context = matmul(attn_avg, memory)
        gate_in = concat([context, x, emb], axis=-1)
        p_gen = sigmoid(add(matmul(gate_in, self.p("copy.w")), self.p("copy.b")))  # (T, 1)
        p_copy = matmul(attn_avg, Tensor(inst.src_map))           # (T, V+E)
        gen_part = mul(p_vocab, p_gen)
        if inst.n_ext:
            pad = Tensor(np.zeros((t_len, inst.n_ext), dtype=tc.default_dtype()))
            gen_part = concat([gen_part, pad], axis=-1)
        return add(gen_part, mul(p_copy, add(mul(p_gen, -1.0), 1.0)))

    def forward_probs(self, inst: EncodedInstance, train: bool = False, rng=None):
        memory = self.encode(inst, train, rng)
        return self.decode_probs(inst, memory, inst.target_in_ids, train, rng)

    def loss_and_stats(self, inst: EncodedInstance, train: bool = False, rng=None):
        """Summed negative log likelihood plus token counts for accuracy."""
        probs = self.forward_probs(inst, train, rng)
        picked = take_per_row(probs, inst.target_ids)
        nll = mul(sum_(log(add(picked, 1e-12))), -1.0)
        predictions = probs.data.argmax(axis=-1)
        n_correct = int((predictions == inst.target_ids).sum())
        return nll, len(inst.target_ids), n_correct

    # -- persistence --------------------------------------------------------------

    def save(self, path, extra_meta=None) -> None:
        meta = {
            "config": asdict(self.config),
            "type_vocab": self.type_vocab.to_list(),
            "token_vocab": self.token_vocab.to_list(),
            "seed": self.seed,
        }
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(self.parameters(), path, meta=meta)

    @classmethod
    def load(cls, path) -> "Graph2Text":
        arrays, meta = load_checkpoint(path)
        config = ModelConfig(**meta["config"])
        model = cls(
            config,
            Vocab(meta["type_vocab"]),
            Vocab(meta["token_vocab"]),
            seed=meta.get("seed", 0),
        )
        for name, param in model.params.items():
            if name not in arrays:
                raise ValueError(f"checkpoint missing parameter {name!r}")
            if tuple(arrays[name].shape) != param.tensor.data.shape:
                raise ValueError(f"checkpoint shape mismatch for {name!r}")
            param.tensor.data = arrays[name].astype(tc.default_dtype())
        return model
