"""Instance encoding: route graphs (or rule-token sequences) + target text
into the arrays the model consumes.

Copyable source tokens get an extended per-instance vocabulary so the
decoder can emit words that exist only in this instance's map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..route_graph import RouteGraph
from .vocab import BOS, EOS, UNK, Vocab

UNLABELED_RELATION = 12
N_RELATIONS = 13  # 12 direction sectors + unlabeled


@dataclass
class EncodedInstance:
    node_types: np.ndarray          # (N,) int ids, zeros in sequence mode
    node_tokens: np.ndarray         # (N,) int ids into the shared vocab
    rel_masks: np.ndarray           # (N_RELATIONS, N, N) float; [r, i, j] = edge j->i
    src_map: np.ndarray             # (N, V+E) one-hot token of each source node
    ext_tokens: list                # extended-vocab surface forms, index V+k
    target_ids: np.ndarray          # (T,) ids into V+E space (what to predict)
    target_in_ids: np.ndarray       # (T,) decoder input ids in V space (BOS + shifted)
    positions: np.ndarray = field(default=None)  # (N,) order ids in sequence mode
    text: str = ""

    @property
    def n_nodes(self):
        return len(self.node_tokens)

    @property
    def n_ext(self):
        return len(self.ext_tokens)


def _encode_target(words, token_vocab: Vocab, src_token_to_ext):
    """Target ids live in the extended space; decoder inputs stay in V."""
    unk = token_vocab.encode(UNK)
    out_ids = []
    in_ids = [token_vocab.encode(BOS)]
    for w in words:
        wid = token_vocab.encode(w)
        if wid == unk and w != UNK and w in src_token_to_ext:
            out_ids.append(len(token_vocab) + src_token_to_ext[w])
        else:
            out_ids.append(wid)
        in_ids.append(wid)
    out_ids.append(token_vocab.encode(EOS))
    return np.asarray(out_ids, dtype=np.int64), np.asarray(in_ids, dtype=np.int64)


def _source_arrays(tokens, token_vocab: Vocab):
    """Shared-vocab ids, extended slots for OOV source tokens, and the
    one-hot copy projection matrix."""
    unk = token_vocab.encode(UNK)
    ids = np.array([token_vocab.encode(t) for t in tokens], dtype=np.int64)
    ext_tokens = []
    ext_index = {}
    for t, tid in zip(tokens, ids):
        if tid == unk and t != UNK and t not in ext_index:
            ext_index[t] = len(ext_tokens)
            ext_tokens.append(t)
    n = len(tokens)
    src_map = np.zeros((n, len(token_vocab) + len(ext_tokens)), dtype=np.float32)
    for i, (t, tid) in enumerate(zip(tokens, ids)):
        if tid == unk and t in ext_index:
            src_map[i, len(token_vocab) + ext_index[t]] = 1.0
        else:
            src_map[i, tid] = 1.0
    return ids, ext_tokens, ext_index, src_map


def encode_graph_instance(
    graph: RouteGraph, text: str, type_vocab: Vocab, token_vocab: Vocab
) -> EncodedInstance:
    n = len(graph.nodes)
    if n == 0:
        raise ValueError("cannot encode an empty route graph")
    type_ids = np.array([type_vocab.encode(nd.type) for nd in graph.nodes], dtype=np.int64)
    tokens = [nd.token for nd in graph.nodes]
    token_ids, ext_tokens, ext_index, src_map = _source_arrays(tokens, token_vocab)

    rel = np.zeros((N_RELATIONS, n, n), dtype=np.float32)
    for e in graph.edges:
        r = UNLABELED_RELATION if e.label is None else int(e.label)
        rel[r, e.dst, e.src] = 1.0
    # a node nothing points at still needs an attention domain
    in_degree = rel.sum(axis=(0, 2))
    for i in np.nonzero(in_degree == 0)[0]:
        rel[UNLABELED_RELATION, i, i] = 1.0

    target_ids, target_in = _encode_target(text.split(), token_vocab, ext_index)
    return EncodedInstance(
        node_types=type_ids,
        node_tokens=token_ids,
        rel_masks=rel,
        src_map=src_map,
        ext_tokens=ext_tokens,
        target_ids=target_ids,
        target_in_ids=target_in,
        text=text,
    )


def encode_sequence_instance(tokens, text: str, token_vocab: Vocab) -> EncodedInstance:
    """Sequence mode: rule tokens as the source, self-attention all-to-all."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("cannot encode an empty source sequence")
    n = len(tokens)
    token_ids, ext_tokens, ext_index, src_map = _source_arrays(tokens, token_vocab)
    rel = np.zeros((N_RELATIONS, n, n), dtype=np.float32)
    rel[UNLABELED_RELATION] = 1.0
    target_ids, target_in = _encode_target(text.split(), token_vocab, ext_index)
    return EncodedInstance(
        node_types=np.zeros(n, dtype=np.int64),
        node_tokens=token_ids,
        rel_masks=rel,
        src_map=src_map,
        ext_tokens=ext_tokens,
        target_ids=target_ids,
        target_in_ids=target_in,
        positions=np.arange(n),
        text=text,
    )


def encode_pairs(pairs, type_vocab, token_vocab, mode: str = "graph") -> list:
    out = []
    for source, text in pairs:
        if mode == "graph":
            out.append(encode_graph_instance(source, text, type_vocab, token_vocab))
        elif mode == "seq2seq":
            tokens = source.split() if isinstance(source, str) else source
            out.append(encode_sequence_instance(tokens, text, token_vocab))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return out
