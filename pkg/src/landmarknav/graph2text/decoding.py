"""Length-normalized beam search over the mixed generate/copy distribution."""

from __future__ import annotations

import numpy as np

from .. import tensor_core as tc
from .data import EncodedInstance
from .vocab import BOS, EOS, UNK


def beam_search(model, inst: EncodedInstance, beam: int = 4, max_len: int = 120) -> list:
    """Returns the best token sequence (surface strings, copies verbatim)."""
    if beam < 1:
        raise ValueError("beam must be >= 1")
    vocab = model.token_vocab
    v_size = len(vocab)
    bos, eos, unk = vocab.encode(BOS), vocab.encode(EOS), vocab.encode(UNK)
    max_len = min(max_len, model.config.max_len)

    with tc.no_grad():
        memory = model.encode(inst, train=False)
        # hypothesis: (score_sum, input ids in V space, emitted ids in V+E space)
        live = [(0.0, [bos], [])]
        done = []
        for _ in range(max_len):
            candidates = []
            for score, in_ids, out_ids in live:
                probs = model.decode_probs(inst, memory, np.asarray(in_ids, dtype=np.int64))
                logp = np.log(probs.data[-1] + 1e-12)
                top = np.argsort(-logp, kind="stable")[:beam]
                for tid in top:
                    candidates.append((score + float(logp[tid]), int(tid), in_ids, out_ids))
            candidates.sort(key=lambda c: -c[0])
            live = []
            for score, tid, in_ids, out_ids in candidates[:beam]:
                emitted = out_ids + [tid]
                if tid == eos:
                    done.append((score / len(emitted), emitted[:-1]))
                else:
                    # copied out-of-vocab tokens feed back in as <unk>
                    next_in = tid if tid < v_size else unk
                    live.append((score, in_ids + [next_in], emitted))
            if not live:
                break
        if not done:
            done = [(score / max(len(out_ids), 1), out_ids) for score, _, out_ids in live]
        done.sort(key=lambda d: -d[0])
        best = done[0][1]

    tokens = []
    for tid in best:
        tokens.append(vocab.decode(tid) if tid < v_size else inst.ext_tokens[tid - v_size])
    return tokens


def generate_text(model, inst: EncodedInstance, beam: int = 4, max_len: int = 120) -> str:
    return " ".join(beam_search(model, inst, beam=beam, max_len=max_len))
