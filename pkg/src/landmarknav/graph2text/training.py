"""Batch training with early stopping on dev token accuracy, plus the
pretrain-then-finetune schedule."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..tensor_core import Adam, make_rng, mul
from .data import encode_pairs
from .vocab import token_vocab_from_pairs


@dataclass
class TrainConfig:
    batch_size: int = 12
    epochs: int = 100
    patience: int = 10
    seed: int = 0
    lr: float = 0.5
    warmup: int = 4000
    schedule: str = "noam"


@dataclass
class TrainResult:
    best_epoch: int
    best_token_acc: float
    epochs_run: int
    log: list = field(default_factory=list)


def token_accuracy(model, instances) -> float:
    """Teacher-forced argmax accuracy over every target token."""
    import landmarknav.tensor_core as tc

    total = correct = 0
    with tc.no_grad():
        for inst in instances:
            _, n, c = model.loss_and_stats(inst, train=False)
            total += n
            correct += c
    return correct / total if total else 0.0


def train_model(model, train_insts, dev_insts, cfg: TrainConfig = None, log_path=None,
                optimizer: Adam = None) -> TrainResult:
    cfg = cfg or TrainConfig()
    if not train_insts:
        raise ValueError("empty training set")
    if not dev_insts:
        raise ValueError("empty dev set")
    opt = optimizer or Adam(
        model.parameters(),
        lr=cfg.lr,
        d_model=model.config.d_m,
        warmup=cfg.warmup,
        schedule=cfg.schedule,
    )
    rng = make_rng(cfg.seed)
    best_acc = -1.0
    best_epoch = 0
    best_params = None
    stale = 0
    log = []
    epochs_run = 0
    for epoch in range(1, cfg.epochs + 1):
        epochs_run = epoch
        order = rng.permutation(len(train_insts))
        epoch_nll = 0.0
        epoch_tokens = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_insts[i] for i in order[start : start + cfg.batch_size]]
            batch_tokens = sum(len(inst.target_ids) for inst in batch)
            opt.zero_grad()
            for inst in batch:
                nll, n_tok, _ = model.loss_and_stats(inst, train=True, rng=rng)
                mul(nll, 1.0 / batch_tokens).backward()
                epoch_nll += float(nll.data)
                epoch_tokens += n_tok
            opt.step()
        acc = token_accuracy(model, dev_insts)
        entry = {"epoch": epoch, "loss": epoch_nll / max(epoch_tokens, 1), "token_acc": acc}
        log.append(entry)
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch
            best_params = {k: p.tensor.data.copy() for k, p in model.params.items()}
            stale = 0
        else:
            stale += 1
        if stale >= cfg.patience:
            break
    if best_params is not None:
        for k, p in model.params.items():
            p.tensor.data = best_params[k]
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry, ensure_ascii=False))
                fh.write("\n")
    return TrainResult(best_epoch, best_acc, epochs_run, log)


def pretrain_finetune(
    model,
    pretrain_pairs,
    fine_pairs,
    fine_dev_pairs,
    pretrain_cfg: TrainConfig = None,
    fine_cfg: TrainConfig = None,
    mode: str = None,
    log_path=None,
):
    """Train on rule-based targets, reset the optimizer, continue on the
    fine set with the weights kept.

    The model must have been built over the union vocabulary; anything
    else silently degrades the fine phase, so it is an error here.
    """
    if not pretrain_pairs or not fine_pairs:
        raise ValueError("both phases need data")
    mode = mode or model.config.mode
    union = token_vocab_from_pairs(list(pretrain_pairs) + list(fine_pairs) + list(fine_dev_pairs))
    if union != model.token_vocab:
        raise ValueError(
            "vocabulary mismatch between phases: rebuild the model over the "
            "union of pretraining and fine-tuning vocabularies"
        )
    encode = lambda pairs: encode_pairs(pairs, model.type_vocab, model.token_vocab, mode)
    pre_insts = encode(pretrain_pairs)
    fine_insts = encode(fine_pairs)
    fine_dev = encode(fine_dev_pairs)
    pre_result = train_model(model, pre_insts, pre_insts, pretrain_cfg or TrainConfig())
    fine_result = train_model(model, fine_insts, fine_dev, fine_cfg or TrainConfig(),
                              log_path=log_path)
    return pre_result, fine_result
