"""Fine-tuning heads on [CLS] and the evaluation harness.

A fresh linear head (scalar for regression, k logits for classification)
sits on the [CLS] hidden state; all parameters train end-to-end with AdamW.
The distillation projection, if the checkpoint has one, is dropped before
fine-tuning. Evaluation repeats fine-tuning over several seeds and reports
mean and population std per metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import metrics as MX
from . import tensor as T
from .errors import ConfigError, DataError, UndefinedMetricError
from .model import (
    StudentModel,
    encode,
    load_checkpoint,
    read_checkpoint_extras,
    save_checkpoint,
)
from .optim import OptimizerState, adamw_step
from .text import MaskedSample, Record, Vocab, make_batch, tokenize
from .train import _rng

EMOTIONS = ("happiness", "sadness", "surprise", "anger", "fear", "disgust")


@dataclass
class FinetuneConfig:
    task: str = "sentiment_regression"
    epochs: int = 3
    lr: float = 2e-5
    batch_size: int = 32
    seeds: int = 5
    weight_decay: float = 0.01
    deterministic: bool = True

    def validate(self) -> "FinetuneConfig":
        if self.epochs < 1 or self.seeds < 1 or self.batch_size < 1:
            raise ConfigError("epochs, seeds and batch_size must be positive")
        parse_task(self.task)
        return self


def parse_task(task: str) -> tuple[str, Optional[str]]:
    """-> (kind, detail): ("regression", None) | ("classification", scheme) | ("emotion", name)."""
    if task == "sentiment_regression":
        return "regression", None
    if task.startswith("sentiment_class_"):
        scheme = task[len("sentiment_class_"):]
        if scheme not in MX.SCHEMES:
            raise ConfigError(f"unknown sentiment scheme in task {task!r}")
        return "classification", scheme
    if task.startswith("emotion_binary:"):
        name = task.split(":", 1)[1]
        if not name:
            raise ConfigError("emotion task needs a name, e.g. emotion_binary:happiness")
        return "emotion", name
    raise ConfigError(f"unknown task {task!r}")


@dataclass
class FinetunedModel:
    model: StudentModel
    head_w: T.Tensor
    head_b: T.Tensor
    task: str
    vocab: Vocab
    target_mean: float = 0.0
    target_scale: float = 1.0

    def head_params(self) -> dict[str, T.Tensor]:
        return {"head_w": self.head_w, "head_b": self.head_b}


def _strip_projection(model: StudentModel) -> StudentModel:
    params = {k: v for k, v in model.params.items() if k != "proj"}
    cfg = replace(model.config, use_projection=False, teacher_dim=model.config.d_model)
    return StudentModel(cfg, params)


def _targets_for(records: list[Record], task: str) -> tuple[list[Record], np.ndarray]:
    """Kept records and their numeric targets (class index or raw score)."""
    kind, detail = parse_task(task)
    kept, targets = [], []
    for r in records:
        if kind in ("regression", "classification"):
            if r.label is None:
                raise DataError(f"record {r.id!r} lacks the 'label' field required by {task}")
            if kind == "regression":
                kept.append(r)
                targets.append(r.label)
            else:
                cls = MX.bin_sentiment(r.label, detail)
                if cls is None:
                    continue  # neutral samples excluded under this scheme
                kept.append(r)
                targets.append(MX.scheme_classes(detail).index(cls))
        else:
            if r.labels is None or detail not in r.labels:
                raise DataError(f"record {r.id!r} lacks emotion label {detail!r}")
            kept.append(r)
            targets.append(int(r.labels[detail]))
    if not kept:
        raise DataError(f"no usable records for task {task}")
    return kept, np.asarray(targets)


def _cls_states(model: StudentModel, batch, train_mode: bool, rng) -> T.Tensor:
    hidden = encode(model, batch, train_mode=train_mode, rng=rng)
    B, L, d = hidden.shape
    flat = T.reshape(hidden, (B * L, d))
    return T.gather_rows(flat, np.arange(B) * L)


def head_size(task: str) -> int:
    kind, detail = parse_task(task)
    if kind == "regression":
        return 1
    if kind == "classification":
        return len(MX.scheme_classes(detail))
    return 2


def finetune(
    checkpoint_path,
    records: list[Record],
    cfg: FinetuneConfig,
    seed: int = 0,
) -> FinetunedModel:
    cfg.validate()
    T.set_deterministic(cfg.deterministic)
    base, _, _, vocab_tokens = load_checkpoint(checkpoint_path)
    if vocab_tokens is None:
        raise DataError(f"checkpoint {checkpoint_path} carries no vocabulary")
    vocab = Vocab(vocab_tokens)
    model = _strip_projection(base)
    d = model.config.d_model
    k = head_size(cfg.task)

    init_rng = _rng(seed, "ft-head", 0)
    head_w = T.parameter(init_rng.standard_normal((d, k)) / np.sqrt(d), name="head_w")
    head_b = T.parameter(np.zeros(k), name="head_b")
    params = dict(model.params)
    params["head_w"] = head_w
    params["head_b"] = head_b
    opt = OptimizerState.for_params(params)

    kept, targets = _targets_for(records, cfg.task)
    kind, _ = parse_task(cfg.task)
    t_mean, t_scale = 0.0, 1.0
    if kind == "regression":
        # train in standardized target space; predictions are rescaled back
        t_mean = float(np.mean(targets))
        t_scale = float(np.std(targets)) or 1.0
        targets = (targets - t_mean) / t_scale
    samples = [tokenize(r.text, vocab, model.config.max_len, sample_id=r.id) for r in kept]
    n = len(samples)
    steps_per_epoch = math.ceil(n / cfg.batch_size)

    step = 0
    for epoch in range(cfg.epochs):
        order = _rng(seed, "ft-shuffle", epoch).permutation(n)
        for chunk in range(steps_per_epoch):
            idx = order[chunk * cfg.batch_size: (chunk + 1) * cfg.batch_size]
            step += 1
            step_rng = _rng(seed, "ft-step", step)
            batch = make_batch(
                [MaskedSample(samples[i].id, list(samples[i].token_ids),
                              list(samples[i].token_ids), []) for i in idx]
            )
            with T.record() as tape:
                cls = _cls_states(model, batch, train_mode=True, rng=step_rng)
                out = T.add(T.matmul(cls, head_w), head_b)
                if kind == "regression":
                    diff = T.sub(T.reshape(out, (len(idx),)), T.constant(targets[idx]))
                    loss = T.reduce_mean(T.pow_const(diff, 2))
                else:
                    picked = T.gather_last(T.log_softmax(out), targets[idx])
                    loss = T.mul(T.reduce_mean(picked), -1.0)
            T.backward(loss, tape)
            adamw_step(params, opt, cfg.lr, cfg.weight_decay)
            for p in params.values():
                p.zero_grad()
    return FinetunedModel(model, head_w, head_b, cfg.task, vocab,
                          target_mean=t_mean, target_scale=t_scale)


def save_finetuned(ft: FinetunedModel, path) -> None:
    save_checkpoint(
        ft.model, None, 0, path,
        vocab_tokens=ft.vocab.id_to_token,
        extra_meta={"task": ft.task, "target_mean": ft.target_mean,
                    "target_scale": ft.target_scale},
        extra_tensors={"head_w": ft.head_w.data, "head_b": ft.head_b.data},
    )


def load_finetuned(path) -> FinetunedModel:
    model, _, _, vocab_tokens = load_checkpoint(path)
    extra, tensors = read_checkpoint_extras(path)
    if "head_w" not in tensors or "task" not in extra:
        raise DataError(f"{path} is not a fine-tuned checkpoint")
    head_w = T.Tensor(tensors["head_w"], requires_grad=True, name="head_w")
    head_w.data = tensors["head_w"]
    head_b = T.Tensor(tensors["head_b"], requires_grad=True, name="head_b")
    head_b.data = tensors["head_b"]
    return FinetunedModel(model, head_w, head_b, extra["task"], Vocab(vocab_tokens),
                          target_mean=extra["target_mean"], target_scale=extra["target_scale"])


def predict(ft: FinetunedModel, records: list[Record], batch_size: int = 64) -> np.ndarray:
    """Regression scores, or class indices for classification/emotion tasks."""
    kind, _ = parse_task(ft.task)
    samples = [tokenize(r.text, ft.vocab, ft.model.config.max_len, sample_id=r.id) for r in records]
    outs = []
    with T.no_grad():
        for i in range(0, len(samples), batch_size):
            chunk = samples[i: i + batch_size]
            batch = make_batch(
                [MaskedSample(s.id, list(s.token_ids), list(s.token_ids), []) for s in chunk]
            )
            cls = _cls_states(ft.model, batch, train_mode=False, rng=None)
            out = T.add(T.matmul(cls, ft.head_w), ft.head_b)
            outs.append(out.data.copy())
    out = np.concatenate(outs, axis=0)
    if kind == "regression":
        return out[:, 0] * ft.target_scale + ft.target_mean
    return out.argmax(axis=1)


def evaluate(
    checkpoint_path,
    train_records: list[Record],
    test_records: list[Record],
    tasks: list[str],
    cfg: FinetuneConfig,
) -> list[MX.MetricsReport]:
    """Fine-tune per (task, seed), score on the test set, aggregate over seeds."""
    reports = []
    for task in tasks:
        kind, detail = parse_task(task)
        task_cfg = replace(cfg, task=task)
        per_metric: dict[str, list[Optional[float]]] = {}
        for seed in range(cfg.seeds):
            ft = finetune(checkpoint_path, train_records, task_cfg, seed=seed)
            kept, targets = _targets_for(test_records, task)
            preds = predict(ft, kept)
            if kind == "regression":
                golds = np.array([r.label for r in kept])
                per_metric.setdefault("mae", []).append(MX.mae(preds, golds))
                try:
                    rho = MX.pearson(preds, golds)
                except UndefinedMetricError:
                    rho = None
                per_metric.setdefault("pearson_rho", []).append(rho)
            elif kind == "classification":
                name = f"accuracy_{detail}"
                per_metric.setdefault(name, []).append(MX.accuracy(preds, targets))
            else:
                per_metric.setdefault("accuracy", []).append(MX.accuracy(preds, targets))
        rep = MX.MetricsReport(task=task, seeds=list(range(cfg.seeds)))
        for name, vals in per_metric.items():
            rep.add(name, vals)
        reports.append(rep)
    return reports
