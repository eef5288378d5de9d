"""Pretraining loop: frozen teacher vectors, MLM + distillation objective.

Every source of randomness is derived functionally from (seed, purpose,
step/epoch), so resuming from a checkpoint at step k and training one more
step is bit-identical to an uninterrupted k+1-step run, and two runs with
the same seed produce byte-identical checkpoints and logs. Teacher vectors
enter the losses as constants; no gradient ever reaches them.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from . import losses as L
from . import tensor as T
from .errors import ConfigError, DataError, DivergenceError
from .model import ModelConfig, StudentModel, encode, init_model, mlm_logits, project, save_checkpoint
from .optim import OptimizerState, adamw_step, clip_grad_norm, lr_at
from .store import EmbeddingStore
from .text import Vocab, induce_vocab, make_batch, mask_tokens, tokenize

KD_OBJECTIVES = ("nst", "crd", "none")


@dataclass
class TrainConfig:
    lr_peak: float = 1e-4
    warmup_steps: int = 10_000
    epochs: int = 40
    max_steps: Optional[int] = None
    batch_size: int = 256
    weight_decay: float = 0.01
    gamma: float = 1.0
    kd_objective: str = "nst"
    nst_mode: str = "per_token"
    kernel_c: float = 0.0
    kernel_degree: int = 2
    tau: float = 0.01
    masking_rate: float = 0.15
    mlm_bert_split: bool = False
    seed: int = 0
    grad_clip_norm: Optional[float] = None
    checkpoint_every: int = 0
    deterministic: bool = True

    def validate(self) -> "TrainConfig":
        if self.lr_peak <= 0:
            raise ConfigError("lr_peak must be positive")
        if self.kd_objective not in KD_OBJECTIVES:
            raise ConfigError(f"kd_objective must be one of {KD_OBJECTIVES}")
        if not 0.0 <= self.masking_rate <= 1.0:
            raise ConfigError("masking_rate must be in [0, 1]")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be positive when given")
        return self


def _rng(seed: int, purpose: str, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, hash_tag(purpose), index]))


def hash_tag(purpose: str) -> int:
    # stable small tag per stream purpose (python hash() is salted per process)
    return int.from_bytes(purpose.encode()[:8].ljust(8, b"\0"), "little") % (2**32)


def effective_warmup(cfg: TrainConfig, max_steps: int) -> int:
    """Clamp the full-scale warmup default for short desk runs (10% of max_steps)."""
    if cfg.warmup_steps <= max_steps:
        return cfg.warmup_steps
    return max(1, max_steps // 10)


@dataclass
class PretrainResult:
    model: StudentModel
    optimizer: OptimizerState
    vocab: Vocab
    metrics: list[dict]
    checkpoint_path: Optional[str]
    metrics_path: Optional[str]


def pretrain(
    store: EmbeddingStore,
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    out_dir: Optional[str] = None,
    vocab: Optional[Vocab] = None,
    resume_from: Optional[str] = None,
) -> PretrainResult:
    cfg.validate()
    T.set_deterministic(cfg.deterministic)
    if store.count == 0:
        raise DataError("embedding store is empty")

    start_step = 0
    if resume_from is not None:
        from .model import load_checkpoint

        model, opt, start_step, vocab_tokens = load_checkpoint(resume_from)
        if opt is None:
            raise ConfigError(f"checkpoint {resume_from} has no optimizer state to resume")
        if vocab_tokens is None:
            raise ConfigError(f"checkpoint {resume_from} has no embedded vocabulary")
        vocab = Vocab(vocab_tokens)
        mc = model.config
    else:
        if vocab is None:
            vocab = induce_vocab((r.transcript for r in store.records), model_cfg.vocab_size)
        mc = ModelConfig(**{**asdict(model_cfg), "vocab_size": vocab.size, "teacher_dim": store.d_t})
    if not mc.use_projection and mc.d_model != store.d_t:
        raise ConfigError(
            f"projection disabled but d_model={mc.d_model} != store d_t={store.d_t}"
        )
    mc.validate()

    samples = [
        tokenize(r.transcript, vocab, max_len=mc.max_len, sample_id=r.sample_id)
        for r in store.records
    ]
    teacher = store.vectors().astype(T.get_default_dtype())

    n = len(samples)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    max_steps = cfg.max_steps if cfg.max_steps is not None else cfg.epochs * steps_per_epoch
    warmup = effective_warmup(cfg, max_steps)

    if resume_from is None:
        model = init_model(mc, _rng(cfg.seed, "init", 0))
        opt = OptimizerState.for_params(model.params)
    use_kd = cfg.kd_objective != "none" and cfg.gamma != 0.0
    kernel = L.KernelConfig(c=cfg.kernel_c, degree=cfg.kernel_degree).validate()

    metrics: list[dict] = []
    ckpt_path = None
    metrics_path = None
    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.jsonl")
        log_fh = open(metrics_path, "a" if resume_from else "w", encoding="utf-8")

    def save(step: int, name: str) -> str:
        path = os.path.join(out_dir, name)
        save_checkpoint(model, opt, step, path, vocab_tokens=vocab.id_to_token)
        return path

    epoch_order: list[int] = []
    current_epoch = -1
    try:
        for step in range(start_step + 1, max_steps + 1):
            epoch, chunk = divmod(step - 1, steps_per_epoch)
            if epoch != current_epoch:
                epoch_order = list(_rng(cfg.seed, "shuffle", epoch).permutation(n))
                current_epoch = epoch
            idx = epoch_order[chunk * cfg.batch_size: (chunk + 1) * cfg.batch_size]
            step_rng = _rng(cfg.seed, "step", step)
            masked = [
                mask_tokens(samples[i], cfg.masking_rate, step_rng,
                            bert_split=cfg.mlm_bert_split, vocab_size=vocab.size)
                for i in idx
            ]
            batch = make_batch(masked)
            kd_mask = batch.valid_mask.copy()
            if not mc.include_cls_in_kd:
                kd_mask[:, 0] = False

            t0 = time.perf_counter()
            with T.record() as tape:
                hidden = encode(model, batch, train_mode=True, rng=step_rng)
                mlm_t = None
                if batch.mlm_mask.any():
                    mlm_t = L.mlm_loss(mlm_logits(model, hidden), batch.target_ids, batch.mlm_mask)
                kd_t = None
                if use_kd:
                    projected = project(model, hidden)
                    tb = teacher[idx]
                    if cfg.kd_objective == "nst":
                        kd_t = L.nst_loss(projected, kd_mask, tb, kernel, mode=cfg.nst_mode)
                    else:
                        kd_t = L.crd_loss(
                            projected, kd_mask, tb,
                            L.CrdConfig(tau=cfg.tau, dataset_size=n),
                        )
                if mlm_t is None and kd_t is None:
                    continue
                if kd_t is None:
                    total_t = mlm_t
                elif mlm_t is None:
                    total_t = T.mul(kd_t, cfg.gamma)
                else:
                    total_t = T.add(T.mul(kd_t, cfg.gamma), mlm_t)

            breakdown = L.total_loss(
                kd=kd_t.item() if kd_t is not None else 0.0,
                mlm=mlm_t.item() if mlm_t is not None else 0.0,
                gamma=cfg.gamma if use_kd else 0.0,
                n_masked=int(batch.mlm_mask.sum()),
                n_valid_tokens=int(kd_mask.sum()),
            )
            T.backward(total_t, tape)
            if cfg.grad_clip_norm is not None:
                clip_grad_norm(model.params, cfg.grad_clip_norm)
            lr = lr_at(step, warmup, max_steps, cfg.lr_peak)
            adamw_step(model.params, opt, lr, cfg.weight_decay)
            model.zero_grad()

            elapsed = time.perf_counter() - t0
            tps = None if cfg.deterministic else round(int(batch.valid_mask.sum()) / max(elapsed, 1e-9), 3)
            line = {
                "step": step, "lr": lr, "mlm": breakdown.mlm, "kd": breakdown.kd,
                "total": breakdown.total, "tokens_per_s": tps,
            }
            metrics.append(line)
            if log_fh is not None:
                log_fh.write(json.dumps(line, sort_keys=True) + "\n")
            if out_dir and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                ckpt_path = save(step, f"checkpoint_step{step:07d}.alkc")
        if out_dir:
            ckpt_path = save(max_steps, "checkpoint_final.alkc")
    except DivergenceError:
        # keep the last good checkpoint on disk and surface the failure
        if log_fh is not None:
            log_fh.close()
            log_fh = None
        raise
    finally:
        if log_fh is not None:
            log_fh.close()
    return PretrainResult(model, opt, vocab, metrics, ckpt_path, metrics_path)


def train_config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]
