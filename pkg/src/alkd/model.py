"""Transformer text encoder (the student), MLM head, projection, checkpoints.

Pre-norm blocks with learned position embeddings and a weight-tied MLM head.
[PAD] key positions get a large negative additive attention bias, so hidden
states at valid positions do not depend on how much right padding a batch
carries. The optional projection matrix adapts d_model to the teacher
dimension and is used only inside distillation losses.

Checkpoints ("ALKC") hold the config (and optionally the vocabulary),
every parameter, optimizer moments, and the step counter, and round-trip
bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, StoreFormatError
from .optim import OptimizerState
from .tensor import Tensor
from .text import Batch

ATTN_NEG = -1e9  # additive bias that zeroes padded keys after softmax
INIT_STD = 0.02
LN_EPS = 1e-5

CKPT_MAGIC = b"ALKC"
CKPT_VERSION = 1


@dataclass
class ModelConfig:
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 128
    vocab_size: int = 8192
    max_len: int = 128
    dropout_rate: float = 0.1
    teacher_dim: int = 768
    use_projection: bool = True
    include_cls_in_kd: bool = True

    def validate(self) -> "ModelConfig":
        if self.n_layers < 1 or self.d_model < 1 or self.n_heads < 1 or self.d_ff < 1:
            raise ConfigError("layer/width fields must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.max_len < 2:
            raise ConfigError("max_len must be at least 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.vocab_size <= 4:
            raise ConfigError("vocab_size must exceed the 4 reserved tokens")
        return self


class StudentModel:
    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) resampled until everything lies within two deviations."""
    x = rng.standard_normal(shape)
    while True:
        bad = np.abs(x) > 2.0
        if not bad.any():
            break
        x[bad] = rng.standard_normal(int(bad.sum()))
    return std * x


def init_model(config: ModelConfig, rng: np.random.Generator) -> StudentModel:
    config.validate()
    d, ff, V = config.d_model, config.d_ff, config.vocab_size

    def w(shape):
        return T.parameter(_trunc_normal(rng, shape, INIT_STD))

    def zeros(shape):
        return T.parameter(np.zeros(shape))

    def ones(shape):
        return T.parameter(np.ones(shape))

    params: dict[str, Tensor] = {
        "tok_emb": w((V, d)),
        "pos_emb": w((config.max_len, d)),
    }
    for i in range(config.n_layers):
        pre = f"layer{i}."
        params[pre + "ln1.gain"] = ones(d)
        params[pre + "ln1.bias"] = zeros(d)
        for nm in ("wq", "wk", "wv", "wo"):
            params[pre + nm] = w((d, d))
        for nm in ("bq", "bk", "bv", "bo"):
            params[pre + nm] = zeros(d)
        params[pre + "ln2.gain"] = ones(d)
        params[pre + "ln2.bias"] = zeros(d)
        params[pre + "w1"] = w((d, ff))
        params[pre + "b1"] = zeros(ff)
        params[pre + "w2"] = w((ff, d))
        params[pre + "b2"] = zeros(d)
    params["final_ln.gain"] = ones(d)
    params["final_ln.bias"] = zeros(d)
    params["mlm_bias"] = zeros(V)
    if config.use_projection:
        params["proj"] = w((d, config.teacher_dim))
    for name, p in params.items():
        p.name = name
    return StudentModel(config, params)


def encode(
    model: StudentModel,
    batch: Batch,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Contextualized hidden states (B, L, d_model) for a padded batch."""
    cfg = model.config
    ids = batch.input_ids
    B, L = ids.shape
    if ids.max(initial=0) >= cfg.vocab_size:
        raise DataError(f"token id {int(ids.max())} >= vocab_size {cfg.vocab_size}")
    if L > cfg.max_len:
        raise DataError(f"batch length {L} exceeds max_len {cfg.max_len}")
    drop = cfg.dropout_rate if train_mode else 0.0
    if drop and rng is None:
        raise ConfigError("train_mode encoding with dropout needs an rng")

    p = model.params
    x = T.add(T.gather_rows(p["tok_emb"], ids), T.gather_rows(p["pos_emb"], np.arange(L)))
    x = T.dropout(x, drop, rng)

    H = cfg.n_heads
    dh = cfg.d_model // H
    scale = 1.0 / np.sqrt(dh)
    # (B, 1, 1, L) additive bias: 0 at valid keys, ATTN_NEG at padding
    key_bias = T.constant(
        np.where(batch.valid_mask, 0.0, ATTN_NEG)[:, None, None, :].astype(T.get_default_dtype())
    )

    def heads(t: Tensor) -> Tensor:
        return T.transpose(T.reshape(t, (B, L, H, dh)), (0, 2, 1, 3))

    for i in range(cfg.n_layers):
        pre = f"layer{i}."
        a = T.layer_norm(x, p[pre + "ln1.gain"], p[pre + "ln1.bias"], LN_EPS)
        q = heads(T.add(T.matmul(a, p[pre + "wq"]), p[pre + "bq"]))
        k = heads(T.add(T.matmul(a, p[pre + "wk"]), p[pre + "bk"]))
        v = heads(T.add(T.matmul(a, p[pre + "wv"]), p[pre + "bv"]))
        scores = T.add(T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), scale), key_bias)
        probs = T.dropout(T.softmax(scores), drop, rng)
        ctx = T.reshape(T.transpose(T.matmul(probs, v), (0, 2, 1, 3)), (B, L, cfg.d_model))
        attn_out = T.dropout(T.add(T.matmul(ctx, p[pre + "wo"]), p[pre + "bo"]), drop, rng)
        x = T.add(x, attn_out)

        f = T.layer_norm(x, p[pre + "ln2.gain"], p[pre + "ln2.bias"], LN_EPS)
        h = T.matmul(T.gelu(T.add(T.matmul(f, p[pre + "w1"]), p[pre + "b1"])), p[pre + "w2"])
        x = T.add(x, T.dropout(T.add(h, p[pre + "b2"]), drop, rng))

    return T.layer_norm(x, p["final_ln.gain"], p["final_ln.bias"], LN_EPS)


def mlm_logits(model: StudentModel, hidden: Tensor) -> Tensor:
    """Weight-tied prediction head: hidden @ tok_emb^T + bias."""
    return T.add(
        T.matmul(hidden, T.transpose(model.params["tok_emb"], (1, 0))),
        model.params["mlm_bias"],
    )


def project(model: StudentModel, hidden: Tensor) -> Tensor:
    """Map hidden states into the teacher's space (identity when dims already agree)."""
    cfg = model.config
    if cfg.use_projection:
        return T.matmul(hidden, model.params["proj"])
    if cfg.d_model == cfg.teacher_dim:
        return hidden
    raise ConfigError(
        f"d_model={cfg.d_model} != teacher_dim={cfg.teacher_dim} and projection is disabled"
    )


_DTYPE_CODES = {np.dtype(np.float32): 4, np.dtype(np.float64): 8}
_CODE_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    nm = name.encode("utf-8")
    fh.write(struct.pack("<H", len(nm)))
    fh.write(nm)
    fh.write(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
    for extent in arr.shape:
        fh.write(struct.pack("<I", extent))
    fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def _read_tensor(fh) -> tuple[str, np.ndarray]:
    (nlen,) = struct.unpack("<H", _rd(fh, 2))
    name = _rd(fh, nlen).decode("utf-8")
    code, ndim = struct.unpack("<BB", _rd(fh, 2))
    dims = [struct.unpack("<I", _rd(fh, 4))[0] for _ in range(ndim)]
    dtype = _CODE_DTYPES[code]
    n = int(np.prod(dims)) if dims else 1
    arr = np.frombuffer(_rd(fh, dtype.itemsize * n), dtype=dtype).reshape(dims).copy()
    return name, arr


def _rd(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise StoreFormatError(f"truncated checkpoint at byte offset {fh.tell() - len(buf)}")
    return buf


def save_checkpoint(
    model: StudentModel,
    optimizer_state: Optional[OptimizerState],
    step: int,
    path,
    vocab_tokens: Optional[list[str]] = None,
    extra_meta: Optional[dict] = None,
    extra_tensors: Optional[dict[str, np.ndarray]] = None,
) -> None:
    meta = {
        "config": asdict(model.config),
        "vocab": vocab_tokens,
        "optimizer": None
        if optimizer_state is None
        else {
            "step": optimizer_state.step,
            "beta1": optimizer_state.beta1,
            "beta2": optimizer_state.beta2,
            "eps": optimizer_state.eps,
        },
        "extra": extra_meta,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    tensors: list[tuple[str, np.ndarray]] = [(k, p.data) for k, p in model.params.items()]
    if optimizer_state is not None:
        tensors += [(f"opt.m.{k}", a) for k, a in optimizer_state.m.items()]
        tensors += [(f"opt.v.{k}", a) for k, a in optimizer_state.v.items()]
    if extra_tensors:
        tensors += sorted(extra_tensors.items())
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHQI", CKPT_MAGIC, CKPT_VERSION, step, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            _write_tensor(fh, name, arr)


def load_checkpoint(
    path,
    expected_config: Optional[ModelConfig] = None,
) -> tuple[StudentModel, Optional[OptimizerState], int, Optional[list[str]]]:
    with open(path, "rb") as fh:
        magic, version, step, blob_len = struct.unpack("<4sHQI", _rd(fh, 18))
        if magic != CKPT_MAGIC:
            raise StoreFormatError(f"bad checkpoint magic {magic!r}")
        if version != CKPT_VERSION:
            raise StoreFormatError(f"unsupported checkpoint version {version}")
        meta = json.loads(_rd(fh, blob_len).decode("utf-8"))
        (count,) = struct.unpack("<I", _rd(fh, 4))
        tensors = dict(_read_tensor(fh) for _ in range(count))
        if fh.read(1):
            raise StoreFormatError("trailing bytes after checkpoint tensors")

    config = ModelConfig(**meta["config"])
    if expected_config is not None and asdict(expected_config) != meta["config"]:
        config = expected_config
    model = init_model(config, np.random.default_rng(0))
    for name, p in model.params.items():
        if name not in tensors:
            raise StoreFormatError(f"checkpoint missing tensor {name!r}")
        arr = tensors[name]
        if arr.shape != p.data.shape:
            raise StoreFormatError(
                f"tensor {name!r} has shape {arr.shape}, config expects {p.data.shape}"
            )
        p.data = arr.astype(arr.dtype.type, copy=False)

    opt = None
    if meta["optimizer"] is not None:
        o = meta["optimizer"]
        opt = OptimizerState(step=o["step"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"])
        for name in model.params:
            for kind, dest in (("m", opt.m), ("v", opt.v)):
                key = f"opt.{kind}.{name}"
                if key not in tensors:
                    raise StoreFormatError(f"checkpoint missing optimizer tensor {key!r}")
                dest[name] = tensors[key]
    return model, opt, step, meta["vocab"]


def read_checkpoint_extras(path) -> tuple[dict, dict[str, np.ndarray]]:
    """(extra meta, non-parameter tensors) of a checkpoint, e.g. fine-tune heads."""
    with open(path, "rb") as fh:
        magic, version, step, blob_len = struct.unpack("<4sHQI", _rd(fh, 18))
        if magic != CKPT_MAGIC:
            raise StoreFormatError(f"bad checkpoint magic {magic!r}")
        meta = json.loads(_rd(fh, blob_len).decode("utf-8"))
        (count,) = struct.unpack("<I", _rd(fh, 4))
        tensors = dict(_read_tensor(fh) for _ in range(count))
    config = ModelConfig(**meta["config"])
    param_names = set(init_model(config, np.random.default_rng(0)).params)
    extras = {
        k: v for k, v in tensors.items()
        if k not in param_names and not k.startswith("opt.")
    }
    return meta.get("extra") or {}, extras


def config_fields() -> list[str]:
    return [f.name for f in fields(ModelConfig)]
