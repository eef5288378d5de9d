"""Training objectives: masked-LM, MMD norm-transfer (NST), contrastive (CRD).

The distillation losses compare per-token student states (already projected
into the teacher's space) against one mean-pooled teacher vector per sample,
averaged over all valid tokens in the batch. Teacher vectors enter as plain
arrays and never receive gradients.

NST uses the squared maximum mean discrepancy with a polynomial kernel
(s.t + c)^degree. In `per_token` mode each of the d coordinates of one token
is a scalar activation pattern; the double sum then collapses to a closed
form in power sums,

    MMD^2 = (1/d^2) * sum_k C(deg,k) c^(deg-k) (S_k - T_k)^2,
    S_k = sum_i s_i^k,  T_k = sum_j t_j^k,

which for the default degree=2, c=0 reduces to (|s|^2 - |t|^2)^2 / d^2 --
pure norm matching. `column` mode instead treats each neuron's activations
across a sample's tokens as the pattern, with the teacher pattern broadcast
constant along the token axis. ``nst_mmd_double_sum`` is the literal O(d^2)
evaluation kept as the independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DataError, DimensionError, DivergenceError
from .tensor import Tensor


@dataclass
class KernelConfig:
    kind: str = "polynomial"
    c: float = 0.0
    degree: int = 2

    def validate(self) -> "KernelConfig":
        if self.kind != "polynomial":
            raise DataError(f"unsupported kernel kind {self.kind!r}")
        if not (isinstance(self.degree, int) and self.degree >= 1):
            raise DataError(f"kernel degree must be a positive integer, got {self.degree}")
        return self


@dataclass
class CrdConfig:
    tau: float = 0.01
    dataset_size: int = 1
    negatives_per_positive: int = 0

    def validate(self) -> "CrdConfig":
        if self.tau <= 0:
            raise DataError(f"temperature must be positive, got {self.tau}")
        if self.dataset_size < 1 or self.negatives_per_positive < 0:
            raise DataError("dataset_size must be >= 1 and negatives_per_positive >= 0")
        return self

    @property
    def log_ratio(self) -> float:
        # N = 0 (single-sample batch) would make the critic constant 1;
        # floor the ratio at 1/M so the loss stays finite and defined
        return math.log(max(self.negatives_per_positive, 1) / self.dataset_size)


@dataclass
class LossBreakdown:
    mlm: float
    kd: float
    total: float
    gamma: float
    n_masked: int
    n_valid_tokens: int


def poly_kernel(u: np.ndarray, v: np.ndarray, cfg: KernelConfig) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"kernel arguments differ in shape: {u.shape} vs {v.shape}")
    return float((u @ v + cfg.c) ** cfg.degree)


def nst_mmd_double_sum(s_vec: np.ndarray, t_vec: np.ndarray, cfg: KernelConfig) -> float:
    """Literal double-sum MMD^2 over scalar coordinate patterns (test oracle path)."""
    s = np.asarray(s_vec, dtype=np.float64)
    t = np.asarray(t_vec, dtype=np.float64)
    d = s.shape[0]
    total = 0.0
    for i in range(d):
        for j in range(d):
            total += (s[i] * s[j] + cfg.c) ** cfg.degree
            total += (t[i] * t[j] + cfg.c) ** cfg.degree
            total -= 2.0 * (s[i] * t[j] + cfg.c) ** cfg.degree
    return total / (d * d)


def _check_kd_inputs(student_hidden: Tensor, valid_mask: np.ndarray, teacher: np.ndarray):
    valid_mask = np.asarray(valid_mask, dtype=bool)
    teacher = np.asarray(teacher)
    if student_hidden.ndim != 3:
        raise DimensionError(f"student states must be (B, L, d), got {student_hidden.shape}")
    B, L, d = student_hidden.shape
    if teacher.shape != (B, d):
        raise DimensionError(f"teacher shape {teacher.shape} does not match student (B={B}, d={d})")
    if valid_mask.shape != (B, L):
        raise DimensionError(f"valid mask shape {valid_mask.shape} != {(B, L)}")
    if not np.all(np.isfinite(teacher)):
        raise DivergenceError("non-finite teacher vector")
    n_valid = int(valid_mask.sum())
    if n_valid == 0:
        raise DataError("batch has zero valid tokens")
    return valid_mask, teacher, B, L, d, n_valid


def nst_loss(
    student_hidden: Tensor,
    valid_mask: np.ndarray,
    teacher: np.ndarray,
    kernel: KernelConfig = KernelConfig(),
    mode: str = "per_token",
) -> Tensor:
    """Squared-MMD distillation loss averaged over valid tokens (or samples)."""
    kernel.validate()
    valid_mask, teacher, B, L, d, n_valid = _check_kd_inputs(student_hidden, valid_mask, teacher)
    dtype = student_hidden.dtype
    if mode == "per_token":
        mask = T.constant(valid_mask.astype(dtype))
        acc = None
        for k in range(1, kernel.degree + 1):
            coeff = math.comb(kernel.degree, k) * kernel.c ** (kernel.degree - k)
            if coeff == 0.0:
                continue
            s_k = T.reduce_sum(T.pow_const(student_hidden, k), axis=2)        # (B, L)
            t_k = T.constant((teacher.astype(np.float64) ** k).sum(axis=1)[:, None].astype(dtype))
            term = T.mul(T.pow_const(T.sub(s_k, t_k), 2), coeff)
            acc = term if acc is None else T.add(acc, term)
        per_token = T.mul(acc, 1.0 / (d * d))
        return T.mul(T.reduce_sum(T.mul(per_token, mask)), 1.0 / n_valid)
    if mode == "column":
        return _nst_column(student_hidden, valid_mask, teacher, kernel, B, d, dtype)
    raise DataError(f"unknown NST mode {mode!r}")


def _nst_column(student_hidden, valid_mask, teacher, kernel, B, d, dtype):
    """One MMD per sample over neuron patterns along the (valid) token axis."""
    c, deg = kernel.c, kernel.degree
    mask3 = T.constant(valid_mask[:, :, None].astype(dtype))
    a = T.mul(student_hidden, mask3)  # padded rows zeroed: they drop out of the sums
    gram = T.matmul(T.transpose(a, (0, 2, 1)), a)                      # (B, d, d)
    term_ss = T.reduce_sum(T.pow_const(T.add(gram, c), deg), axis=(1, 2))
    colsum = T.reduce_sum(a, axis=1)                                   # (B, d)
    cross = T.mul(
        T.reshape(colsum, (B, d, 1)),
        T.constant(teacher[:, None, :].astype(dtype)),
    )
    term_st = T.reduce_sum(T.pow_const(T.add(cross, c), deg), axis=(1, 2))
    lengths = valid_mask.sum(axis=1).astype(np.float64)                # (B,)
    tt = (lengths[:, None, None] * teacher[:, :, None].astype(np.float64)
          * teacher[:, None, :].astype(np.float64) + c) ** deg
    term_tt = T.constant(tt.sum(axis=(1, 2)).astype(dtype))
    per_sample = T.add(T.sub(term_ss, T.mul(term_st, 2.0)), term_tt)
    return T.mul(T.reduce_sum(per_sample), 1.0 / (B * d * d))


def crd_critic(s_vec: np.ndarray, t_vec: np.ndarray, cfg: CrdConfig) -> tuple[float, float, float]:
    """Positive-pair score phi with its logs, evaluated stably in log space.

    Returns (phi, log phi, log(1 - phi)) where
    phi = exp(s.t / tau) / (exp(s.t / tau) + N/M).
    """
    cfg.validate()
    s = np.asarray(s_vec, dtype=np.float64)
    t = np.asarray(t_vec, dtype=np.float64)
    if s.shape != t.shape:
        raise DimensionError(f"critic arguments differ in shape: {s.shape} vs {t.shape}")
    x = float(s @ t) / cfg.tau
    lr = cfg.log_ratio
    lse = np.logaddexp(x, lr)
    log_phi = x - lse
    log_one_minus = lr - lse
    return float(np.exp(log_phi)), float(log_phi), float(log_one_minus)


def crd_loss(
    student_hidden: Tensor,
    valid_mask: np.ndarray,
    teacher: np.ndarray,
    cfg: CrdConfig,
) -> Tensor:
    """Contrastive distillation with in-batch negatives, averaged over valid tokens.

    Each valid token of sample b forms a positive pair with teacher b and a
    negative pair with every other teacher vector in the batch.
    """
    valid_mask, teacher, B, L, d, n_valid = _check_kd_inputs(student_hidden, valid_mask, teacher)
    cfg = CrdConfig(tau=cfg.tau, dataset_size=cfg.dataset_size, negatives_per_positive=B - 1)
    cfg.validate()
    dtype = student_hidden.dtype
    lr = cfg.log_ratio

    flat = T.reshape(student_hidden, (B * L, d))
    dots = T.reshape(T.matmul(flat, T.constant(teacher.T.astype(dtype))), (B, L, B))
    x = T.mul(dots, 1.0 / cfg.tau)
    lse = T.logaddexp_const(x, lr)
    log_phi = T.sub(x, lse)            # (B, L, B)
    log_one_minus = T.sub(lr, lse)

    eye = np.eye(B, dtype=bool)[:, None, :]                   # (B, 1, B)
    valid3 = valid_mask[:, :, None]
    pos_mask = T.constant((eye & valid3).astype(dtype))
    neg_mask = T.constant((~eye & valid3).astype(dtype))
    total = T.add(
        T.mul(T.reduce_sum(T.mul(log_phi, pos_mask)), -1.0),
        T.mul(T.reduce_sum(T.mul(log_one_minus, neg_mask)), -1.0),
    )
    return T.mul(total, 1.0 / n_valid)


def mlm_loss(logits: Tensor, targets: np.ndarray, mlm_mask: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over the corrupted positions only."""
    targets = np.asarray(targets)
    mlm_mask = np.asarray(mlm_mask, dtype=bool)
    if logits.ndim != 3 or targets.shape != logits.shape[:2] or mlm_mask.shape != targets.shape:
        raise DimensionError(
            f"inconsistent MLM shapes: logits {logits.shape}, targets {targets.shape}, "
            f"mask {mlm_mask.shape}"
        )
    n_masked = int(mlm_mask.sum())
    if n_masked == 0:
        raise DataError("no masked positions in batch")
    picked = T.gather_last(T.log_softmax(logits), targets)
    mask = T.constant(mlm_mask.astype(logits.dtype))
    return T.mul(T.reduce_sum(T.mul(picked, mask)), -1.0 / n_masked)


def total_loss(kd: float, mlm: float, gamma: float, n_masked: int = 0, n_valid_tokens: int = 0) -> LossBreakdown:
    """Weighted combination record: total = gamma * kd + mlm."""
    if not (math.isfinite(kd) and math.isfinite(mlm) and math.isfinite(gamma)):
        raise DivergenceError(f"non-finite loss components: kd={kd}, mlm={mlm}, gamma={gamma}")
    return LossBreakdown(
        mlm=mlm,
        kd=kd,
        total=gamma * kd + mlm,
        gamma=gamma,
        n_masked=n_masked,
        n_valid_tokens=n_valid_tokens,
    )
