"""Linear probing of pretrained [CLS] representations."""

from __future__ import annotations

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.preprocessing import StandardScaler

from . import tensor as T
from .model import StudentModel, encode
from .text import MaskedSample, Record, TokenizedSample, Vocab, make_batch, tokenize


def cls_features(model: StudentModel, samples: list[TokenizedSample], batch_size: int = 64) -> np.ndarray:
    """[CLS] hidden state per sample, eval mode, no gradients."""
    feats = []
    with T.no_grad():
        for i in range(0, len(samples), batch_size):
            chunk = [
                MaskedSample(s.id, list(s.token_ids), list(s.token_ids), [])
                for s in samples[i: i + batch_size]
            ]
            hidden = encode(model, make_batch(chunk), train_mode=False)
            feats.append(hidden.data[:, 0, :])
    return np.concatenate(feats, axis=0)


def linear_probe_accuracy(
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
) -> float:
    scaler = StandardScaler().fit(train_x)
    clf = LogisticRegression(max_iter=2000, C=1.0)
    clf.fit(scaler.transform(train_x), train_y)
    return float(clf.score(scaler.transform(test_x), test_y))


def probe_pretrained(
    model: StudentModel,
    vocab: Vocab,
    records: list[Record],
) -> float:
    """Fit a linear probe on half the labeled records, score on the other half.

    The split is deterministic: within each class, even-indexed records train
    and odd-indexed records test.
    """
    records = sorted(records, key=lambda r: r.id)
    samples = [tokenize(r.text, vocab, max_len=model.config.max_len, sample_id=r.id) for r in records]
    feats = cls_features(model, samples)
    labels = np.array([int(r.label) for r in records])
    train_idx, test_idx = [], []
    per_class_count: dict[int, int] = {}
    for i, y in enumerate(labels):
        k = per_class_count.get(int(y), 0)
        (train_idx if k % 2 == 0 else test_idx).append(i)
        per_class_count[int(y)] = k + 1
    return linear_probe_accuracy(
        feats[train_idx], labels[train_idx], feats[test_idx], labels[test_idx]
    )
