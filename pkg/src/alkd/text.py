"""Text pipeline: vocabulary induction, tokenization, MLM corruption, batching.

Tokenization is greedy longest-match over a frequency-induced vocabulary of
whole words plus ``##``-prefixed suffix pieces. Every sample gets a leading
[CLS]; batches are right-padded with [PAD] and carry validity / mask-position
booleans so downstream losses can ignore padding.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError

PAD, UNK, CLS, MASK = "[PAD]", "[UNK]", "[CLS]", "[MASK]"
PAD_ID, UNK_ID, CLS_ID, MASK_ID = 0, 1, 2, 3
RESERVED = (PAD, UNK, CLS, MASK)
CONTINUATION = "##"

_WORD_RE = re.compile(r"[^\W_]+(?:'[^\W_]+)*|[^\w\s]", re.UNICODE)


def words_of(text: str) -> list[str]:
    """Lowercase and split into words / single punctuation marks."""
    return _WORD_RE.findall(text.lower())


@dataclass
class Vocab:
    id_to_token: list[str]
    token_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("duplicate token in vocabulary")
        if tuple(self.id_to_token[:4]) != RESERVED:
            raise DataError(f"vocabulary must start with {RESERVED}")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.id_to_token:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        while tokens and tokens[-1] == "":
            tokens.pop()
        return cls(tokens)


@dataclass
class TokenizedSample:
    id: str
    token_ids: list[int]
    raw_text: str

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass
class MaskedSample:
    id: str
    input_ids: list[int]
    target_ids: list[int]
    mask_positions: list[int]


@dataclass
class Batch:
    input_ids: np.ndarray    # (B, L) int32
    target_ids: np.ndarray   # (B, L) int32
    valid_mask: np.ndarray   # (B, L) bool, True at non-[PAD] positions
    mlm_mask: np.ndarray     # (B, L) bool, True at corrupted positions
    sample_ids: list[str]

    @property
    def shape(self):
        return self.input_ids.shape


def induce_vocab(corpus: Iterable[str], target_size: int) -> Vocab:
    """Frequency-ranked vocabulary of whole words and ``##``-suffix pieces.

    Candidates are every word plus every proper suffix of every word; ties
    break lexicographically so the result is independent of hash order.
    """
    if target_size <= len(RESERVED):
        raise ConfigError(f"target_size must exceed {len(RESERVED)}, got {target_size}")
    counts: Counter[str] = Counter()
    saw_text = False
    for line in corpus:
        for word in words_of(line):
            saw_text = True
            counts[word] += 1
            for i in range(1, len(word)):
                counts[CONTINUATION + word[i:]] += 1
    if not saw_text:
        raise DataError("cannot induce a vocabulary from an empty corpus")
    for tok in RESERVED:
        counts.pop(tok, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[: target_size - len(RESERVED)]]
    return Vocab(list(RESERVED) + kept)


def _split_word(word: str, vocab: Vocab) -> list[int]:
    """Greedy longest-match segmentation; the unmatched remainder becomes one [UNK]."""
    ids: list[int] = []
    pos = 0
    while pos < len(word):
        end = len(word)
        match = None
        while end > pos:
            piece = word[pos:end] if pos == 0 else CONTINUATION + word[pos:end]
            hit = vocab.token_to_id.get(piece)
            if hit is not None and hit >= len(RESERVED):
                match = hit
                break
            end -= 1
        if match is None:
            ids.append(UNK_ID)
            break
        ids.append(match)
        pos = end
    return ids


def tokenize(text: str, vocab: Vocab, max_len: int = 128, sample_id: str = "") -> TokenizedSample:
    words = words_of(text)
    if not words:
        raise DataError(f"sample {sample_id!r} has no tokenizable text")
    ids = [CLS_ID]
    for word in words:
        ids.extend(_split_word(word, vocab))
        if len(ids) >= max_len:
            break
    return TokenizedSample(id=sample_id, token_ids=ids[:max_len], raw_text=text)


def mask_tokens(
    sample: TokenizedSample,
    rate: float,
    rng: np.random.Generator,
    bert_split: bool = False,
    vocab_size: Optional[int] = None,
) -> MaskedSample:
    """Independently corrupt each non-[CLS] position with probability `rate`.

    Selected positions become [MASK]; with `bert_split` the classic 80/10/10
    replace/randomize/keep behavior applies instead (requires vocab_size).
    """
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"masking rate must be in [0, 1], got {rate}")
    n = len(sample.token_ids)
    input_ids = list(sample.token_ids)
    draws = rng.random(n)
    positions = [p for p in range(1, n) if draws[p] < rate]
    if bert_split:
        if vocab_size is None:
            raise ConfigError("bert_split masking needs vocab_size for random replacement")
        action = rng.random(len(positions))
        for p, a in zip(positions, action):
            if a < 0.8:
                input_ids[p] = MASK_ID
            elif a < 0.9:
                input_ids[p] = int(rng.integers(len(RESERVED), vocab_size))
            # else: keep the original token
    else:
        for p in positions:
            input_ids[p] = MASK_ID
    return MaskedSample(
        id=sample.id,
        input_ids=input_ids,
        target_ids=list(sample.token_ids),
        mask_positions=positions,
    )


def make_batch(samples: Sequence[MaskedSample], pad_to: Optional[int] = None) -> Batch:
    if not samples:
        raise DataError("cannot build a batch from zero samples")
    longest = max(len(s.input_ids) for s in samples)
    if pad_to is not None:
        for s in samples:
            if len(s.input_ids) > pad_to:
                raise DataError(f"sample {s.id!r} has {len(s.input_ids)} tokens > pad_to={pad_to}")
        longest = pad_to
    B = len(samples)
    input_ids = np.full((B, longest), PAD_ID, dtype=np.int32)
    target_ids = np.full((B, longest), PAD_ID, dtype=np.int32)
    valid = np.zeros((B, longest), dtype=bool)
    mlm = np.zeros((B, longest), dtype=bool)
    for b, s in enumerate(samples):
        n = len(s.input_ids)
        input_ids[b, :n] = s.input_ids
        target_ids[b, :n] = s.target_ids
        valid[b, :n] = True
        mlm[b, s.mask_positions] = True
    return Batch(input_ids, target_ids, valid, mlm, [s.id for s in samples])


@dataclass
class Record:
    """One newline-delimited JSON dataset record."""
    id: str
    text: str
    label: Optional[float] = None
    labels: Optional[dict[str, int]] = None


def read_records(path) -> list[Record]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON record: {exc}") from exc
            if "id" not in obj or "text" not in obj:
                raise DataError(f"{path}:{lineno}: record needs 'id' and 'text' fields")
            records.append(
                Record(
                    id=str(obj["id"]),
                    text=str(obj["text"]),
                    label=float(obj["label"]) if "label" in obj and obj["label"] is not None else None,
                    labels={str(k): int(v) for k, v in obj["labels"].items()} if obj.get("labels") else None,
                )
            )
    return records


def write_records(records: Iterable[Record], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj: dict = {"id": r.id, "text": r.text}
            if r.label is not None:
                obj["label"] = r.label
            if r.labels is not None:
                obj["labels"] = r.labels
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
