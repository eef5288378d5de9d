"""Teacher embedding store: bit-exact persistence, pooling, synthetic fixtures.

File layout (little-endian), magic "ALKD", version 1:

    magic   4s      b"ALKD"
    version u16     1
    d_t     u32     embedding dimension
    count   u64     number of records
    record: id_len u16, id utf-8, transcript_len u32, transcript utf-8,
            vector d_t * f32

Transcripts live inside the store so pretraining needs exactly one input
file. The store is immutable after writing; writing the same records twice
produces identical bytes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, StoreFormatError

MAGIC = b"ALKD"
VERSION = 1
_HEADER = struct.Struct("<4sHIQ")


@dataclass
class TeacherEmbedding:
    """One mean-pooled speech-encoder vector with its id and transcript."""

    sample_id: str
    vector: np.ndarray
    transcript: str = ""

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32)
        if self.vector.ndim != 1:
            raise DataError(f"embedding {self.sample_id!r} must be a vector, got shape {self.vector.shape}")

    @property
    def d_t(self) -> int:
        return self.vector.shape[0]


@dataclass
class EmbeddingStore:
    d_t: int
    records: list[TeacherEmbedding] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.records)

    def vectors(self) -> np.ndarray:
        return np.stack([r.vector for r in self.records]) if self.records else np.zeros((0, self.d_t), np.float32)

    def by_id(self) -> dict[str, TeacherEmbedding]:
        return {r.sample_id: r for r in self.records}


def average_pool(frames: np.ndarray) -> np.ndarray:
    """Arithmetic mean over the frame axis of an (n, d_t) matrix."""
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise DataError(f"average_pool needs a nonempty (n, d) matrix, got shape {frames.shape}")
    return frames.mean(axis=0)


def write_store(records: Sequence[TeacherEmbedding], path) -> None:
    ids = set()
    d_t = records[0].d_t if records else 0
    for r in records:
        if r.d_t != d_t:
            raise DataError(f"embedding {r.sample_id!r} has d_t={r.d_t}, store has d_t={d_t}")
        if r.sample_id in ids:
            raise DataError(f"duplicate sample_id {r.sample_id!r}")
        ids.add(r.sample_id)
        if not np.all(np.isfinite(r.vector)):
            raise DataError(f"embedding {r.sample_id!r} contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, d_t, len(records)))
        for r in records:
            rid = r.sample_id.encode("utf-8")
            txt = r.transcript.encode("utf-8")
            fh.write(struct.pack("<H", len(rid)))
            fh.write(rid)
            fh.write(struct.pack("<I", len(txt)))
            fh.write(txt)
            fh.write(r.vector.astype("<f4", copy=False).tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise StoreFormatError(f"truncated store while reading {what} at byte offset {fh.tell() - len(buf)}")
    return buf


def read_store(path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        magic, version, d_t, count = _HEADER.unpack(_read_exact(fh, _HEADER.size, "header"))
        if magic != MAGIC:
            raise StoreFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise StoreFormatError(f"unsupported store version {version}")
        records = []
        for i in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, f"record {i} id length"))
            sample_id = _read_exact(fh, id_len, f"record {i} id").decode("utf-8")
            (txt_len,) = struct.unpack("<I", _read_exact(fh, 4, f"record {i} transcript length"))
            transcript = _read_exact(fh, txt_len, f"record {i} transcript").decode("utf-8")
            vec = np.frombuffer(_read_exact(fh, 4 * d_t, f"record {i} vector"), dtype="<f4").copy()
            if not np.all(np.isfinite(vec)):
                raise StoreFormatError(f"non-finite value in record {i} ({sample_id!r})")
            records.append(TeacherEmbedding(sample_id, vec, transcript))
        if fh.read(1):
            raise StoreFormatError(f"store declares {count} records but has trailing bytes")
    store = EmbeddingStore(d_t=d_t, records=records)
    seen = set()
    for r in records:
        if r.sample_id in seen:
            raise StoreFormatError(f"duplicate sample_id {r.sample_id!r} in store")
        seen.add(r.sample_id)
    return store


def class_anchor(latent_class, d_t: int) -> np.ndarray:
    """Deterministic unit-norm vector per class id (independent of any rng)."""
    if d_t < 2:
        raise DataError(f"anchor dimension must be >= 2, got {d_t}")
    digest = hashlib.sha256(f"alkd-class-anchor:{latent_class}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(d_t)
    return (v / np.linalg.norm(v)).astype(np.float32)


def synth_teacher(
    latent_class,
    d_t: int,
    noise_scale: float,
    rng: np.random.Generator,
    sample_id: str = "",
) -> TeacherEmbedding:
    """Class anchor plus Gaussian noise; same (class, rng state) gives the same vector."""
    vec = class_anchor(latent_class, d_t)
    if noise_scale:
        vec = vec + noise_scale * rng.standard_normal(d_t).astype(np.float32)
    return TeacherEmbedding(sample_id=sample_id or f"class{latent_class}", vector=vec)
