"""ALKD v1 store writer (format shared verbatim with the consumer side).

Layout, little-endian: magic "ALKD", u16 version=1, u32 d_t, u64 count;
per record: u16 id length + utf-8 id, u32 transcript length + utf-8
transcript, d_t * f32 vector.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"ALKD"
VERSION = 1
_HEADER = struct.Struct("<4sHIQ")


class StoreWriteError(ValueError):
    pass


@dataclass
class StoreRecord:
    sample_id: str
    transcript: str
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32)
        if self.vector.ndim != 1:
            raise StoreWriteError(f"record {self.sample_id!r}: vector must be 1-d")


def write_alkd(records: list[StoreRecord], path) -> None:
    d_t = records[0].vector.shape[0] if records else 0
    seen = set()
    for r in records:
        if r.vector.shape[0] != d_t:
            raise StoreWriteError(f"record {r.sample_id!r}: d_t {r.vector.shape[0]} != {d_t}")
        if r.sample_id in seen:
            raise StoreWriteError(f"duplicate sample_id {r.sample_id!r}")
        if not np.all(np.isfinite(r.vector)):
            raise StoreWriteError(f"record {r.sample_id!r}: non-finite vector")
        seen.add(r.sample_id)
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
