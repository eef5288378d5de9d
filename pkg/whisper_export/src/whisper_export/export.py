"""Manifest-driven export: audio files -> pooled embeddings -> ALKD store."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .alkd_writer import StoreRecord, StoreWriteError, write_alkd
from .audio import AudioError, load_wav
from .encoder import EncoderError, FrozenEncoder, encode_and_pool
from .log_mel import compute_log_mel

log = logging.getLogger("whisper_export")


class ManifestError(ValueError):
    pass


class ExportError(RuntimeError):
    pass


@dataclass
class ManifestEntry:
    sample_id: str
    audio_path: str
    text: str


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                entry = ManifestEntry(str(obj["id"]), str(obj["audio_path"]), str(obj["text"]))
            except KeyError as exc:
                raise ManifestError(f"{path}:{lineno}: missing field {exc}") from exc
            if entry.sample_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate sample id {entry.sample_id!r}")
            seen.add(entry.sample_id)
            entries.append(entry)
    return entries


def export(entries: list[ManifestEntry], encoder: FrozenEncoder, out_path) -> list[str]:
    """Embed every readable clip and write one store; returns skipped ids.

    Per-clip problems are logged and skipped; the export fails only when a
    nonempty manifest produces zero records.
    """
    records, skipped = [], []
    for entry in entries:
        try:
            clip = load_wav(entry.audio_path, entry.sample_id, entry.text)
            mel = compute_log_mel(clip)
            vec = encode_and_pool(mel, encoder)
            records.append(StoreRecord(entry.sample_id, entry.text, vec))
        except (AudioError, EncoderError, OSError) as exc:
            log.warning("skipping %s: %s", entry.sample_id, exc)
            skipped.append(entry.sample_id)
    if entries and not records:
        raise ExportError(f"all {len(entries)} clips failed; no store written")
    try:
        write_alkd(records, out_path)
    except StoreWriteError as exc:
        raise ExportError(str(exc)) from exc
    return skipped
