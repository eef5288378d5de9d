"""Audio clip loading and validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 16_000
MAX_SECONDS = 15.0


class AudioError(ValueError):
    pass


@dataclass
class AudioClip:
    sample_id: str
    waveform: np.ndarray  # mono float32 at 16 kHz
    transcript: str

    def __post_init__(self):
        self.waveform = np.asarray(self.waveform, dtype=np.float32)
        if self.waveform.ndim != 1:
            raise AudioError(f"clip {self.sample_id!r} must be mono, got shape {self.waveform.shape}")
        if self.waveform.size == 0:
            raise AudioError(f"clip {self.sample_id!r} is empty")
        if self.duration > MAX_SECONDS:
            raise AudioError(
                f"clip {self.sample_id!r} is {self.duration:.2f}s long, limit is {MAX_SECONDS}s"
            )

    @property
    def duration(self) -> float:
        return self.waveform.size / SAMPLE_RATE


def load_wav(path, sample_id: str, transcript: str) -> AudioClip:
    rate, data = wavfile.read(path)
    if rate != SAMPLE_RATE:
        raise AudioError(f"clip {sample_id!r}: sample rate {rate} Hz, expected {SAMPLE_RATE} Hz")
    if data.ndim != 1:
        raise AudioError(f"clip {sample_id!r}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        wave = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        wave = data.astype(np.float32) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        wave = data.astype(np.float32)
    else:
        raise AudioError(f"clip {sample_id!r}: unsupported wav dtype {data.dtype}")
    return AudioClip(sample_id=sample_id, waveform=wave, transcript=transcript)
