"""Log-Mel spectrogram front end.

Matches the preprocessing the frozen teacher was trained with: the clip is
zero-padded to 30 s, framed with a periodic Hann window (25 ms frames,
10 ms hop, 400-point FFT), projected onto 80 slaney-scale mel filters, and
log-compressed with an 8-bel dynamic-range floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import SAMPLE_RATE, AudioClip

N_FFT = 400
HOP_LENGTH = 160
N_MELS = 80
CHUNK_SECONDS = 30
CHUNK_SAMPLES = CHUNK_SECONDS * SAMPLE_RATE
N_FRAMES = CHUNK_SAMPLES // HOP_LENGTH  # 3000


@dataclass
class MelFeatures:
    data: np.ndarray  # (80, 3000) float32
    content_seconds: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.shape != (N_MELS, N_FRAMES):
            raise ValueError(f"mel features must be {(N_MELS, N_FRAMES)}, got {self.data.shape}")


def _hann(n: int) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def _hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    linear = 3.0 * f / 200.0
    log_region = f >= 1000.0
    out = np.where(log_region, 15.0 + np.log(np.maximum(f, 1e-12) / 1000.0) * (27.0 / np.log(6.4)),
                   linear)
    return out


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    linear = 200.0 * m / 3.0
    return np.where(m >= 15.0, 1000.0 * np.exp(np.log(6.4) * (m - 15.0) / 27.0), linear)


def mel_filterbank(sr: int = SAMPLE_RATE, n_fft: int = N_FFT, n_mels: int = N_MELS) -> np.ndarray:
    """Slaney-scale, slaney-normalized triangular filters, shape (n_mels, n_fft//2+1)."""
    fmax = sr / 2.0
    mel_points = np.linspace(_hz_to_mel(0.0), _hz_to_mel(fmax), n_mels + 2)
    freqs = _mel_to_hz(mel_points)
    fft_freqs = np.linspace(0.0, fmax, n_fft // 2 + 1)
    fdiff = np.diff(freqs)
    ramps = freqs[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (freqs[2:] - freqs[:-2]))[:, None]  # slaney area normalization
    return weights


def _power_spectrogram(wave: np.ndarray) -> np.ndarray:
    """Reflect-padded, Hann-windowed power STFT; drops the trailing frame."""
    pad = N_FFT // 2
    x = np.pad(wave.astype(np.float64), pad, mode="reflect")
    frames = np.lib.stride_tricks.sliding_window_view(x, N_FFT)[::HOP_LENGTH]
    spec = np.fft.rfft(frames * _hann(N_FFT), axis=1)
    power = np.abs(spec) ** 2
    return power[:-1].T  # (n_fft//2+1, N_FRAMES)


def compute_log_mel(clip: AudioClip) -> MelFeatures:
    wave = clip.waveform
    if wave.size < CHUNK_SAMPLES:
        wave = np.pad(wave, (0, CHUNK_SAMPLES - wave.size))
    power = _power_spectrogram(wave)
    mel = mel_filterbank() @ power
    log_spec = np.log10(np.maximum(mel, 1e-10))
    log_spec = np.maximum(log_spec, log_spec.max() - 8.0)
    log_spec = (log_spec + 4.0) / 4.0
    return MelFeatures(data=log_spec.astype(np.float32), content_seconds=clip.duration)
