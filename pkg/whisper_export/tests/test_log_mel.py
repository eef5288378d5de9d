import numpy as np
import pytest
from scipy.io import wavfile

from conftest import make_sine
from whisper_export.audio import AudioClip, AudioError, load_wav
from whisper_export.log_mel import (
    HOP_LENGTH,
    N_FFT,
    N_FRAMES,
    N_MELS,
    compute_log_mel,
    mel_filterbank,
    _hz_to_mel,
    _mel_to_hz,
)


def oracle_filterbank():
    """Loop-built slaney filterbank, independent of the vectorized version."""
    fft_freqs = np.linspace(0, 8000.0, N_FFT // 2 + 1)
    mel_pts = np.linspace(_hz_to_mel(0.0), _hz_to_mel(8000.0), N_MELS + 2)
    f = _mel_to_hz(mel_pts)
    out = np.zeros((N_MELS, fft_freqs.size))
    for i in range(N_MELS):
        for k, fk in enumerate(fft_freqs):
            if f[i] <= fk <= f[i + 1]:
                w = (fk - f[i]) / (f[i + 1] - f[i])
            elif f[i + 1] < fk <= f[i + 2]:
                w = (f[i + 2] - fk) / (f[i + 2] - f[i + 1])
            else:
                w = 0.0
            out[i, k] = w * 2.0 / (f[i + 2] - f[i])
    return out


class TestFilterbank:
    def test_matches_loop_oracle(self):
        got = mel_filterbank()
        want = oracle_filterbank()
        assert got.shape == (N_MELS, N_FFT // 2 + 1)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_mel_scale_round_trip(self):
        freqs = np.array([0.0, 440.0, 999.0, 1000.0, 4000.0, 8000.0])
        assert np.allclose(_mel_to_hz(_hz_to_mel(freqs)), freqs, atol=1e-6)

    def test_linear_below_1khz_log_above(self):
        assert _hz_to_mel(200.0) == pytest.approx(3.0)
        assert _hz_to_mel(1000.0) == pytest.approx(15.0)
        assert _hz_to_mel(6400.0) == pytest.approx(42.0)


class TestComputeLogMel:
    def test_silence_gives_constant_floor(self):
        clip = AudioClip("quiet", np.zeros(16_000, np.float32), "")
        mel = compute_log_mel(clip)
        assert mel.data.shape == (N_MELS, N_FRAMES)
        assert np.all(mel.data == mel.data[0, 0])
        assert mel.data[0, 0] == pytest.approx(-1.5)  # (log10(1e-10)+4)/4

    @pytest.mark.parametrize("seconds", [0.3, 2.0, 15.0])
    def test_shape_is_exact_for_any_clip(self, seconds):
        clip = AudioClip("s", make_sine(300.0, seconds), "")
        assert compute_log_mel(clip).data.shape == (80, 3000)

    def test_sine_energy_lands_in_expected_band(self):
        clip = AudioClip("tone", make_sine(440.0, 2.0), "")
        mel = compute_log_mel(clip)
        active = mel.data[:, : int(2.0 * 16_000 / HOP_LENGTH)]
        got_bin = int(np.argmax(active.mean(axis=1)))
        fft_bin = round(440.0 / (16_000 / N_FFT))
        want_bin = int(np.argmax(mel_filterbank()[:, fft_bin]))
        assert got_bin == want_bin

    def test_content_seconds_recorded(self):
        clip = AudioClip("c", make_sine(100.0, 3.5), "")
        assert compute_log_mel(clip).content_seconds == pytest.approx(3.5)


class TestAudioValidation:
    def test_wrong_sample_rate_rejected(self, tmp_path):
        p = tmp_path / "slow.wav"
        wavfile.write(p, 8000, (make_sine(100, 1.0, rate=8000) * 32767).astype(np.int16))
        with pytest.raises(AudioError, match="8000"):
            load_wav(p, "slow", "")

    def test_too_long_clip_rejected(self):
        with pytest.raises(AudioError, match="15"):
            AudioClip("long", np.zeros(16_000 * 16, np.float32), "")

    def test_stereo_rejected(self, tmp_path):
        p = tmp_path / "st.wav"
        stereo = np.stack([make_sine(100, 1.0)] * 2, axis=1)
        wavfile.write(p, 16_000, (stereo * 32767).astype(np.int16))
        with pytest.raises(AudioError, match="mono"):
            load_wav(p, "st", "")

    def test_int16_wav_round_trip(self, tmp_path):
        p = tmp_path / "ok.wav"
        wave = make_sine(250, 1.0)
        wavfile.write(p, 16_000, (wave * 32767).astype(np.int16))
        clip = load_wav(p, "ok", "hello")
        assert clip.duration == pytest.approx(1.0)
        assert clip.transcript == "hello"
        assert np.max(np.abs(clip.waveform - wave)) < 1e-3
