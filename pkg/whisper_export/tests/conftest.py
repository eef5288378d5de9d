import numpy as np
import pytest


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """Small random encoder checkpoint with the production hidden width."""
    from transformers import WhisperConfig, WhisperModel

    cfg = WhisperConfig(
        d_model=768,
        encoder_layers=1,
        encoder_attention_heads=8,
        encoder_ffn_dim=256,
        decoder_layers=1,
        decoder_attention_heads=8,
        decoder_ffn_dim=256,
        num_mel_bins=80,
        max_source_positions=1500,
        max_target_positions=64,
        vocab_size=128,
        pad_token_id=0,
        bos_token_id=1,
        eos_token_id=2,
        decoder_start_token_id=2,
        suppress_tokens=None,
        begin_suppress_tokens=None,
    )
    import torch

    torch.manual_seed(0)
    model = WhisperModel(cfg)
    path = tmp_path_factory.mktemp("ckpt") / "tiny-encoder"
    model.save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def encoder(tiny_checkpoint):
    from whisper_export.encoder import FrozenEncoder

    return FrozenEncoder(tiny_checkpoint)


def make_sine(freq_hz: float, seconds: float, rate: int = 16_000, amp: float = 0.5) -> np.ndarray:
    t = np.arange(int(seconds * rate)) / rate
    return (amp * np.sin(2 * np.pi * freq_hz * t)).astype(np.float32)
