"""Frozen speech-encoder inference: encoder blocks only, no gradients."""

from __future__ import annotations

import numpy as np

from .log_mel import MelFeatures

FRAMES_PER_SECOND = 50  # encoder output resolution after the stride-2 conv


class EncoderError(RuntimeError):
    pass


class FrozenEncoder:
    """Whisper-style encoder loaded from a local checkpoint directory.

    Only the encoder blocks run; weights stay untouched and inference is
    single-threaded for determinism.
    """

    def __init__(self, checkpoint_path, device: str = "cpu"):
        import torch
        from transformers import WhisperModel

        torch.set_num_threads(1)
        try:
            model = WhisperModel.from_pretrained(checkpoint_path)
        except Exception as exc:
            raise EncoderError(f"cannot load encoder checkpoint {checkpoint_path}: {exc}") from exc
        self._torch = torch
        self.encoder = model.get_encoder().to(device).eval()
        for p in self.encoder.parameters():
            p.requires_grad_(False)
        self.d_model = int(self.encoder.config.d_model)
        self.device = device

    def encode(self, mel: MelFeatures) -> np.ndarray:
        """All encoder frames for one clip, shape (n_frames, d_model)."""
        torch = self._torch
        with torch.no_grad():
            feats = torch.from_numpy(mel.data).to(self.device).unsqueeze(0)
            out = self.encoder(feats).last_hidden_state[0].cpu().numpy()
        if not np.all(np.isfinite(out)):
            raise EncoderError("non-finite activations in encoder output")
        return out


def encode_and_pool(mel: MelFeatures, encoder: FrozenEncoder) -> np.ndarray:
    """Pooled teacher vector: trim the padding region, then average.

    The trailing frames cover the zero padding added to reach the model's
    30 s input; only ceil(content_seconds * 50) frames carry content.
    """
    frames = encoder.encode(mel)
    keep = int(np.ceil(mel.content_seconds * FRAMES_PER_SECOND))
    keep = max(1, min(keep, frames.shape[0]))
    pooled = frames[:keep].mean(axis=0)
    if not np.all(np.isfinite(pooled)):
        raise EncoderError("non-finite pooled embedding")
    return pooled.astype(np.float32)
