"""Desk-scale audio-language knowledge distillation.

Pretrains a small transformer text encoder with masked language modeling
plus a cross-modal distillation loss (norm-transfer MMD or contrastive)
against frozen, precomputed speech-encoder embeddings, then fine-tunes
and evaluates on sentiment/emotion-style tasks using text only.
"""

__version__ = "0.1.0"
