"""Synthetic paired corpus: class-anchored teacher vectors + templated transcripts.

Each latent class owns a small topical word pool; transcripts mix topical
words with shared filler words, so token statistics correlate with the class
without making it trivially separable. Teacher vectors are class anchors
plus noise; an optional per-class norm spread scales vectors so class
identity is also carried by vector norms (the statistic norm-matching
distillation can transfer).
"""

from __future__ import annotations

import numpy as np

from .store import TeacherEmbedding, synth_teacher
from .text import Record

FILLERS = (
    "the a it is was and then we they to of on in at very quite really just "
    "so there here this that with some more other about after before again"
).split()

_CLASS_POOLS = [
    "ocean wave tide salt coral reef harbor pearl".split(),
    "forest pine moss fern trail cedar grove thicket".split(),
    "desert dune sand mirage cactus oasis mesa canyon".split(),
    "glacier frost snow icicle tundra polar drift floe".split(),
    "ember flame spark ash torch kiln forge cinder".split(),
    "meadow clover bloom pollen orchard hedge pasture fen".split(),
    "summit ridge scree crag ledge saddle couloir cairn".split(),
    "river delta rapids eddy ford shoal bayou creek".split(),
]


def class_pool(latent_class: int) -> list[str]:
    if latent_class < len(_CLASS_POOLS):
        return _CLASS_POOLS[latent_class]
    return [f"topic{latent_class}word{k}" for k in range(8)]


def synth_transcript(
    latent_class: int,
    rng: np.random.Generator,
    min_words: int = 6,
    max_words: int = 12,
    topic_prob: float = 0.35,
) -> str:
    pool = class_pool(latent_class)
    n = int(rng.integers(min_words, max_words + 1))
    words = []
    for _ in range(n):
        if rng.random() < topic_prob:
            words.append(pool[int(rng.integers(len(pool)))])
        else:
            words.append(FILLERS[int(rng.integers(len(FILLERS)))])
    return " ".join(words)


def build_synth_dataset(
    classes: int,
    per_class: int,
    dim: int,
    noise_scale: float,
    seed: int,
    norm_spread: float = 0.0,
    topic_prob: float = 0.35,
) -> tuple[list[TeacherEmbedding], list[Record]]:
    """Paired (store records, labeled text records) for `classes` latent classes.

    With norm_spread s, class c vectors are scaled by 1 + s * c / (classes - 1),
    so norms run from 1 to 1 + s across classes.
    """
    if classes < 2:
        raise ValueError("need at least two latent classes")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    embeddings: list[TeacherEmbedding] = []
    labeled: list[Record] = []
    for c in range(classes):
        scale = 1.0 + norm_spread * c / (classes - 1)
        for i in range(per_class):
            sid = f"c{c:02d}_{i:05d}"
            text = synth_transcript(c, rng, topic_prob=topic_prob)
            emb = synth_teacher(c, dim, noise_scale, rng, sample_id=sid)
            embeddings.append(
                TeacherEmbedding(sid, (emb.vector * scale).astype(np.float32), text)
            )
            labeled.append(Record(id=sid, text=text, label=float(c)))
    return embeddings, labeled
