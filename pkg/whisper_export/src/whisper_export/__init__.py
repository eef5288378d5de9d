"""Offline exporter: audio + transcripts -> ALKD teacher-embedding store.

Log-Mel front end, frozen speech-encoder inference (encoder blocks only),
padding trim, temporal average pooling. No gradient machinery anywhere.
"""

__version__ = "0.1.0"
