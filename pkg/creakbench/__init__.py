"""creakbench - creak/pitch disentanglement toolkit for speaker-embedding flows."""

__version__ = "0.1.0"
