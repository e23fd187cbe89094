"""No-reference audio-visual quality metric built on stacked sparse autoencoders."""

__version__ = "0.1.0"
