"""Graph-attention HRTF personalization and spatial upsampling."""

__version__ = "0.1.0"
