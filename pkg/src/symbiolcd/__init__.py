"""Object-level loop-closure detection fused with bag-of-words similarity."""

__version__ = "0.1.0"
