"""Block band random matrix verification lab."""

__version__ = "0.1.0"
