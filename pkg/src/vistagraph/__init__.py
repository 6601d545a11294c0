"""Street-level landmark visibility analysis toolkit."""

__version__ = "0.1.0"
