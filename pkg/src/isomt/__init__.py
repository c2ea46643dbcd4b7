"""Isometric machine translation: length-controlled NMT toolkit."""

__version__ = "0.1.0"
