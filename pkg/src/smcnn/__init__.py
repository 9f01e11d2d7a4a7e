"""Signal-matrix CNN for local-flaw detection in multi-channel MFL wire-rope records."""

__version__ = "0.1.0"
