"""qpatch: patch-based quantum fidelity kernels for audio anti-spoofing."""

__version__ = "0.1.0"
