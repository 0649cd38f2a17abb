"""horizonrec: cross-domain sequential recommendation with retrieval-noised dual diffusion."""

__version__ = "0.1.0"
