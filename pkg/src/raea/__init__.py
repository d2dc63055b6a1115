"""Cross-platform product matching by knowledge-graph entity alignment.

Stages: rule-based rough filtering (``rough_filter``), per-channel RAEA
embeddings (``net``, trained by ``trainer``), channel ensembling and ranking
metrics (``align``).  ``pipeline`` and ``cli`` wire them together.
"""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
