"""Adaptive fine-grained L2 regularization for BPR matrix factorization."""

__version__ = "0.1.0"

from .mf import Embeddings, SparseGrad, TripletBatch
from .adaptive import RegCoefficients

__all__ = ["Embeddings", "SparseGrad", "TripletBatch", "RegCoefficients"]
