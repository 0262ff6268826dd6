"""Learnable boundary prototypes and soft assignment of ball points to them.

A prototype set is a K x d matrix of unit-norm ideal points. Assignment of an
embedding z is softmax(-b(z) / tau) over the K Busemann values b_k(z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .geometry import busemann

__all__ = [
    "PrototypeSet",
    "init_prototypes",
    "busemann_vector",
    "assign",
    "softmax",
    "mean_assignment",
]


@dataclass
class PrototypeSet:
    """K unit-norm rows in R^d; rows live on the boundary sphere."""

    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ConfigurationError("prototype matrix must be 2-D (K x d)")
        K, d = self.vectors.shape
        if K < 2 or d < 2:
            raise ConfigurationError(f"need K >= 2 and d >= 2, got K={K}, d={d}")
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ConfigurationError("every prototype row must have unit norm")

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


def init_prototypes(K: int, d: int, seed: int) -> PrototypeSet:
    """Draw K rows from an isotropic Gaussian and normalize them to the sphere."""
    if K < 2 or d < 2:
        raise ConfigurationError(f"need K >= 2 and d >= 2, got K={K}, d={d}")
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((K, d))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return PrototypeSet(rows)


def busemann_vector(P: PrototypeSet, z) -> np.ndarray:
    """Busemann value of z toward every prototype; shape (..., K)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != P.d:
        raise InvalidInputError(f"dimension mismatch: prototypes have d={P.d}, z has {z.shape[-1]}")
    return busemann(P.vectors, z[..., None, :])


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax; safe for logits of any magnitude."""
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def assign(P: PrototypeSet, z, tau: float) -> np.ndarray:
    """Soft assignment softmax(-b(z)/tau) on the K-simplex; shape (..., K)."""
    if not tau > 0:
        raise ConfigurationError(f"temperature must be > 0, got {tau}")
    return softmax(-busemann_vector(P, z) / tau)


def mean_assignment(assignments) -> np.ndarray:
    """Arithmetic mean of assignment vectors; stays on the simplex."""
    arr = np.asarray(assignments, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInputError("mean_assignment needs at least one assignment vector")
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr.reshape(-1, arr.shape[-1]).mean(axis=0)
