"""Training objective over prototype assignments.

Per batch of B targets and B x M anchors the loss is

    (1/MB) sum_i sum_m H(p_i_plus, p_im)  -  lambda * H(p_bar)
        + beta * (1/MB) sum_i sum_m H(p_im)

with p_bar the mean anchor assignment. Targets act as constants (stop
gradient); `hmsn_loss_backward` returns analytic gradients with respect to
the anchor logits and zeros for the target logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .prototypes import softmax

__all__ = [
    "LOG_CLAMP",
    "LossWeights",
    "BatchAssignments",
    "cross_entropy",
    "entropy",
    "hmsn_loss",
    "hmsn_loss_terms",
    "hmsn_loss_from_logits",
    "hmsn_loss_backward",
]

# Floor applied inside every log; one-hot limits under tau_t = 0.0625 push
# probabilities to exact zero in double precision.
LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """lam weights the mean-assignment entropy, beta the per-anchor entropy."""

    lam: float = 10.0
    beta: float = 0.25

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise InvalidInputError(f"lambda must be finite and >= 0, got {self.lam}")
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise InvalidInputError(f"beta must be finite and >= 0, got {self.beta}")


@dataclass
class BatchAssignments:
    """targets: (B, K) simplex rows; anchors: (B, M, K) simplex rows."""

    targets: np.ndarray
    anchors: np.ndarray

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.anchors = np.asarray(self.anchors, dtype=np.float64)
        if self.targets.ndim != 2 or self.anchors.ndim != 3:
            raise InvalidInputError("targets must be (B, K) and anchors (B, M, K)")
        if self.targets.shape[0] != self.anchors.shape[0]:
            raise InvalidInputError("targets and anchors disagree on batch size B")
        if self.targets.shape[1] != self.anchors.shape[2]:
            raise InvalidInputError("targets and anchors disagree on K")


def cross_entropy(p, q) -> float:
    """H(p, q) = -sum_k p_k log q_k, with q clamped below by LOG_CLAMP."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidInputError(f"shape mismatch: {p.shape} vs {q.shape}")
    return float(-np.sum(p * np.log(np.maximum(q, LOG_CLAMP))))


def entropy(p) -> float:
    """Shannon entropy in nats; the clamp applies inside the log only."""
    p = np.asarray(p, dtype=np.float64)
    return float(-np.sum(p * np.log(np.maximum(p, LOG_CLAMP))))


def _term_values(batch: BatchAssignments):
    t = batch.targets
    a = batch.anchors
    log_a = np.log(np.maximum(a, LOG_CLAMP))
    ce = float(-np.mean(np.sum(t[:, None, :] * log_a, axis=-1)))
    p_bar = a.reshape(-1, a.shape[-1]).mean(axis=0)
    mean_ent = entropy(p_bar)
    anchor_ent = float(-np.mean(np.sum(a * log_a, axis=-1)))
    return ce, mean_ent, anchor_ent


def hmsn_loss_terms(batch: BatchAssignments, w: LossWeights):
    """Return (loss, ce, mean_entropy, anchor_entropy); entropies are unweighted."""
    ce, mean_ent, anchor_ent = _term_values(batch)
    return ce - w.lam * mean_ent + w.beta * anchor_ent, ce, mean_ent, anchor_ent


def hmsn_loss(batch: BatchAssignments, w: LossWeights) -> float:
    return hmsn_loss_terms(batch, w)[0]


def hmsn_loss_from_logits(target_logits, anchor_logits, w: LossWeights) -> float:
    """Loss with assignments computed as softmax of the given logits."""
    batch = BatchAssignments(softmax(np.asarray(target_logits, dtype=np.float64)),
                             softmax(np.asarray(anchor_logits, dtype=np.float64)))
    return hmsn_loss(batch, w)


def hmsn_loss_backward(target_logits, anchor_logits, w: LossWeights):
    """Analytic gradients of the loss with respect to the logits.

    Targets are constants under the stop-gradient policy, so their gradient
    block is identically zero. Anchors: with p = softmax(l) and dL/dp from the
    three terms, dL/dl = p * (dL/dp - <p, dL/dp>).
    """
    target_logits = np.asarray(target_logits, dtype=np.float64)
    anchor_logits = np.asarray(anchor_logits, dtype=np.float64)
    t = softmax(target_logits)
    a = softmax(anchor_logits)
    B, M, K = a.shape
    inv = 1.0 / (M * B)
    p_bar = a.reshape(-1, K).mean(axis=0)

    dL_da = (
        -inv * t[:, None, :] / np.maximum(a, LOG_CLAMP)
        + w.lam * inv * (np.log(np.maximum(p_bar, LOG_CLAMP)) + 1.0)
        - w.beta * inv * (np.log(np.maximum(a, LOG_CLAMP)) + 1.0)
    )
    inner = np.sum(a * dL_da, axis=-1, keepdims=True)
    d_anchor_logits = a * (dL_da - inner)
    return d_anchor_logits, np.zeros_like(target_logits)
