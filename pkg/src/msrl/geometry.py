"""Poincare ball geometry: Mobius addition, geodesic distance, exponential map,
conformal factor, Busemann function, and safe projection into the ball.

All functions are pure, operate on numpy arrays in double precision, and
broadcast over leading axes (the last axis is the coordinate dimension).
The Busemann function is implemented for the unit ball only; rescale to
curvature 1 before evaluating it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidInputError

__all__ = [
    "BALL_EPS",
    "Curvature",
    "mobius_add",
    "geodesic_distance",
    "exp_map",
    "conformal_factor",
    "project_to_ball",
    "busemann",
]

# Margin kept between any represented point and the ball boundary. The
# conformal factor and the Busemann denominator both blow up at the boundary.
BALL_EPS = 1e-5

_IDEAL_NORM_TOL = 1e-6
_ZERO_TANGENT = 1e-12


@dataclass(frozen=True)
class Curvature:
    """Magnitude of the (negative) sectional curvature; ball radius is 1/sqrt(kappa)."""

    kappa: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise ConfigurationError(f"curvature must be finite and > 0, got {self.kappa}")

    @property
    def radius(self) -> float:
        return 1.0 / math.sqrt(self.kappa)


def _as_double(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite coordinates")
    return arr


def _sq_norm(x: np.ndarray) -> np.ndarray:
    return np.sum(x * x, axis=-1)


def _check_in_ball(x: np.ndarray, k: Curvature, name: str) -> None:
    if np.any(k.kappa * _sq_norm(x) >= 1.0):
        raise InvalidInputError(f"{name} is not strictly inside the ball (kappa={k.kappa})")


def project_to_ball(z_raw, k: Curvature = Curvature(), eps: float = BALL_EPS) -> np.ndarray:
    """Rescale any vector with sqrt(kappa)*norm > 1-eps back to that radius.

    Interior points are returned bit-exactly unchanged.
    """
    if not (0.0 < eps < 1.0):
        raise ConfigurationError(f"projection eps must be in (0, 1), got {eps}")
    z = _as_double(z_raw, "z_raw")
    norm = np.sqrt(_sq_norm(z))
    max_norm = (1.0 - eps) / math.sqrt(k.kappa)
    inside = norm <= max_norm
    if np.all(inside):
        return z
    scale = np.where(inside, 1.0, max_norm / np.where(norm == 0.0, 1.0, norm))
    return z * scale[..., None]


def mobius_add(x, y, k: Curvature = Curvature()) -> np.ndarray:
    """Mobius addition x (+)_kappa y, projected back into the open ball."""
    x = _as_double(x, "x")
    y = _as_double(y, "y")
    _check_in_ball(x, k, "x")
    _check_in_ball(y, k, "y")
    kap = k.kappa
    xy = np.sum(x * y, axis=-1, keepdims=True)
    x2 = _sq_norm(x)[..., None]
    y2 = _sq_norm(y)[..., None]
    num = (1.0 + 2.0 * kap * xy + kap * y2) * x + (1.0 - kap * x2) * y
    den = 1.0 + 2.0 * kap * xy + kap * kap * x2 * y2
    return project_to_ball(num / den, k)


def geodesic_distance(z1, z2, k: Curvature = Curvature()) -> np.ndarray:
    """Geodesic distance on the ball, (2/sqrt(kappa)) * artanh(sqrt(kappa)*|-z1 (+) z2|)."""
    z1 = _as_double(z1, "z1")
    z2 = _as_double(z2, "z2")
    _check_in_ball(z1, k, "z1")
    _check_in_ball(z2, k, "z2")
    sk = math.sqrt(k.kappa)
    diff = mobius_add(-z1, z2, k)
    arg = sk * np.sqrt(_sq_norm(diff))
    return (2.0 / sk) * np.arctanh(arg)


def exp_map(z, v, k: Curvature = Curvature()) -> np.ndarray:
    """Exponential map at z applied to tangent vector v.

    The norm factor tanh(sqrt(kappa)*|v| / (1 - kappa*|z|^2)) has a removable
    singularity at |v| = 0; that case returns z exactly.
    """
    z = _as_double(z, "z")
    v = _as_double(v, "v")
    _check_in_ball(z, k, "z")
    sk = math.sqrt(k.kappa)
    v_norm = np.sqrt(_sq_norm(v))
    small = v_norm < _ZERO_TANGENT
    safe_norm = np.where(small, 1.0, v_norm)
    # tanh rounds to 1.0 for huge arguments; keep the operand off the boundary
    tanh_term = np.minimum(np.tanh(sk * v_norm / (1.0 - k.kappa * _sq_norm(z))), 1.0 - 1e-12)
    coef = tanh_term / (sk * safe_norm)
    step = np.where(small[..., None], 0.0, coef[..., None] * v)
    out = mobius_add(z, step, k)
    # exp_z(0) = z bit-exactly, bypassing the Mobius round-trip
    if np.any(small):
        out = np.where(small[..., None], np.broadcast_to(z, out.shape), out)
    return out


def conformal_factor(z, k: Curvature = Curvature()) -> np.ndarray:
    """Scalar multiplying the Euclidean metric at z: 4 / (1 - kappa*|z|^2)^2."""
    z = _as_double(z, "z")
    _check_in_ball(z, k, "z")
    return 4.0 / (1.0 - k.kappa * _sq_norm(z)) ** 2


def busemann(c, z) -> np.ndarray:
    """Busemann function on the unit ball: log(|c - z|^2 / (1 - |z|^2)).

    `c` must be a unit vector (an ideal point on the boundary) and `z` must lie
    within the safety radius 1 - BALL_EPS; project first if it might not.
    """
    c = _as_double(c, "c")
    z = _as_double(z, "z")
    c_norm = np.sqrt(_sq_norm(c))
    if np.any(np.abs(c_norm - 1.0) > _IDEAL_NORM_TOL):
        raise InvalidInputError("c must have unit norm (ideal point on the boundary)")
    z_sq = _sq_norm(z)
    if np.any(z_sq > (1.0 - BALL_EPS) ** 2):
        raise InvalidInputError(
            f"z exceeds the clamp radius 1 - {BALL_EPS}; apply project_to_ball first"
        )
    return np.log(_sq_norm(c - z) / (1.0 - z_sq))
