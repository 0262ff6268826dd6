"""Small convolutional encoder: image -> pre-embedding in R^d.

Three 3x3 conv blocks (relu + 2x average pool each), global average pooling,
and a two-layer head. Views of any crop size are resized to a fixed input
resolution by nearest neighbor before entering the network. The final layer
is initialized small so fresh embeddings start near the ball origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import InvalidInputError

__all__ = ["EncoderConfig", "init_encoder_params", "encoder_forward", "encode", "resize_nearest"]


@dataclass(frozen=True)
class EncoderConfig:
    input_size: int = 32
    channels: tuple = (16, 32, 64)
    hidden: int = 64
    out_dim: int = 16
    in_channels: int = 3

    def __post_init__(self):
        if self.input_size < 8:
            raise InvalidInputError(f"input_size must be >= 8, got {self.input_size}")
        if len(self.channels) != 3:
            raise InvalidInputError("encoder uses exactly 3 conv blocks")
        if self.input_size % 8:
            raise InvalidInputError("input_size must be divisible by 8 (three 2x pools)")


def init_encoder_params(cfg: EncoderConfig, seed: int, dtype=np.float32) -> dict:
    """He-initialized conv/head weights; the output layer is scaled by 0.1."""
    rng = np.random.default_rng(seed)
    c0 = cfg.in_channels
    c1, c2, c3 = cfg.channels

    def conv_w(fan_out, fan_in):
        std = np.sqrt(2.0 / (fan_in * 9))
        return (rng.standard_normal((fan_out, fan_in, 3, 3)) * std).astype(dtype)

    def lin_w(fan_in, fan_out, gain=1.0):
        std = gain * np.sqrt(2.0 / fan_in)
        return (rng.standard_normal((fan_in, fan_out)) * std).astype(dtype)

    return {
        "conv1_w": conv_w(c1, c0), "conv1_b": np.zeros(c1, dtype=dtype),
        "conv2_w": conv_w(c2, c1), "conv2_b": np.zeros(c2, dtype=dtype),
        "conv3_w": conv_w(c3, c2), "conv3_b": np.zeros(c3, dtype=dtype),
        "head_w": lin_w(c3, cfg.hidden), "head_b": np.zeros(cfg.hidden, dtype=dtype),
        "out_w": lin_w(cfg.hidden, cfg.out_dim, gain=0.1), "out_b": np.zeros(cfg.out_dim, dtype=dtype),
    }


def resize_nearest(img: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbor resize of (..., H, W) to (..., size, size); integer index math."""
    h, w = img.shape[-2], img.shape[-1]
    ys = (np.arange(size) * h) // size
    xs = (np.arange(size) * w) // size
    return img[..., ys[:, None], xs[None, :]]


def _check_params(params: dict, cfg: EncoderConfig) -> None:
    c1, c2, c3 = cfg.channels
    expect = {
        "conv1_w": (c1, cfg.in_channels, 3, 3), "conv2_w": (c2, c1, 3, 3),
        "conv3_w": (c3, c2, 3, 3), "head_w": (c3, cfg.hidden),
        "out_w": (cfg.hidden, cfg.out_dim),
    }
    for name, shape in expect.items():
        if name not in params or params[name].shape != shape:
            got = params[name].shape if name in params else "missing"
            raise InvalidInputError(f"parameter {name} does not match config: expected {shape}, got {got}")


def encoder_forward(leaves: dict, images: np.ndarray, cfg: EncoderConfig) -> ad.Tensor:
    """Forward pass over a batch (N, C, input_size, input_size) of autodiff leaves.

    `leaves` maps parameter names to Tensors; pass requires_grad leaves to
    train, constants to evaluate.
    """
    x = ad.Tensor(images)
    for i in (1, 2, 3):
        x = ad.conv3x3(x, leaves[f"conv{i}_w"], leaves[f"conv{i}_b"])
        x = ad.relu(x)
        x = ad.avgpool2(x)
    x = ad.global_avg_pool(x)
    x = ad.relu(ad.linear(x, leaves["head_w"], leaves["head_b"]))
    return ad.linear(x, leaves["out_w"], leaves["out_b"])


def as_leaves(params: dict, requires_grad: bool) -> dict:
    return {k: ad.Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


def prepare_views(views, cfg: EncoderConfig, dtype=np.float32) -> np.ndarray:
    """Stack views of mixed crop sizes into one (N, C, S, S) batch in [0, 1]."""
    out = np.empty((len(views), cfg.in_channels, cfg.input_size, cfg.input_size), dtype=dtype)
    for i, v in enumerate(views):
        if v.ndim != 3 or v.shape[0] != cfg.in_channels:
            raise InvalidInputError(f"view {i}: expected ({cfg.in_channels}, H, W), got {v.shape}")
        out[i] = resize_nearest(v, cfg.input_size)
    return out


def encode(params: dict, image: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    """Deterministic single-image forward pass; returns the pre-embedding (d,).

    Accepts (C, H, W) with H, W >= 8 and pixel values in [0, 1]; the view is
    resized to the configured input resolution first.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != cfg.in_channels:
        raise InvalidInputError(f"expected ({cfg.in_channels}, H, W) image, got shape {image.shape}")
    if image.shape[1] < 8 or image.shape[2] < 8:
        raise InvalidInputError(f"image sides must be >= 8 pixels, got {image.shape[1:]}")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise InvalidInputError("pixel values must lie in [0, 1]")
    _check_params(params, cfg)
    batch = prepare_views([image], cfg, dtype=params["conv1_w"].dtype)
    out = encoder_forward(as_leaves(params, requires_grad=False), batch, cfg)
    return out.data[0]
