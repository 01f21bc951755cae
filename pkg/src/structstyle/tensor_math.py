"""Feature-map kernels: Gram matrices, shape-matching upsampling and cross-layer Grams.

A feature map is stored as a ``C x N`` matrix (one flattened activation map
per row) together with the spatial shape ``(H, W)`` it was flattened from,
row-major. None of the kernels normalise by ``N`` or ``C``.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import NumericInputError, ShapeMismatchError

__all__ = [
    "FeatureMap",
    "gram",
    "upsample_channels",
    "upsample_spatial",
    "crop_to_multiple",
    "cross_gram",
]


@dataclass(frozen=True)
class FeatureMap:
    values: torch.Tensor  # (C, N)
    height: int
    width: int

    def __post_init__(self):
        if self.values.dim() != 2:
            raise ShapeMismatchError(f"feature map must be 2-D (C x N), got {tuple(self.values.shape)}")
        if self.values.shape[1] != self.height * self.width:
            raise ShapeMismatchError(
                f"N={self.values.shape[1]} does not equal H*W={self.height}*{self.width}"
            )

    @classmethod
    def from_activation(cls, act: torch.Tensor) -> "FeatureMap":
        """Wrap a ``(C, H, W)`` or ``(1, C, H, W)`` activation tensor."""
        if act.dim() == 4:
            if act.shape[0] != 1:
                raise ShapeMismatchError("batched activations must have batch size 1")
            act = act[0]
        if act.dim() != 3:
            raise ShapeMismatchError(f"expected (C, H, W) activation, got {tuple(act.shape)}")
        c, h, w = act.shape
        return cls(act.reshape(c, h * w), h, w)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def size(self) -> int:
        return self.values.shape[1]

    def as_image(self) -> torch.Tensor:
        return self.values.reshape(self.channels, self.height, self.width)


def _check_finite(f: FeatureMap) -> None:
    if not bool(torch.isfinite(f.values).all()):
        raise NumericInputError("feature map contains non-finite values")


def gram(f: FeatureMap) -> torch.Tensor:
    """Uncentered covariance ``F @ F.T`` of shape ``(C, C)``."""
    _check_finite(f)
    return f.values @ f.values.T


def upsample_channels(f: FeatureMap, target_channels: int) -> FeatureMap:
    """Repeat each channel ``r = target / C`` consecutive times (block repeat)."""
    c = f.channels
    if target_channels < c or target_channels % c:
        raise ShapeMismatchError(f"cannot upsample {c} channels to {target_channels}: ratio is not an integer")
    r = target_channels // c
    if r == 1:
        return f
    return FeatureMap(torch.repeat_interleave(f.values, r, dim=0), f.height, f.width)


def upsample_spatial(f: FeatureMap, target_hw: tuple[int, int]) -> FeatureMap:
    """Nearest-neighbour duplication onto a grid that is an integer multiple of the current one."""
    th, tw = target_hw
    if th < f.height or tw < f.width or th % f.height or tw % f.width:
        raise ShapeMismatchError(
            f"cannot upsample {f.height}x{f.width} to {th}x{tw}: factors are not integers"
        )
    sh, sw = th // f.height, tw // f.width
    if sh == 1 and sw == 1:
        return f
    img = f.as_image()
    img = torch.repeat_interleave(torch.repeat_interleave(img, sh, dim=1), sw, dim=2)
    return FeatureMap(img.reshape(f.channels, th * tw), th, tw)


def crop_to_multiple(f: FeatureMap, base_hw: tuple[int, int]) -> FeatureMap:
    """Drop trailing rows/columns of ``f`` so its dims are multiples of ``base_hw``.

    Odd input sizes leave the deeper (pooled) map slightly smaller than an
    exact fraction of the shallower one; this trims at most ``factor - 1``
    border pixels.
    """
    bh, bw = base_hw
    if bh < 1 or bw < 1 or bh > f.height or bw > f.width:
        raise ShapeMismatchError(f"cannot crop {f.height}x{f.width} to a multiple of {bh}x{bw}")
    h = (f.height // bh) * bh
    w = (f.width // bw) * bw
    if (h, w) == (f.height, f.width):
        return f
    img = f.as_image()[:, :h, :w]
    return FeatureMap(img.reshape(f.channels, h * w), h, w)


def cross_gram(low: FeatureMap, high: FeatureMap, crop: bool = False) -> torch.Tensor:
    """Uncentered cross-covariance between a shallower and a deeper layer.

    ``low`` has fewer (or equal) channels and more (or equal) spatial samples.
    Its channels are block-repeated up to ``C_high``; ``high`` is
    nearest-neighbour upsampled to the spatial grid of ``low``. The result
    is ``A @ B.T`` with shape ``(C_high, C_high)``.

    With ``crop=True`` the trailing border of ``low`` is trimmed first when
    its size is not an exact multiple of ``high``'s.
    """
    _check_finite(low)
    _check_finite(high)
    if low.channels > high.channels:
        raise ShapeMismatchError(
            f"low layer has more channels ({low.channels}) than high layer ({high.channels})"
        )
    if low.size < high.size:
        raise ShapeMismatchError(
            f"low layer has fewer positions ({low.size}) than high layer ({high.size})"
        )
    if crop:
        low = crop_to_multiple(low, (high.height, high.width))
    a = upsample_channels(low, high.channels)
    b = upsample_spatial(high, (low.height, low.width))
    return a.values @ b.values.T
