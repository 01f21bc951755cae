"""Image I/O and array/tensor conversion.

Images live in memory as float32 ``H x W x C`` arrays in ``[0, 1]`` with
``C`` = 3 (RGB) or 4 (RGBA). Alpha read from an 8-bit file is stored as
``k / 255`` which maps back to ``k`` exactly on write.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import NumericInputError, RangeError, ShapeMismatchError

RASTER_SUFFIXES = {".png", ".jpg", ".jpeg"}


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        im.load()
        has_alpha = im.mode in ("RGBA", "LA", "PA") or (im.mode == "P" and "transparency" in im.info)
        im = im.convert("RGBA" if has_alpha else "RGB")
        arr = np.asarray(im, dtype=np.uint8)
    return arr.astype(np.float32) / 255.0


def to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(arr, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_image(path, arr: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = to_uint8(arr)
    if data.ndim != 3 or data.shape[2] not in (3, 4):
        raise ShapeMismatchError(f"expected H x W x 3|4 image, got {data.shape}")
    if path.suffix.lower() in (".jpg", ".jpeg"):
        if data.shape[2] == 4:
            data = data[..., :3]
        Image.fromarray(data, "RGB").save(path, quality=95)
    else:
        Image.fromarray(data, "RGBA" if data.shape[2] == 4 else "RGB").save(path)
    return path


def split_alpha(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise ShapeMismatchError(f"expected H x W x 3|4 image, got {arr.shape}")
    if arr.shape[2] == 4:
        return arr[..., :3], arr[..., 3]
    return arr, None


def join_alpha(rgb: np.ndarray, alpha: np.ndarray | None) -> np.ndarray:
    if alpha is None:
        return rgb
    return np.concatenate([rgb, alpha[..., None].astype(rgb.dtype, copy=False)], axis=2)


def check_rgb(arr: np.ndarray) -> None:
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeMismatchError(f"expected H x W x 3 RGB image, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise NumericInputError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise RangeError(f"pixel values must lie in [0, 1], got [{arr.min():.4g}, {arr.max():.4g}]")


def to_tensor(rgb: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """``H x W x 3`` array -> ``1 x 3 x H x W`` tensor."""
    check_rgb(rgb)
    return torch.from_numpy(np.ascontiguousarray(rgb.transpose(2, 0, 1))).to(dtype).unsqueeze(0)


def from_tensor(t: torch.Tensor) -> np.ndarray:
    """``1 x 3 x H x W`` (or ``3 x H x W``) tensor -> float32 ``H x W x 3`` array."""
    if t.dim() == 4:
        t = t[0]
    return t.detach().to(torch.float32).permute(1, 2, 0).contiguous().numpy()
