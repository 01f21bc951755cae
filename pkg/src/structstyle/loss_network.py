"""Fixed VGG19 feature extractor (truncated after relu4_1).

Weights come from a container file of kind ``vgg19-weights``. Two ways to
produce one:

* :func:`convert_torchvision` converts an ImageNet-pretrained torchvision
  ``vgg19`` state dict (``vgg19-dcbb9e9d.pth``) or any dict with the same
  ``features.<idx>.weight`` keys.
* :func:`surrogate_weights` builds a deterministic stand-in whose first layer
  is a bank of oriented edge, bar and colour filters and whose deeper layers
  are He-initialised. It keeps every shape and code path identical and is
  what the test-suite uses when no pretrained file is available.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import torch
import torch.nn.functional as F

from . import container
from .errors import ContainerError, ManifestMismatchError, RangeError, ShapeMismatchError
from .tensor_math import FeatureMap

KIND = "vgg19-weights"

# (conv name, in channels, out channels); a pool follows the last conv of groups 1-3.
VGG19_CONVS: list[tuple[str, int, int]] = [
    ("conv1_1", 3, 64),
    ("conv1_2", 64, 64),
    ("conv2_1", 64, 128),
    ("conv2_2", 128, 128),
    ("conv3_1", 128, 256),
    ("conv3_2", 256, 256),
    ("conv3_3", 256, 256),
    ("conv3_4", 256, 256),
    ("conv4_1", 256, 512),
]
_POOL_AFTER = {"conv1_2", "conv2_2", "conv3_4"}
# torchvision vgg19 ``features`` indices of the convs above
_TORCHVISION_INDEX = {
    "conv1_1": 0, "conv1_2": 2, "conv2_1": 5, "conv2_2": 7, "conv3_1": 10,
    "conv3_2": 12, "conv3_3": 14, "conv3_4": 16, "conv4_1": 19,
}

LAYER_ORDER: list[str] = ["relu" + name[4:] for name, _, _ in VGG19_CONVS]
LAYER_CHANNELS: dict[str, int] = {"relu" + n[4:]: c for n, _, c in VGG19_CONVS}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def layer_index(name: str) -> int:
    try:
        return LAYER_ORDER.index(name)
    except ValueError:
        raise KeyError(f"unknown layer {name!r}; known layers: {', '.join(LAYER_ORDER)}") from None


def layer_group(name: str) -> int:
    layer_index(name)
    return int(name[4])


def expected_shapes() -> dict[str, tuple[int, ...]]:
    shapes = {}
    for name, cin, cout in VGG19_CONVS:
        shapes[f"{name}.weight"] = (cout, cin, 3, 3)
        shapes[f"{name}.bias"] = (cout,)
    return shapes


@dataclass(frozen=True)
class LossNetwork:
    """Immutable VGG19 trunk. Use :meth:`to` to get a copy in another precision."""

    weights: dict[str, torch.Tensor]
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    digest: str
    dtype: torch.dtype = torch.float32

    def to(self, dtype: torch.dtype) -> "LossNetwork":
        if dtype == self.dtype:
            return self
        return LossNetwork({k: v.to(dtype) for k, v in self.weights.items()}, self.mean, self.std, self.digest, dtype)

    @property
    def layers(self) -> list[str]:
        return list(LAYER_ORDER)

    def features(self, img: torch.Tensor, layers: Iterable[str]) -> dict[str, FeatureMap]:
        """Preprocess a ``[0, 1]`` RGB tensor and extract the requested layers."""
        return extract_features(self, preprocess(img, self), layers)


def _check_arrays(arrays: dict[str, np.ndarray]) -> None:
    for key, shape in expected_shapes().items():
        if key not in arrays:
            raise ContainerError(f"weight container is missing layer {key.split('.')[0]} ({key})")
        got = tuple(arrays[key].shape)
        if got != shape:
            raise ManifestMismatchError(
                f"{key} has shape {got}, expected {shape} (expected {shape[0]} output channels)"
            )
        if not np.isfinite(arrays[key]).all():
            raise ContainerError(f"{key} contains non-finite values")


def save_weights(path, arrays: dict[str, np.ndarray], mean=IMAGENET_MEAN, std=IMAGENET_STD, source: str = "") -> str:
    _check_arrays(arrays)
    ordered = {k: np.asarray(arrays[k], dtype="<f4") for k in expected_shapes()}
    meta = {
        "architecture": "vgg19-to-relu4_1",
        "layers": LAYER_ORDER,
        "preprocess": {"input_range": [0.0, 1.0], "mean": list(mean), "std": list(std)},
        "source": source,
    }
    return container.write(path, KIND, ordered, meta)


def load_weights(path, pinned_digest: str | None = None) -> LossNetwork:
    c = container.read(path, expected_kind=KIND)
    if pinned_digest is not None and c.digest != pinned_digest:
        raise container.DigestMismatchError(f"weights digest {c.digest} does not match pinned {pinned_digest}")
    _check_arrays(c.arrays)
    pre = c.meta.get("preprocess", {})
    mean = tuple(pre.get("mean", IMAGENET_MEAN))
    std = tuple(pre.get("std", IMAGENET_STD))
    weights = {}
    for k in expected_shapes():
        t = torch.from_numpy(c.arrays[k].astype(np.float32))
        t.requires_grad_(False)
        weights[k] = t
    return LossNetwork(weights, mean, std, c.digest)


def preprocess(img: torch.Tensor, net: LossNetwork | None = None) -> torch.Tensor:
    """Normalise a ``1 x 3 x H x W`` tensor in ``[0, 1]`` with the network's mean/std."""
    if img.dim() != 4 or img.shape[1] != 3:
        raise ShapeMismatchError(f"expected 1 x 3 x H x W RGB tensor, got {tuple(img.shape)}")
    with torch.no_grad():
        lo, hi = float(img.min()), float(img.max())
    if lo < 0.0 or hi > 1.0:
        raise RangeError(f"pixel values must lie in [0, 1], got [{lo:.4g}, {hi:.4g}]")
    mean = net.mean if net is not None else IMAGENET_MEAN
    std = net.std if net is not None else IMAGENET_STD
    m = torch.tensor(mean, dtype=img.dtype).view(1, 3, 1, 1)
    s = torch.tensor(std, dtype=img.dtype).view(1, 3, 1, 1)
    return (img - m) / s


def min_input_size(layers: Iterable[str]) -> int:
    deepest = max((layer_group(n) for n in layers), default=1)
    return 2 ** (deepest - 1)


def extract_features(net: LossNetwork, img: torch.Tensor, layers: Iterable[str]) -> dict[str, FeatureMap]:
    """Run the trunk on a preprocessed image and return ``{layer: FeatureMap}``.

    Stock VGG max-pooling (2x2, stride 2, floor) is used, so a layer in
    group ``g`` on an ``H x W`` input has ``floor(H / 2**(g-1))`` rows.
    """
    wanted = set(layers)
    for name in wanted:
        layer_index(name)
    if not wanted:
        return {}
    if img.dim() != 4 or img.shape[0] != 1 or img.shape[1] != 3:
        raise ShapeMismatchError(f"expected 1 x 3 x H x W image, got {tuple(img.shape)}")
    need = min_input_size(wanted)
    if min(img.shape[2:]) < need:
        raise ShapeMismatchError(
            f"image {img.shape[2]}x{img.shape[3]} too small: layers up to group {layer_group(max(wanted, key=layer_index))} need >= {need} px"
        )
    last = max(layer_index(n) for n in wanted)
    x = img.to(net.dtype)
    out: dict[str, FeatureMap] = {}
    for i, (conv, _, _) in enumerate(VGG19_CONVS[: last + 1]):
        x = F.relu(F.conv2d(x, net.weights[f"{conv}.weight"], net.weights[f"{conv}.bias"], padding=1))
        relu = LAYER_ORDER[i]
        if relu in wanted:
            out[relu] = FeatureMap.from_activation(x)
        if conv in _POOL_AFTER and i < last:
            x = F.max_pool2d(x, 2, 2)
    return out


def convert_torchvision(state_dict_path, out_path) -> str:
    """Convert a torchvision ``vgg19`` state dict file into a weight container."""
    sd = torch.load(state_dict_path, map_location="cpu", weights_only=True)
    if hasattr(sd, "state_dict"):
        sd = sd.state_dict()
    arrays = {}
    for conv, idx in _TORCHVISION_INDEX.items():
        for part in ("weight", "bias"):
            key = f"features.{idx}.{part}"
            if key not in sd:
                raise ContainerError(f"state dict lacks {key} (needed for {conv})")
            arrays[f"{conv}.{part}"] = sd[key].detach().cpu().numpy()
    return save_weights(out_path, arrays, source=f"torchvision:{Path(state_dict_path).name}")


def _first_layer_bank() -> tuple[np.ndarray, np.ndarray]:
    """Hand-built 64-filter bank standing in for pretrained conv1_1."""
    sx = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64) / 4.0
    sy = sx.T
    lap = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64) / 4.0
    bar = np.array([[-1, 2, -1]] * 3, dtype=np.float64) / 6.0
    lum = np.array([1.0, 1.0, 1.0]) / 3.0
    opp = [np.array([1.0, -1.0, 0.0]) / 2.0, np.array([0.5, 0.5, -1.0]) / 2.0]

    kernels, biases = [], []
    # 24 luminance edges: 12 orientations x 2 signs
    for k in range(12):
        t = np.pi * k / 12
        e = np.cos(t) * sx + np.sin(t) * sy
        for sign in (1.0, -1.0):
            kernels.append(sign * lum[:, None, None] * e)
            biases.append(0.0)
    # 16 bars / blobs: 4 orientations x 2 signs, plus 8 centre-surround
    for k in range(4):
        b = bar if k % 2 == 0 else bar.T
        if k >= 2:
            b = np.array([[-1, -1, 2], [-1, 2, -1], [2, -1, -1]], dtype=np.float64) / 6.0
            if k == 3:
                b = b[:, ::-1]
        for sign in (1.0, -1.0):
            kernels.append(sign * lum[:, None, None] * b)
            biases.append(0.0)
    for sign in (1.0, -1.0):
        for scale in (1.0, 0.75, 0.5, 0.25):
            kernels.append(sign * scale * lum[:, None, None] * lap)
            biases.append(0.0)
    # 16 colour-opponent edges: 2 opponents x 4 orientations x 2 signs
    for o in opp:
        for k in range(4):
            t = np.pi * k / 4
            e = np.cos(t) * sx + np.sin(t) * sy
            for sign in (1.0, -1.0):
                kernels.append(sign * o[:, None, None] * e)
                biases.append(0.0)
    # 8 weak colour detectors (non-zero mean)
    colours = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (0, 1, 1), (1, 0, 1), (1, 1, 1), (-1, -1, -1)]
    for c in colours:
        v = np.array(c, dtype=np.float64)
        v = v / np.linalg.norm(v)
        kernels.append(0.05 * v[:, None, None] * np.ones((3, 3)))
        biases.append(-0.05)
    w = np.stack(kernels).astype(np.float32)
    assert w.shape == (64, 3, 3, 3)
    return w, np.asarray(biases, dtype=np.float32)


def surrogate_weights(seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    w1, b1 = _first_layer_bank()
    arrays["conv1_1.weight"], arrays["conv1_1.bias"] = w1, b1
    for name, cin, cout in VGG19_CONVS[1:]:
        std = np.sqrt(2.0 / (cin * 9))
        arrays[f"{name}.weight"] = rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(np.float32)
        arrays[f"{name}.bias"] = np.zeros(cout, dtype=np.float32)
    return arrays


def write_surrogate(path, seed: int = 0) -> str:
    return save_weights(path, surrogate_weights(seed), source=f"surrogate:seed={seed}")
