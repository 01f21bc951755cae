"""Feed-forward image transformation network and its checkpoint container.

Encoder (9x9 conv, two stride-2 3x3 convs) -> residual blocks -> decoder
(nearest-neighbour 2x upsample + 3x3 conv, twice) -> 9x9 conv to RGB.
Instance norm follows every conv but the last; padding is reflective; a
sigmoid bounds the output to [0, 1]. Upsampling by duplication followed by a
convolution avoids the checkerboard pattern transposed convolutions leave.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import container
from .errors import ManifestMismatchError, ShapeMismatchError

CHECKPOINT_KIND = "transformer-checkpoint"
DOWNSAMPLE = 4
MIN_SIZE = 16


@dataclass(frozen=True)
class Manifest:
    widths: tuple[int, int, int] = (32, 64, 128)
    residual_blocks: int = 5
    outer_kernel: int = 9
    inner_kernel: int = 3
    upsample: str = "nearest"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) != 3 or min(self.widths) < 1:
            raise ValueError(f"widths must be three positive channel counts, got {self.widths}")
        if self.residual_blocks < 0:
            raise ValueError("residual_blocks must be >= 0")
        for k in (self.outer_kernel, self.inner_kernel):
            if k < 1 or k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd and positive, got {k}")
        if self.upsample not in ("nearest",):
            raise ValueError(f"unsupported upsample mode {self.upsample!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        return cls(**{**d, "widths": tuple(d["widths"])})

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


class ConvLayer(nn.Module):
    def __init__(self, cin, cout, kernel, stride=1, upsample=False, norm=True, relu=True):
        super().__init__()
        self.upsample = upsample
        self.conv = nn.Conv2d(cin, cout, kernel, stride=stride, padding=kernel // 2, padding_mode="reflect")
        self.norm = nn.InstanceNorm2d(cout, affine=True) if norm else None
        self.relu = relu

    def forward(self, x):
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        return F.relu(x) if self.relu else x


class ResidualBlock(nn.Module):
    def __init__(self, channels, kernel):
        super().__init__()
        self.conv1 = ConvLayer(channels, channels, kernel)
        self.conv2 = ConvLayer(channels, channels, kernel, relu=False)

    def forward(self, x):
        return x + self.conv2(self.conv1(x))


class TransformerNet(nn.Module):
    def __init__(self, manifest: Manifest = Manifest()):
        super().__init__()
        self.manifest = manifest
        w1, w2, w3 = manifest.widths
        ko, ki = manifest.outer_kernel, manifest.inner_kernel
        self.encoder = nn.Sequential(
            ConvLayer(3, w1, ko),
            ConvLayer(w1, w2, ki, stride=2),
            ConvLayer(w2, w3, ki, stride=2),
        )
        self.residual = nn.Sequential(*[ResidualBlock(w3, ki) for _ in range(manifest.residual_blocks)])
        self.decoder = nn.Sequential(
            ConvLayer(w3, w2, ki, upsample=True),
            ConvLayer(w2, w1, ki, upsample=True),
            ConvLayer(w1, 3, ko, norm=False, relu=False),
        )

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        """Map a ``B x 3 x H x W`` image in [0, 1] to a styled image of the same shape."""
        if img.dim() != 4 or img.shape[1] != 3:
            raise ShapeMismatchError(f"expected B x 3 x H x W input, got {tuple(img.shape)}")
        h, w = img.shape[2:]
        if min(h, w) < MIN_SIZE:
            raise ShapeMismatchError(f"input {h}x{w} is below the minimum size {MIN_SIZE}")
        ph, pw = (-h) % DOWNSAMPLE, (-w) % DOWNSAMPLE
        x = img
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="reflect")
        x = self.decoder(self.residual(self.encoder(x)))
        return torch.sigmoid(x[:, :, :h, :w])


def param_count(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def init_transformer(manifest: Manifest = Manifest(), seed: int = 0) -> TransformerNet:
    """Deterministically initialised network: He-normal convs, unit/zero instance norm."""
    net = TransformerNet(manifest)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in net.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu", generator=gen)
                m.weight.mul_(0.5)
                m.bias.zero_()
            elif isinstance(m, nn.InstanceNorm2d):
                m.weight.fill_(1.0)
                m.bias.zero_()
    return net


@dataclass
class TransformerCheckpoint:
    model: TransformerNet
    style_id: str = ""
    step: int = 0
    elapsed: float = 0.0
    config_digest: str = ""
    digest: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def manifest(self) -> Manifest:
        return self.model.manifest


def save_checkpoint(path, model: TransformerNet, style_id: str = "", step: int = 0, elapsed: float = 0.0,
                    config_digest: str = "", extra: dict | None = None) -> str:
    arrays = {}
    for name, t in model.state_dict().items():
        arrays[name] = t.detach().cpu().to(torch.float32).numpy()
    meta = {
        "manifest": model.manifest.to_dict(),
        "manifest_digest": model.manifest.digest(),
        "style_id": style_id,
        "step": int(step),
        "elapsed": float(elapsed),
        "config_digest": config_digest,
        "extra": extra or {},
    }
    return container.write(path, CHECKPOINT_KIND, arrays, meta)


def load_checkpoint(path, expected_manifest: Manifest | None = None) -> TransformerCheckpoint:
    c = container.read(path, expected_kind=CHECKPOINT_KIND)
    meta = c.meta
    manifest = Manifest.from_dict(meta["manifest"])
    if expected_manifest is not None and manifest != expected_manifest:
        raise ManifestMismatchError(
            f"checkpoint architecture {manifest.to_dict()} differs from expected {expected_manifest.to_dict()}"
        )
    model = TransformerNet(manifest)
    state = model.state_dict()
    if set(state) != set(c.arrays):
        missing = sorted(set(state) - set(c.arrays))
        unexpected = sorted(set(c.arrays) - set(state))
        raise ManifestMismatchError(f"checkpoint parameters do not match manifest (missing {missing[:3]}, unexpected {unexpected[:3]})")
    loaded = {}
    for name, ref in state.items():
        arr = c.arrays[name]
        if tuple(arr.shape) != tuple(ref.shape):
            raise ManifestMismatchError(f"{name}: stored shape {arr.shape} vs manifest {tuple(ref.shape)}")
        if not np.isfinite(arr).all():
            raise ManifestMismatchError(f"{name} contains non-finite values")
        loaded[name] = torch.from_numpy(arr.astype(np.float32))
    model.load_state_dict(loaded)
    model.eval()
    return TransformerCheckpoint(model, meta.get("style_id", ""), meta.get("step", 0), meta.get("elapsed", 0.0),
                                 meta.get("config_digest", ""), c.digest, meta.get("extra", {}))
