"""Content, texture, structure and total-variation losses and their weighted total.

All reductions are raw sums. The weights are the effective per-layer
products, so there is no separate global multiplier per term.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import torch

from . import container
from .errors import ContainerError, ShapeMismatchError
from .images import split_alpha, to_tensor
from .loss_network import LAYER_CHANNELS, LossNetwork, extract_features, layer_index, preprocess
from .tensor_math import FeatureMap, cross_gram, gram

TEXTURE_LAYERS = ("relu1_1", "relu2_1", "relu3_1", "relu4_1")
TARGETS_KIND = "style-targets"

Pair = tuple[str, str]


def _default_content() -> dict[str, float]:
    return {"relu4_1": 5.6}


def _default_texture() -> dict[str, float]:
    return {"relu1_1": 1.1, "relu2_1": 1.3, "relu3_1": 0.5, "relu4_1": 1.0}


def _default_structure() -> dict[Pair, float]:
    return {
        ("relu1_1", "relu1_2"): 1.5,
        ("relu1_1", "relu2_1"): 1.5,
        ("relu2_1", "relu2_2"): 1.5,
        ("relu2_1", "relu3_1"): 1.5,
    }


def pair_key(pair: Pair) -> str:
    return f"{pair[0]},{pair[1]}"


def parse_pair(key: str) -> Pair:
    a, _, b = key.replace("x", ",").replace("×", ",").partition(",")
    return a.strip(), b.strip()


@dataclass
class LossWeights:
    """Per-layer loss weights. Defaults are the tuned values used for GUI restyling."""

    content: dict[str, float] = field(default_factory=_default_content)
    texture: dict[str, float] = field(default_factory=_default_texture)
    structure: dict[Pair, float] = field(default_factory=_default_structure)
    tv: float = 150.0

    def __post_init__(self):
        self.structure = {tuple(k) if not isinstance(k, str) else parse_pair(k): float(v) for k, v in self.structure.items()}
        for name, table in (("content", self.content), ("texture", self.texture)):
            for layer, v in table.items():
                layer_index(layer)
                if v < 0:
                    raise ValueError(f"{name} weight for {layer} is negative")
        for layer in self.texture:
            if layer not in TEXTURE_LAYERS:
                raise ValueError(f"texture layer {layer} not in {TEXTURE_LAYERS}")
        for (lo, hi), v in self.structure.items():
            if layer_index(lo) >= layer_index(hi):
                raise ValueError(f"structure pair ({lo}, {hi}) must be ordered shallow -> deep")
            if LAYER_CHANNELS[hi] % LAYER_CHANNELS[lo]:
                raise ValueError(f"channel count of {hi} is not a multiple of {lo}")
            if v < 0:
                raise ValueError(f"structure weight for ({lo}, {hi}) is negative")
        if self.tv < 0:
            raise ValueError("tv weight is negative")

    def layers(self) -> set[str]:
        names = set(self.content) | set(self.texture)
        for lo, hi in self.structure:
            names.update((lo, hi))
        return names

    def style_layers(self) -> set[str]:
        names = set(self.texture)
        for lo, hi in self.structure:
            names.update((lo, hi))
        return names

    def scale_structure(self, factor: float) -> "LossWeights":
        return LossWeights(dict(self.content), dict(self.texture),
                           {k: v * factor for k, v in self.structure.items()}, self.tv)

    def to_dict(self) -> dict:
        return {
            "content": dict(self.content),
            "texture": dict(self.texture),
            "structure": {pair_key(k): v for k, v in self.structure.items()},
            "tv": self.tv,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LossWeights":
        base = cls()
        return cls(
            content={k: float(v) for k, v in d.get("content", base.content).items()},
            texture={k: float(v) for k, v in d.get("texture", base.texture).items()},
            structure={parse_pair(k) if isinstance(k, str) else tuple(k): float(v)
                       for k, v in d.get("structure", {pair_key(p): v for p, v in base.structure.items()}).items()},
            tv=float(d.get("tv", base.tv)),
        )


@dataclass
class StyleTargets:
    style_id: str
    grams: dict[str, torch.Tensor]
    cross_grams: dict[Pair, torch.Tensor]
    source_hw: tuple[int, int]
    source_digest: str = ""

    def to(self, dtype: torch.dtype) -> "StyleTargets":
        return StyleTargets(
            self.style_id,
            {k: v.to(dtype) for k, v in self.grams.items()},
            {k: v.to(dtype) for k, v in self.cross_grams.items()},
            self.source_hw,
            self.source_digest,
        )

    def save(self, path) -> str:
        arrays = {f"gram/{k}": v.detach().cpu().numpy() for k, v in self.grams.items()}
        arrays.update({f"cross/{pair_key(k)}": v.detach().cpu().numpy() for k, v in self.cross_grams.items()})
        meta = {"style_id": self.style_id, "source_hw": list(self.source_hw), "source_digest": self.source_digest}
        return container.write(path, TARGETS_KIND, arrays, meta)

    @classmethod
    def load(cls, path) -> "StyleTargets":
        c = container.read(path, expected_kind=TARGETS_KIND)
        grams, crosses = {}, {}
        for name, arr in c.arrays.items():
            group, _, key = name.partition("/")
            t = torch.from_numpy(arr)
            if group == "gram":
                grams[key] = t
            elif group == "cross":
                crosses[parse_pair(key)] = t
            else:
                raise ContainerError(f"unexpected array {name!r} in style targets")
        m = c.meta
        return cls(m["style_id"], grams, crosses, tuple(m["source_hw"]), m.get("source_digest", ""))

    def check_matches(self, w: LossWeights) -> None:
        if set(self.grams) != set(w.texture) or set(self.cross_grams) != set(w.structure):
            raise ShapeMismatchError(
                f"style targets (layers {sorted(self.grams)}, pairs {sorted(self.cross_grams)}) "
                f"do not match weights (layers {sorted(w.texture)}, pairs {sorted(w.structure)})"
            )


def image_digest(img: torch.Tensor) -> str:
    arr = img.detach().cpu().to(torch.float32).contiguous().numpy()
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def compute_style_targets(net: LossNetwork, style, w: LossWeights, style_id: str = "") -> StyleTargets:
    """Gram and cross-Gram matrices of ``style``.

    ``style`` is a ``1 x 3 x H x W`` tensor or an ``H x W x 3|4`` array in ``[0, 1]``
    (alpha is ignored).
    """
    if isinstance(style, np.ndarray):
        style = to_tensor(split_alpha(style)[0])
    with torch.no_grad():
        feats = net.features(style.to(net.dtype), w.style_layers())
        grams = {layer: gram(feats[layer]) for layer in w.texture}
        crosses = {(lo, hi): cross_gram(feats[lo], feats[hi], crop=True) for lo, hi in w.structure}
    digest = image_digest(style)
    return StyleTargets(style_id or digest[:16], grams, crosses, (style.shape[2], style.shape[3]), digest)


def _values(f) -> torch.Tensor:
    return f.values if isinstance(f, FeatureMap) else f


def content_loss(fx, fy) -> torch.Tensor:
    a, b = _values(fx), _values(fy)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"content feature shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).sum()


def _sq_err(target: torch.Tensor, got: torch.Tensor, what: str) -> torch.Tensor:
    if target.shape != got.shape:
        raise ShapeMismatchError(f"{what}: target {tuple(target.shape)} vs generated {tuple(got.shape)}")
    return ((target.to(got.dtype) - got) ** 2).sum()


def texture_loss(targets: StyleTargets, y_feats: Mapping[str, FeatureMap], w: LossWeights) -> torch.Tensor:
    total = None
    for layer, beta in w.texture.items():
        if layer not in y_feats:
            raise KeyError(f"generated features lack texture layer {layer}")
        if layer not in targets.grams:
            raise KeyError(f"style targets lack texture layer {layer}")
        if beta == 0:
            continue
        term = beta * _sq_err(targets.grams[layer], gram(y_feats[layer]), f"gram {layer}")
        total = term if total is None else total + term
    return total if total is not None else _zero_like(y_feats)


def structure_loss(targets: StyleTargets, y_feats: Mapping[str, FeatureMap], w: LossWeights) -> torch.Tensor:
    total = None
    for (lo, hi), gamma in w.structure.items():
        for layer in (lo, hi):
            if layer not in y_feats:
                raise KeyError(f"generated features lack structure layer {layer}")
        if (lo, hi) not in targets.cross_grams:
            raise KeyError(f"style targets lack structure pair {lo} x {hi}")
        if gamma == 0:
            continue
        g = cross_gram(y_feats[lo], y_feats[hi], crop=True)
        term = gamma * _sq_err(targets.cross_grams[(lo, hi)], g, f"cross gram {lo} x {hi}")
        total = term if total is None else total + term
    return total if total is not None else _zero_like(y_feats)


def _zero_like(feats: Mapping[str, FeatureMap]) -> torch.Tensor:
    ref = next(iter(feats.values())).values if feats else torch.zeros(())
    return ref.new_zeros(())


def tv_loss(y: torch.Tensor) -> torch.Tensor:
    """Squared anisotropic total variation over the last two (spatial) axes."""
    if y.dim() < 2:
        raise ShapeMismatchError("tv_loss needs at least a 2-D image")
    dh = y[..., 1:, :] - y[..., :-1, :]
    dw = y[..., :, 1:] - y[..., :, :-1]
    return (dh ** 2).sum() + (dw ** 2).sum()


TERMS = ("content", "texture", "structure", "tv")


def total_loss(
    x: torch.Tensor,
    targets: StyleTargets,
    y: torch.Tensor,
    net: LossNetwork,
    w: LossWeights,
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Weighted total loss of generated image ``y`` for content ``x``.

    Returns ``(total, breakdown)`` where ``breakdown`` maps each term name to
    its weighted value and ``total`` is their sum. Gradients flow to ``y``.
    """
    if x.shape != y.shape:
        raise ShapeMismatchError(f"content {tuple(x.shape)} and generated {tuple(y.shape)} differ in shape")
    dtype = net.dtype
    x, y = x.to(dtype), y.to(dtype)
    if targets.grams and next(iter(targets.grams.values())).dtype != dtype:
        targets = targets.to(dtype)

    y_feats = extract_features(net, preprocess(y, net), w.layers())
    content = None
    if w.content:
        with torch.no_grad():
            x_feats = extract_features(net, preprocess(x, net), w.content.keys())
        for layer, lam in w.content.items():
            term = lam * content_loss(x_feats[layer], y_feats[layer])
            content = term if content is None else content + term
    if content is None:
        content = y.new_zeros(())

    breakdown = {
        "content": content,
        "texture": texture_loss(targets, y_feats, w),
        "structure": structure_loss(targets, y_feats, w),
        "tv": w.tv * tv_loss(y),
    }
    total = breakdown["content"] + breakdown["texture"] + breakdown["structure"] + breakdown["tv"]
    return total, breakdown
