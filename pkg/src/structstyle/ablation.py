"""Equal-budget structure-weight ablation: train at several structure scales, score held-out outputs."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import images, synthetic
from .loss_network import load_weights
from .losses import LossWeights, compute_style_targets, structure_loss
from .stylizer import stylize
from .training import TrainingConfig, train
from .transformer import Manifest, load_checkpoint


@dataclass
class AblationResult:
    scales: list[float]
    per_image: dict[str, list[float]]  # str(scale) -> structure loss per held-out image
    ordered_fraction: float
    mean_reduction: float  # 1 - mean(full) / mean(zero)
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def score_structure(ckpt, held_out: list[np.ndarray], net, targets, w: LossWeights) -> list[float]:
    """Structure loss (under ``w``) of each stylized held-out image against ``targets``."""
    vals = []
    for img in held_out:
        y = images.to_tensor(stylize(ckpt, img))
        with torch.no_grad():
            feats = net.features(y, w.style_layers())
            vals.append(float(structure_loss(targets, feats, w)))
    return vals


def run_ablation(
    workdir,
    vgg_weights,
    scales=(0.0, 0.5, 1.0),
    size: int = 64,
    steps: int = 400,
    learning_rate: float = 1e-3,
    batch_size: int = 1,
    corpus_size: int = 16,
    held_out: int = 20,
    seed: int = 0,
    manifest: Manifest = Manifest(),
    weights: LossWeights | None = None,
) -> AblationResult:
    """Train one model per structure scale on the same synthetic corpus and seed.

    Held-out GUI-like images are stylized by each model and scored with the
    full structure weights against the style's targets.
    """
    work = Path(workdir)
    w = weights or LossWeights()
    corpus = work / "corpus"
    synthetic.write_corpus(corpus, n=corpus_size, size=size, seed=seed + 1)
    style_path = images.write_image(work / "style.png", synthetic.style_image(seed, size))

    net = load_weights(vgg_weights)
    targets = compute_style_targets(net, images.read_image(style_path), w)
    rng = np.random.default_rng(seed + 10_000)
    held = [synthetic.gui_image(rng, size, size) for _ in range(held_out)]

    per_image = {}
    for s in scales:
        cfg = TrainingConfig(
            style=str(style_path), corpus=str(corpus), vgg_weights=str(vgg_weights), out_dir=str(work / f"scale_{s:g}"),
            crop_size=size, max_steps=steps, max_seconds=None, learning_rate=learning_rate, batch_size=batch_size, seed=seed,
            checkpoint_every_steps=None, checkpoint_every_seconds=None, weights=w.scale_structure(s),
            manifest=manifest,
        )
        report = train(cfg)
        ckpt = load_checkpoint(report.checkpoints[-1]["path"])
        per_image[f"{s:g}"] = score_structure(ckpt, held, net, targets, w)

    ordered = np.ones(held_out, dtype=bool)
    keys = [f"{s:g}" for s in sorted(scales, reverse=True)]
    for hi, lo in zip(keys, keys[1:]):
        ordered &= np.asarray(per_image[hi]) <= np.asarray(per_image[lo])
    full, zero = np.mean(per_image[keys[0]]), np.mean(per_image[keys[-1]])
    result = AblationResult(
        scales=list(scales), per_image=per_image, ordered_fraction=float(ordered.mean()),
        mean_reduction=float(1.0 - full / zero),
        settings={"size": size, "steps": steps, "learning_rate": learning_rate, "batch_size": batch_size, "corpus_size": corpus_size,
                  "held_out": held_out, "seed": seed, "manifest": manifest.to_dict()},
    )
    (work / "ablation.json").write_text(json.dumps(result.to_dict(), indent=1))
    return result
