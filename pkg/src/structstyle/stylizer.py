"""Inference, direct pixel optimisation, throughput benchmarking and activation inspection."""
from __future__ import annotations

import logging
import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .errors import ShapeMismatchError, StyleError
from .images import check_rgb, from_tensor, join_alpha, split_alpha, to_tensor
from .loss_network import LossNetwork
from .losses import LossWeights, compute_style_targets, total_loss
from .transformer import MIN_SIZE, TransformerCheckpoint, TransformerNet

log = logging.getLogger(__name__)


def _model(m) -> TransformerNet:
    return m.model if isinstance(m, TransformerCheckpoint) else m


def stylize(ckpt: TransformerCheckpoint | TransformerNet, img: np.ndarray) -> np.ndarray:
    """Run the transformation network on an ``H x W x 3|4`` float image.

    Alpha, when present, bypasses the network and is reattached untouched.
    """
    rgb, alpha = split_alpha(img)
    model = _model(ckpt)
    model.eval()
    with torch.no_grad():
        out = model(to_tensor(np.ascontiguousarray(rgb, dtype=np.float32)))
    return join_alpha(from_tensor(out), alpha)


@dataclass
class OptimizeResult:
    image: np.ndarray
    losses: list[float]
    terms: list[dict]
    updates: int
    rejected: int = 0


def optimize_image(
    content: np.ndarray,
    style: np.ndarray,
    net: LossNetwork,
    w: LossWeights | None = None,
    iters: int = 200,
    step_size: float = 0.02,
    max_halvings: int = 8,
    dtype: torch.dtype | str = torch.float32,
) -> OptimizeResult:
    """Gradient descent on the pixels of ``y`` (initialised from ``content``).

    Steps follow Adam's normalised direction; a step that would raise the
    total loss is halved until it does not (up to ``max_halvings`` times, else
    the step is skipped), so the recorded trajectory never increases.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    w = w or LossWeights()
    if isinstance(dtype, str):
        dtype = {"float32": torch.float32, "float64": torch.float64}[dtype]
    net = net.to(dtype)
    x = to_tensor(split_alpha(content)[0], dtype)
    s = to_tensor(split_alpha(style)[0], dtype)
    targets = compute_style_targets(net, s, w)

    def evaluate(y):
        y = y.detach().requires_grad_(True)
        tot, parts = total_loss(x, targets, y, net, w)
        if not torch.isfinite(tot):
            raise StyleError(f"non-finite loss during optimisation: { {k: v.item() for k, v in parts.items()} }")
        return y, tot, parts

    y, tot, parts = evaluate(x.clone())
    tot.backward()
    grad = y.grad.detach()
    losses = [tot.item()]
    terms = [{k: v.item() for k, v in parts.items()}]
    m = torch.zeros_like(x)
    v = torch.zeros_like(x)
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr = step_size
    rejected = 0
    for t in range(1, iters + 1):
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        direction = (m / (1 - b1**t)) / ((v / (1 - b2**t)).sqrt() + eps)
        trial_lr = lr
        accepted = False
        for _ in range(max_halvings + 1):
            cand = (y.detach() - trial_lr * direction).clamp_(0.0, 1.0)
            cy, ctot, cparts = evaluate(cand)
            if ctot.item() <= losses[-1]:
                accepted = True
                break
            trial_lr /= 2
            rejected += 1
        if accepted:
            ctot.backward()
            y, grad = cy, cy.grad.detach()
            losses.append(ctot.item())
            terms.append({k: v_.item() for k, v_ in cparts.items()})
            lr = min(step_size, trial_lr * 1.5)
        else:
            losses.append(losses[-1])
            terms.append(terms[-1])
            lr = trial_lr
    return OptimizeResult(from_tensor(y), losses, terms, iters, rejected)


@dataclass
class BenchmarkReport:
    rows: list[dict]
    runs: int
    per_pixel_us: float
    hardware: str
    load_seconds: float | None = None
    reference: dict = field(default_factory=lambda: {
        "512x288_ms": 3.02, "1920x1080_ms": 104.02, "per_pixel_us": 0.026,
        "note": "published GPU figures; hardware-dependent, for reference only",
    })

    def to_dict(self) -> dict:
        return asdict(self)


def hardware_descriptor() -> str:
    return (f"{platform.machine()} {platform.processor() or 'cpu'}; {os.cpu_count()} cpus; "
            f"torch {torch.__version__} ({torch.get_num_threads()} threads)")


def benchmark(ckpt, sizes: list[tuple[int, int]], runs: int = 5, seed: int = 0) -> BenchmarkReport:
    """Time forward passes only (one untimed warm-up per size).

    ``sizes`` are ``(width, height)`` pairs.
    """
    if runs < 5:
        raise ValueError("runs must be >= 5")
    model = _model(ckpt)
    model.eval()
    for wdt, hgt in sizes:
        if min(wdt, hgt) < MIN_SIZE:
            raise ShapeMismatchError(f"size {wdt}x{hgt} is below the minimum forward size {MIN_SIZE}")
    gen = torch.Generator().manual_seed(seed)
    rows = []
    with torch.no_grad():
        for wdt, hgt in sizes:
            img = torch.rand(1, 3, hgt, wdt, generator=gen)
            model(img)
            samples = []
            for _ in range(runs):
                t0 = time.perf_counter()
                model(img)
                samples.append(time.perf_counter() - t0)
            ms = np.asarray(samples) * 1e3
            rows.append({
                "width": wdt,
                "height": hgt,
                "mean_ms": float(ms.mean()),
                "std_ms": float(ms.std(ddof=1)),
                "samples_ms": ms.tolist(),
                "per_pixel_us": float(ms.mean() * 1e3 / (wdt * hgt)),
            })
            log.info("benchmark %dx%d: %.2f ms", wdt, hgt, ms.mean())
    total_us = sum(r["mean_ms"] * 1e3 for r in rows)
    total_px = sum(r["width"] * r["height"] for r in rows)
    return BenchmarkReport(rows, runs, total_us / total_px, hardware_descriptor())


def inspect_activations(net: LossNetwork, img, layers=("relu1_1", "relu3_1")) -> dict[str, np.ndarray]:
    """Channel-mean activation magnitude per requested layer, at the layer's own resolution."""
    if isinstance(img, np.ndarray):
        rgb, _ = split_alpha(img)
        check_rgb(rgb)
        img = to_tensor(rgb, net.dtype)
    with torch.no_grad():
        feats = net.features(img, layers)
    return {name: f.as_image().abs().mean(dim=0).cpu().numpy() for name, f in feats.items()}
