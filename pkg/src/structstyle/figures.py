"""Matplotlib renderings written next to the JSON/JSONL reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

TERM_COLOURS = {"total": "k", "content": "tab:blue", "texture": "tab:orange", "structure": "tab:green", "tv": "tab:red"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def loss_curves(steps: list[dict], path, window: int = 50, title: str = "training loss") -> Path:
    from .training import moving_average

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if steps:
        x = np.array([s["step"] for s in steps])
        for term, colour in TERM_COLOURS.items():
            y = np.array([s[term] for s in steps], dtype=np.float64)
            if not np.any(y > 0):
                continue
            ax.plot(x, y, color=colour, alpha=0.25, lw=0.8)
            ax.plot(x, moving_average(y, window), color=colour, lw=1.5, label=term)
        ax.set_yscale("log")
        ax.legend(fontsize=8)
    ax.set_xlabel("step")
    ax.set_ylabel("weighted loss")
    ax.set_title(title)
    return _save(fig, path)


def trajectory(losses: list[float], path, title: str = "pixel optimisation") -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(np.arange(len(losses)), losses, "k-")
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("total loss")
    ax.set_title(title)
    return _save(fig, path)


def benchmark_chart(rows: list[dict], path) -> Path:
    labels = [f"{r['width']}x{r['height']}" for r in rows]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8.0, 3.4))
    a1.bar(labels, [r["mean_ms"] for r in rows], yerr=[r["std_ms"] for r in rows], color="tab:gray", capsize=4)
    a1.set_ylabel("forward time (ms)")
    a2.bar(labels, [r["per_pixel_us"] for r in rows], color="tab:blue")
    a2.set_ylabel("time per pixel (us)")
    fig.suptitle("inference latency")
    return _save(fig, path)


def activation_maps(maps: dict[str, np.ndarray], out_dir, image: np.ndarray | None = None,
                    stem: str = "activations") -> list[Path]:
    """One PNG per layer plus an overview panel."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, m in maps.items():
        p = out_dir / f"{stem}_{name}.png"
        plt.imsave(p, m, cmap="magma")
        written.append(p)
    n = len(maps) + (image is not None)
    fig, axes = plt.subplots(1, n, figsize=(3.0 * n, 3.2), squeeze=False)
    axes = list(axes[0])
    if image is not None:
        axes[0].imshow(np.clip(image[..., :3], 0, 1))
        axes[0].set_title("input")
        axes = axes[1:]
    for ax, (name, m) in zip(axes, maps.items()):
        ax.imshow(m, cmap="magma")
        ax.set_title(f"{name} ({m.shape[0]}x{m.shape[1]})")
    for ax in fig.axes:
        ax.set_axis_off()
    written.append(_save(fig, out_dir / f"{stem}_overview.png"))
    return written
