"""Per-style training of the transformation network over an image corpus."""
from __future__ import annotations

import hashlib
import json
import logging
import queue
import sys
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import jsonschema
import numpy as np
import torch
from PIL import Image

from .errors import TrainingError
from .images import RASTER_SUFFIXES, read_image, split_alpha, to_tensor
from .loss_network import load_weights
from .losses import TERMS, LossWeights, compute_style_targets, total_loss
from .transformer import (
    Manifest,
    TransformerCheckpoint,
    init_transformer,
    load_checkpoint,
    save_checkpoint,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

__all__ = [
    "CONFIG_SCHEMA",
    "TrainingConfig",
    "TrainingReport",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "TransformerCheckpoint",
    "moving_average",
]

_weights_table = {
    "type": "object",
    "properties": {
        "content": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "texture": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "structure": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "tv": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "training config",
    "type": "object",
    "properties": {
        "style": {"type": "string"},
        "corpus": {"type": "string"},
        "vgg_weights": {"type": "string"},
        "out_dir": {"type": "string"},
        "crop_size": {"type": "integer", "minimum": 16, "multipleOf": 4},
        "batch_size": {"type": "integer", "minimum": 1},
        "optimizer": {"enum": ["adam"]},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "max_steps": {"type": ["integer", "null"], "minimum": 0},
        "max_seconds": {"type": ["number", "null"], "minimum": 0},
        "checkpoint_every_steps": {"type": ["integer", "null"], "minimum": 1},
        "checkpoint_every_seconds": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "first_checkpoint_seconds": {"type": "number", "exclusiveMinimum": 0, "maximum": 60},
        "seed": {"type": "integer"},
        "precision": {"enum": ["float32", "float64"]},
        "style_size": {"type": ["integer", "null"], "minimum": 16},
        "prefetch": {"type": "integer", "minimum": 0},
        "deterministic": {"type": "boolean"},
        "weights": _weights_table,
        "manifest": {
            "type": "object",
            "properties": {
                "widths": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3, "maxItems": 3},
                "residual_blocks": {"type": "integer", "minimum": 0},
                "outer_kernel": {"type": "integer"},
                "inner_kernel": {"type": "integer"},
                "upsample": {"enum": ["nearest"]},
            },
            "additionalProperties": False,
        },
    },
    "required": ["style", "corpus", "vgg_weights", "out_dir"],
    "additionalProperties": False,
}


@dataclass
class TrainingConfig:
    style: str
    corpus: str
    vgg_weights: str
    out_dir: str
    crop_size: int = 256
    batch_size: int = 1
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    max_steps: int | None = 40000
    max_seconds: float | None = 36000.0  # wall-clock budget; whichever limit hits first wins
    checkpoint_every_steps: int | None = 1000
    checkpoint_every_seconds: float | None = 600.0
    first_checkpoint_seconds: float = 30.0
    seed: int = 0
    precision: str = "float32"
    style_size: int | None = None
    prefetch: int = 0
    deterministic: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    manifest: Manifest = field(default_factory=Manifest)

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights.from_dict(self.weights)
        if isinstance(self.manifest, dict):
            self.manifest = Manifest.from_dict({**Manifest().to_dict(), **self.manifest})
        jsonschema.validate(self.to_dict(), CONFIG_SCHEMA)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        d["manifest"] = self.manifest.to_dict()
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @property
    def dtype(self) -> torch.dtype:
        return torch.float64 if self.precision == "float64" else torch.float32

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainingConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        jsonschema.validate(data, CONFIG_SCHEMA)
        return cls(**data)


@dataclass
class TrainingReport:
    steps: list[dict] = field(default_factory=list)
    checkpoints: list[dict] = field(default_factory=list)
    throughput: dict = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    def series(self, term: str = "total") -> list[float]:
        return [s[term] for s in self.steps]

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path


def moving_average(values, window: int = 50) -> np.ndarray:
    """Trailing mean: entry ``t`` averages ``values[max(0, t-window+1) : t+1]``."""
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(len(v))
    lo = np.maximum(0, idx - window + 1)
    return (c[idx + 1] - c[lo]) / (idx + 1 - lo)


def list_corpus(corpus) -> list[Path]:
    root = Path(corpus)
    if not root.is_dir():
        raise TrainingError(f"corpus directory {root} does not exist")
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in RASTER_SUFFIXES)
    if not files:
        raise TrainingError(f"corpus directory {root} contains no images")
    return files


def resize_and_crop(rgb: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Resize so the shorter side equals ``size``, then take a random ``size x size`` crop."""
    h, w = rgb.shape[:2]
    scale = size / min(h, w)
    nh, nw = max(size, round(h * scale)), max(size, round(w * scale))
    if (nh, nw) != (h, w):
        im = Image.fromarray(np.clip(np.rint(rgb * 255), 0, 255).astype(np.uint8))
        rgb = np.asarray(im.resize((nw, nh), Image.BICUBIC), dtype=np.float32) / 255.0
    top = int(rng.integers(0, nh - size + 1))
    left = int(rng.integers(0, nw - size + 1))
    return np.ascontiguousarray(rgb[top : top + size, left : left + size])


def _samples(files: list[Path], cfg: TrainingConfig, skipped: list[str]) -> Iterator[tuple[str, np.ndarray]]:
    """Endless, seed-determined stream of cropped corpus images."""
    good = list(files)
    epoch = 0
    draw = 0
    while good:
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(good))
        for i in [good[j] for j in order]:
            try:
                rgb, _ = split_alpha(read_image(i))
            except Exception as exc:  # noqa: BLE001 - any decode failure skips the file
                log.warning("skipping unreadable corpus file %s: %s", i, exc)
                skipped.append(str(i))
                good.remove(i)
                continue
            rng = np.random.default_rng([cfg.seed, 1_000_003, draw])
            draw += 1
            yield str(i), resize_and_crop(rgb, cfg.crop_size, rng)
        epoch += 1
    raise TrainingError(f"no readable images in corpus {cfg.corpus} ({len(skipped)} skipped)")


def _prefetched(it: Iterator, depth: int) -> Iterator:
    """Run ``it`` on a background thread through a bounded queue."""
    q: queue.Queue = queue.Queue(maxsize=depth)
    stop = threading.Event()
    done = object()

    def worker():
        try:
            for item in it:
                while not stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            q.put(done)
        except BaseException as exc:  # noqa: BLE001 - re-raised on the consumer side
            q.put(exc)

    t = threading.Thread(target=worker, daemon=True)
    t.start()
    try:
        while True:
            item = q.get()
            if item is done:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()


def _load_style(cfg: TrainingConfig) -> torch.Tensor:
    rgb, _ = split_alpha(read_image(cfg.style))
    if cfg.style_size:
        h, w = rgb.shape[:2]
        s = cfg.style_size / min(h, w)
        im = Image.fromarray(np.clip(np.rint(rgb * 255), 0, 255).astype(np.uint8))
        rgb = np.asarray(im.resize((max(1, round(w * s)), max(1, round(h * s))), Image.BICUBIC), dtype=np.float32) / 255.0
    return to_tensor(rgb)


def train(cfg: TrainingConfig, progress=None) -> TrainingReport:
    """Train one transformation network for ``cfg.style``.

    Checkpoints go to ``cfg.out_dir`` (step 0 immediately, one more once
    ``first_checkpoint_seconds`` have elapsed, then on the step/second
    cadence and at the end). Every step is appended to
    ``out_dir/train_log.jsonl``. ``progress`` is called as
    ``progress(step, record)`` after each step.
    """
    files = list_corpus(cfg.corpus)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dtype = cfg.dtype

    net = load_weights(cfg.vgg_weights).to(dtype)
    style = _load_style(cfg)
    style_id = Path(cfg.style).stem
    targets = compute_style_targets(net, style, cfg.weights, style_id=style_id)
    targets.save(out / "style_targets.bin")

    torch.manual_seed(cfg.seed)
    model = init_transformer(cfg.manifest, cfg.seed)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    config_digest = cfg.digest()

    report = TrainingReport()
    start = time.perf_counter()
    log_path = out / "train_log.jsonl"

    def checkpoint(step: int):
        elapsed = time.perf_counter() - start
        path = out / f"step_{step:07d}.ckpt"
        digest = save_checkpoint(path, model, style_id=style_id, step=step, elapsed=elapsed,
                                 config_digest=config_digest)
        report.checkpoints.append({"step": step, "path": str(path), "elapsed": elapsed, "digest": digest,
                                   "timestamp": time.time()})
        log.info("checkpoint step %d -> %s", step, path)

    model.to(dtype)
    checkpoint(0)
    last_ckpt_time = 0.0
    early_done = False

    stream = _samples(files, cfg, report.skipped)
    if cfg.prefetch > 0 and not cfg.deterministic:
        stream = _prefetched(stream, cfg.prefetch)

    step = 0
    with log_path.open("a") as logf:
        while True:
            elapsed = time.perf_counter() - start
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
            if cfg.max_seconds is not None and elapsed >= cfg.max_seconds:
                break

            opt.zero_grad(set_to_none=True)
            sums = dict.fromkeys(("total",) + TERMS, 0.0)
            names = []
            for _ in range(cfg.batch_size):
                name, crop = next(stream)
                names.append(name)
                x = to_tensor(crop, dtype)
                y = model(x)
                tot, parts = total_loss(x, targets, y, net, cfg.weights)
                if not torch.isfinite(tot):
                    dump = {"step": step, "images": names, "terms": {k: v.item() for k, v in parts.items()},
                            "total": tot.item()}
                    dump_path = out / f"nonfinite_step_{step}.json"
                    dump_path.write_text(json.dumps(dump, indent=1))
                    raise TrainingError(f"non-finite loss at step {step}; diagnostics written to {dump_path}")
                tot.backward()
                sums["total"] += tot.item()
                for k, v in parts.items():
                    sums[k] += v.item()
            opt.step()
            step += 1

            elapsed = time.perf_counter() - start
            record = {"step": step, "elapsed": elapsed, **sums, "images": names}
            report.steps.append(record)
            logf.write(json.dumps(record) + "\n")
            logf.flush()
            if progress is not None:
                progress(step, record)

            due = False
            if not early_done and elapsed >= cfg.first_checkpoint_seconds:
                due = early_done = True
            if cfg.checkpoint_every_steps and step % cfg.checkpoint_every_steps == 0:
                due = True
            if cfg.checkpoint_every_seconds and elapsed - last_ckpt_time >= cfg.checkpoint_every_seconds:
                due = True
            if due:
                checkpoint(step)
                last_ckpt_time = elapsed

    if step > 0 and report.checkpoints[-1]["step"] != step:
        checkpoint(step)

    total_time = time.perf_counter() - start
    px = cfg.crop_size * cfg.crop_size * cfg.batch_size
    report.throughput = {
        "steps": step,
        "seconds": total_time,
        "steps_per_second": step / total_time if total_time > 0 else 0.0,
        "pixels_per_second": step * px / total_time if total_time > 0 else 0.0,
    }
    report.save(out / "report.json")
    return report
