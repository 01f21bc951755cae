"""Restyle a directory of app graphical assets, keeping transparency masks and layout."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .container import atomic_write_bytes
from .errors import StyleError
from .images import RASTER_SUFFIXES, read_image, split_alpha, write_image
from .stylizer import stylize

log = logging.getLogger(__name__)

MIN_ASSET_SIZE = 32
NEUTRAL_GRAY = 0.5


@dataclass
class AssetEntry:
    path: str
    status: str  # restyled | copied | failed
    reason: str = ""
    input_digest: str = ""
    output_digest: str = ""
    width: int | None = None
    height: int | None = None
    has_alpha: bool | None = None


@dataclass
class AssetReport:
    entries: list[AssetEntry] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        out = {"restyled": 0, "copied": 0, "failed": 0}
        for e in self.entries:
            out[e.status] += 1
        out["total"] = len(self.entries)
        return out

    def to_dict(self) -> dict:
        return {"entries": [asdict(e) for e in self.entries], "counts": self.counts}

    def write_jsonl(self, path) -> Path:
        lines = [json.dumps({"record": "file", **asdict(e)}) for e in self.entries]
        lines.append(json.dumps({"record": "summary", **self.counts}))
        return atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_copy(src: Path, dst: Path) -> None:
    dst.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=dst.parent, prefix=f".{dst.name}.", suffix=".tmp")
    os.close(fd)
    try:
        shutil.copyfile(src, tmp)
        os.replace(tmp, dst)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _upscale_factor(h: int, w: int, min_size: int) -> int:
    f = 1
    while min(h, w) * f < min_size:
        f *= 2
    return f


def restyle_image(ckpt, img: np.ndarray, min_size: int = MIN_ASSET_SIZE) -> np.ndarray:
    """Stylize one asset; the original alpha is copied back unchanged.

    Semi-transparent pixels are composited over neutral gray first so the
    network never sees the arbitrary colour stored under zero alpha. Assets
    smaller than ``min_size`` are upscaled by a power of two (nearest) and
    block-averaged back afterwards.
    """
    rgb, alpha = split_alpha(img)
    if alpha is not None:
        a = alpha[..., None]
        rgb = rgb * a + NEUTRAL_GRAY * (1.0 - a)
    h, w = rgb.shape[:2]
    f = _upscale_factor(h, w, min_size)
    if f > 1:
        rgb = np.repeat(np.repeat(rgb, f, axis=0), f, axis=1)
    out = stylize(ckpt, np.ascontiguousarray(rgb, dtype=np.float32))
    if f > 1:
        out = out.reshape(h, f, w, f, 3).mean(axis=(1, 3))
    out = out.astype(np.float32)
    if alpha is None:
        return out
    return np.concatenate([out, alpha[..., None]], axis=2)


def _process(ckpt, src: Path, dst: Path, rel: str, min_size: int) -> AssetEntry:
    entry = AssetEntry(path=rel, status="copied", input_digest=_sha256(src))
    if src.suffix.lower() in RASTER_SUFFIXES:
        try:
            img = read_image(src)
            entry.height, entry.width = img.shape[:2]
            entry.has_alpha = img.shape[2] == 4
            out = restyle_image(ckpt, img, min_size)
            dst.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=dst.parent, prefix=f".{dst.stem}.", suffix=dst.suffix)
            os.close(fd)
            try:
                write_image(tmp, out)
                os.replace(tmp, dst)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
            entry.status = "restyled"
        except Exception as exc:  # noqa: BLE001 - a bad asset must not stop the run
            log.warning("failed to restyle %s: %s", rel, exc)
            entry.status = "failed"
            entry.reason = f"{type(exc).__name__}: {exc}"
            _atomic_copy(src, dst)
    else:
        _atomic_copy(src, dst)
    entry.output_digest = _sha256(dst)
    return entry


def restyle_assets(in_dir, out_dir, ckpt, overwrite: bool = False, workers: int = 1,
                   min_size: int = MIN_ASSET_SIZE) -> AssetReport:
    """Mirror ``in_dir`` into ``out_dir``, restyling rasters and copying everything else.

    Unreadable rasters are recorded as failed and copied through unchanged so
    the output tree still mirrors the input tree.
    """
    src_root, dst_root = Path(in_dir), Path(out_dir)
    if not src_root.is_dir():
        raise StyleError(f"input directory {src_root} does not exist")
    if dst_root.exists() and any(dst_root.iterdir()) and not overwrite:
        raise StyleError(f"output directory {dst_root} is not empty (pass overwrite to replace)")
    if dst_root.resolve() == src_root.resolve() or src_root.resolve() in dst_root.resolve().parents:
        raise StyleError("output directory must not be inside the input directory")
    dst_root.mkdir(parents=True, exist_ok=True)

    files = sorted(p for p in src_root.rglob("*") if p.is_file())
    for d in sorted(p for p in src_root.rglob("*") if p.is_dir()):
        (dst_root / d.relative_to(src_root)).mkdir(parents=True, exist_ok=True)

    def job(p: Path) -> AssetEntry:
        rel = p.relative_to(src_root).as_posix()
        return _process(ckpt, p, dst_root / rel, rel, min_size)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(job, files))
    else:
        entries = [job(p) for p in files]
    return AssetReport(sorted(entries, key=lambda e: e.path))
