"""Procedural images for demos and tests: GUI-like screens, art-like styles, text, asset trees."""
from __future__ import annotations

import json
import string
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont


def _font(size: int):
    return ImageFont.load_default(size=size)


def _rand_colour(rng: np.random.Generator) -> tuple[int, int, int]:
    return tuple(int(c) for c in rng.integers(0, 256, size=3))


def _word(rng: np.random.Generator, lo: int = 3, hi: int = 8) -> str:
    letters = string.ascii_uppercase + string.ascii_lowercase + string.digits
    return "".join(rng.choice(list(letters), size=int(rng.integers(lo, hi + 1))))


def gui_image(rng: np.random.Generator, height: int = 128, width: int = 128) -> np.ndarray:
    """A screen-like image: gradient background, buttons with labels, icons."""
    top, bottom = np.array(_rand_colour(rng)), np.array(_rand_colour(rng))
    ramp = np.linspace(0.0, 1.0, height)[:, None, None]
    bg = ((1 - ramp) * top + ramp * bottom) * np.ones((1, width, 1))
    im = Image.fromarray(bg.astype(np.uint8), "RGB")
    draw = ImageDraw.Draw(im)
    for _ in range(int(rng.integers(2, 6))):
        x0, y0 = int(rng.integers(0, width - 24)), int(rng.integers(0, height - 16))
        x1 = min(width - 1, x0 + int(rng.integers(24, max(25, width // 2))))
        y1 = min(height - 1, y0 + int(rng.integers(12, max(13, height // 4))))
        draw.rounded_rectangle([x0, y0, x1, y1], radius=4, fill=_rand_colour(rng), outline=_rand_colour(rng))
        draw.text((x0 + 3, y0 + 1), _word(rng), fill=_rand_colour(rng), font=_font(max(8, (y1 - y0) * 2 // 3)))
    for _ in range(int(rng.integers(1, 4))):
        cx, cy, r = int(rng.integers(0, width)), int(rng.integers(0, height)), int(rng.integers(4, 16))
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=_rand_colour(rng))
    return np.asarray(im, dtype=np.float32) / 255.0


def style_image(seed: int = 0, size: int = 128) -> np.ndarray:
    """An art-like image with bold outlines, flat colour fields and striped texture."""
    rng = np.random.default_rng(seed)
    palette = [_rand_colour(rng) for _ in range(5)]
    im = Image.new("RGB", (size, size), palette[0])
    draw = ImageDraw.Draw(im)
    for _ in range(10):
        x0, y0 = int(rng.integers(0, size)), int(rng.integers(0, size))
        x1, y1 = x0 + int(rng.integers(size // 8, size // 2)), y0 + int(rng.integers(size // 8, size // 2))
        shape = rng.integers(0, 2)
        box = [x0, y0, x1, y1]
        fill = palette[int(rng.integers(1, 5))]
        if shape == 0:
            draw.rectangle(box, fill=fill, outline=(10, 10, 10), width=3)
        else:
            draw.ellipse(box, fill=fill, outline=(10, 10, 10), width=3)
    arr = np.asarray(im, dtype=np.float32) / 255.0
    yy, xx = np.mgrid[0:size, 0:size]
    stripes = 0.5 + 0.5 * np.sin((xx + yy) * 2 * np.pi / 6.0)
    return np.clip(arr * (0.8 + 0.2 * stripes[..., None]), 0.0, 1.0).astype(np.float32)


def text_image(rng: np.random.Generator, size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Text on a flat background. Returns ``(image, text_mask)``.

    Text and background colours differ by at least 0.5 in luminance.
    """
    while True:
        bg = np.array(_rand_colour(rng), dtype=np.float64)
        fg = np.array(_rand_colour(rng), dtype=np.float64)
        lum = np.array([0.299, 0.587, 0.114])
        if abs((fg - bg) @ lum) >= 0.5 * 255:
            break
    mask_im = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(mask_im)
    lines = int(rng.integers(1, 4))
    fsize = max(10, size // (lines + 1))
    for i in range(lines):
        draw.text((int(rng.integers(0, size // 6)), 2 + i * (size // lines)), _word(rng, 3, 6), fill=255, font=_font(fsize))
    mask = np.asarray(mask_im) >= 128
    soft = np.asarray(mask_im, dtype=np.float64)[..., None] / 255.0
    img = (bg * (1 - soft) + fg * soft) / 255.0
    return img.astype(np.float32), mask


def rgba_icon(rng: np.random.Generator, size: int, kind: str = "shape") -> np.ndarray:
    """RGBA icon. ``kind``: shape (opaque disc, clear corners), soft (graded alpha), clear (all transparent)."""
    colour = np.asarray(_rand_colour(rng), dtype=np.float32) / 255.0
    rgb = np.ones((size, size, 3), dtype=np.float32) * colour
    rgb += rng.uniform(-0.2, 0.2, size=rgb.shape).astype(np.float32)
    rgb = np.clip(rgb, 0.0, 1.0)
    yy, xx = np.mgrid[0:size, 0:size]
    r = np.hypot(yy - (size - 1) / 2, xx - (size - 1) / 2)
    if kind == "shape":
        alpha = (r <= size / 2 - 1).astype(np.float32)
    elif kind == "soft":
        alpha = np.clip(1.0 - r / (size / 2), 0.0, 1.0)
    elif kind == "clear":
        alpha = np.zeros((size, size), dtype=np.float32)
    else:
        raise ValueError(kind)
    alpha = np.rint(alpha * 255) / 255.0
    return np.concatenate([rgb, alpha[..., None].astype(np.float32)], axis=2)


def write_corpus(root, n: int = 8, size: int = 128, seed: int = 0) -> list[Path]:
    from .images import write_image

    rng = np.random.default_rng(seed)
    root = Path(root)
    return [write_image(root / f"screen_{i:03d}.png", gui_image(rng, size, size)) for i in range(n)]


def write_asset_tree(root, n_files: int = 50, seed: int = 0) -> list[Path]:
    """A mixed asset directory: RGBA/RGB PNGs, JPEGs, tiny icons, and non-raster files in nested folders."""
    from .images import write_image

    rng = np.random.default_rng(seed)
    root = Path(root)
    dirs = ["", "drawable", "drawable/hdpi", "drawable/xhdpi", "raw", "values", "fonts"]
    paths = []
    for i in range(n_files):
        d = root / dirs[i % len(dirs)]
        kind = i % 7
        if kind == 0:
            p = write_image(d / f"icon_{i:02d}.png", rgba_icon(rng, int(rng.choice([16, 24, 48])), "shape"))
        elif kind == 1:
            p = write_image(d / f"glow_{i:02d}.png", rgba_icon(rng, int(rng.choice([32, 40])), "soft"))
        elif kind == 2:
            p = write_image(d / f"blank_{i:02d}.png", rgba_icon(rng, 16, "clear"))
        elif kind == 3:
            h, w = int(rng.choice([48, 64])), int(rng.choice([64, 80]))
            p = write_image(d / f"card_{i:02d}.png", gui_image(rng, h, w))
        elif kind == 4:
            p = write_image(d / f"photo_{i:02d}.jpg", gui_image(rng, 64, 64))
        elif kind == 5:
            p = d / f"strings_{i:02d}.xml"
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(f'<resources><string name="s{i}">{_word(rng)}</string></resources>\n')
        else:
            p = d / f"data_{i:02d}.bin"
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(rng.integers(0, 256, size=int(rng.integers(10, 200)), dtype=np.uint8).tobytes())
        paths.append(p)
    meta = root / "manifest.json"
    meta.write_text(json.dumps({"files": [p.relative_to(root).as_posix() for p in paths]}, indent=1))
    return paths + [meta]
