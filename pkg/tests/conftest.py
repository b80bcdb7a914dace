import numpy as np
import pytest
from PIL import Image


def make_plane(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """A synthetic edge-rich test image on the 8-bit grid, values in [0,1]."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    ang = rng.uniform(0, np.pi)
    img = 0.45 + 0.25 * np.sin(2 * np.pi * (np.cos(ang) * xx + np.sin(ang) * yy) / rng.uniform(24, 64))
    for _ in range(10):
        y0, x0 = rng.integers(0, h), rng.integers(0, w)
        hh, ww = rng.integers(h // 8, h // 2), rng.integers(w // 8, w // 2)
        img[y0:y0 + hh, x0:x0 + ww] += rng.uniform(-0.35, 0.35)
    for _ in range(6):
        cy, cx = rng.integers(0, h), rng.integers(0, w)
        r = rng.integers(3, max(4, min(h, w) // 6))
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        img[mask] += rng.uniform(-0.3, 0.3)
    img = np.clip(img, 0.02, 0.98)
    return (np.rint(img * 255.0) / 255.0).astype(np.float32)


def write_gray_png(path, plane: np.ndarray) -> None:
    Image.fromarray(np.rint(plane * 255.0).astype(np.uint8), mode="L").save(path)


def write_rgb_png(path, rgb: np.ndarray) -> None:
    Image.fromarray(rgb.astype(np.uint8), mode="RGB").save(path)


@pytest.fixture
def image_dir(tmp_path):
    """A directory factory for synthetic grayscale image sets."""
    def make(name: str, count: int, h: int, w: int, seed: int):
        d = tmp_path / name
        d.mkdir()
        rng = np.random.default_rng(seed)
        for i in range(count):
            write_gray_png(d / f"img{i:03d}.png", make_plane(rng, h, w))
        return d
    return make
