"""PNG I/O and conversions between storage [0, 1] and network [-1, 1] ranges."""

from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MissingFile


def read_image(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"image not found: {path}")
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


@lru_cache(maxsize=8192)
def read_image_cached(path):
    arr = read_image(path)
    arr.setflags(write=False)
    return arr


def to_uint8(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path, img):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path, format="PNG")


def to_network(img):
    """[0, 1] HWC -> [-1, 1] HWC."""
    return np.asarray(img, dtype=np.float32) * 2.0 - 1.0


def to_storage(img):
    """[-1, 1] HWC -> [0, 1] HWC."""
    return np.clip((np.asarray(img, dtype=np.float32) + 1.0) * 0.5, 0.0, 1.0)
