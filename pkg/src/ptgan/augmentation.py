"""Seeded image augmentation: canonical resize-and-pad plus five random transforms.

Images are float32 arrays of shape (H, W, 3) with values in [0, 1]. Every
random transform takes a ``numpy.random.Generator`` so a fixed
``(seed, sample_index)`` reproduces the exact same output.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import EmptyImage

TRANSFORMS = ("erase", "crop", "distort", "jitter", "flip")


@dataclass(frozen=True)
class AugmentConfig:
    erase_prob: float = 0.5
    erase_area_range: tuple = (0.02, 0.2)
    erase_aspect_range: tuple = (0.3, 3.3)
    erase_fill: str = "noise"  # "noise" (per pixel) or "constant" (one random value)
    crop_scale_range: tuple = (0.8, 1.0)
    jitter_brightness: float = 0.2
    jitter_contrast: float = 0.2
    jitter_saturation: float = 0.2
    jitter_hue_deg: float = 18.0
    flip_prob: float = 0.5
    distortion_grid: int = 10
    distortion_magnitude: float = 8.0
    image_size: int = 256
    order: tuple = TRANSFORMS
    seed: int = 0

    def __post_init__(self):
        for name in ("erase_prob", "flip_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        for name in ("erase_area_range", "erase_aspect_range", "crop_scale_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be ordered (min <= max), got {(lo, hi)}")
        lo, hi = self.erase_area_range
        if not (0.0 < lo and hi < 1.0):
            raise ValueError("erase_area_range must lie inside (0, 1)")
        lo, hi = self.crop_scale_range
        if not (0.0 < lo and hi <= 1.0):
            raise ValueError("crop_scale_range must lie inside (0, 1]")
        if self.distortion_grid < 2:
            raise ValueError("distortion_grid must be >= 2")
        if min(self.jitter_brightness, self.jitter_contrast, self.jitter_saturation,
               self.jitter_hue_deg, self.distortion_magnitude) < 0:  # fmt: skip
            raise ValueError("jitter strengths and distortion magnitude must be >= 0")
        if self.erase_fill not in ("noise", "constant"):
            raise ValueError(f"unknown erase_fill {self.erase_fill!r}")
        unknown = set(self.order) - set(TRANSFORMS)
        if unknown:
            raise ValueError(f"unknown transforms in order: {sorted(unknown)}")

    @classmethod
    def disabled(cls, **kwargs):
        """A config under which every random transform is the identity."""
        base = dict(
            erase_prob=0.0, crop_scale_range=(1.0, 1.0), jitter_brightness=0.0,
            jitter_contrast=0.0, jitter_saturation=0.0, jitter_hue_deg=0.0,
            flip_prob=0.0, distortion_magnitude=0.0,
        )  # fmt: skip
        base.update(kwargs)
        return cls(**base)


def rng_stream(seed, sample_index, transform=None):
    """Deterministic generator for one sample (and optionally one transform)."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(sample_index)]
    if transform is not None:
        key.append(TRANSFORMS.index(transform) + 1)
    return np.random.default_rng(np.random.SeedSequence(key))


def _resize(img, out_h, out_w):
    H, W, _ = img.shape
    ys = (np.arange(out_h) + 0.5) * (H / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (W / out_w) - 0.5
    map_y, map_x = np.meshgrid(ys, xs, indexing="ij")
    return _kernels.remap_bilinear(img, map_y, map_x)


def resize_and_pad(img, target=(256, 256)):
    """Scale so the image fits ``target`` with aspect kept, zero-pad the rest."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise EmptyImage(f"cannot canonicalize image of shape {img.shape}")
    th, tw = target
    H, W, C = img.shape
    if (H, W) == (th, tw):
        return img.copy()
    scale = min(th / H, tw / W)
    nh = min(th, max(1, int(round(H * scale))))
    nw = min(tw, max(1, int(round(W * scale))))
    resized = _resize(img, nh, nw)
    out = np.zeros((th, tw, C), dtype=np.float32)
    top = (th - nh) // 2
    left = (tw - nw) // 2
    out[top : top + nh, left : left + nw] = resized
    return out


def random_erase(img, rng, cfg):
    if rng.random() >= cfg.erase_prob:
        return img.copy()
    H, W, C = img.shape
    area = rng.uniform(*cfg.erase_area_range) * H * W
    log_lo, log_hi = np.log(cfg.erase_aspect_range)
    aspect = float(np.exp(rng.uniform(log_lo, log_hi)))
    eh = int(np.clip(round(np.sqrt(area * aspect)), 1, H))
    ew = int(np.clip(round(np.sqrt(area / aspect)), 1, W))
    top = int(rng.integers(0, H - eh + 1))
    left = int(rng.integers(0, W - ew + 1))
    out = img.copy()
    if cfg.erase_fill == "noise":
        patch = rng.uniform(0.0, 1.0, size=(eh, ew, C))
    else:
        patch = np.full((eh, ew, C), rng.uniform(0.0, 1.0))
    out[top : top + eh, left : left + ew] = patch
    return out


def random_crop_upscale(img, rng, cfg):
    H, W, _ = img.shape
    s = rng.uniform(*cfg.crop_scale_range)
    ch = min(H, max(1, int(round(s * H))))
    cw = min(W, max(1, int(round(s * W))))
    top = int(rng.integers(0, H - ch + 1))
    left = int(rng.integers(0, W - cw + 1))
    if (ch, cw) == (H, W):
        return img.copy()
    return _resize(img[top : top + ch, left : left + cw], H, W)


def adjust_brightness(img, factor):
    return np.clip(img * factor, 0.0, 1.0).astype(np.float32)


def adjust_contrast(img, factor):
    mean = img.mean(dtype=np.float64)
    return np.clip((img - mean) * factor + mean, 0.0, 1.0).astype(np.float32)


def adjust_hue_saturation(img, hue_deg=0.0, saturation=1.0):
    if hue_deg == 0.0 and saturation == 1.0:
        return img.copy()
    out = _kernels.hsv_adjust(img.astype(np.float32), hue_deg / 360.0, saturation)
    return np.clip(out, 0.0, 1.0)


def jitter(img, rng, cfg):
    """Brightness, contrast, saturation and hue, each with a uniform random factor."""
    b = 1.0 + rng.uniform(-cfg.jitter_brightness, cfg.jitter_brightness)
    c = 1.0 + rng.uniform(-cfg.jitter_contrast, cfg.jitter_contrast)
    s = 1.0 + rng.uniform(-cfg.jitter_saturation, cfg.jitter_saturation)
    h = rng.uniform(-cfg.jitter_hue_deg, cfg.jitter_hue_deg)
    out = img.copy()
    if b != 1.0:
        out = adjust_brightness(out, b)
    if c != 1.0:
        out = adjust_contrast(out, c)
    return adjust_hue_saturation(out, h, max(s, 0.0))


def horizontal_flip(img, rng, cfg):
    if rng.random() < cfg.flip_prob:
        return img[:, ::-1].copy()
    return img.copy()


def distortion_field(shape, rng, grid, magnitude):
    """Dense (dy, dx) offsets bilinearly interpolated from a grid x grid lattice."""
    H, W = shape
    ctrl = rng.uniform(-magnitude, magnitude, size=(grid, grid, 2))
    # lattice points span the frame corner to corner
    ys = np.linspace(0.0, grid - 1.0, H)
    xs = np.linspace(0.0, grid - 1.0, W)
    map_y, map_x = np.meshgrid(ys, xs, indexing="ij")
    dense = _kernels.remap_bilinear(ctrl, map_y, map_x)
    return dense[..., 0], dense[..., 1]


def random_distortion(img, rng, cfg):
    H, W, _ = img.shape
    dy, dx = distortion_field((H, W), rng, cfg.distortion_grid, cfg.distortion_magnitude)
    if cfg.distortion_magnitude == 0:
        return img.copy()
    gy, gx = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64),
                         indexing="ij")  # fmt: skip
    return _kernels.remap_bilinear(img, gy + dy, gx + dx)


_DISPATCH = {
    "erase": random_erase,
    "crop": random_crop_upscale,
    "distort": random_distortion,
    "jitter": jitter,
    "flip": horizontal_flip,
}


@dataclass(frozen=True)
class Augmenter:
    cfg: AugmentConfig
    enabled: bool = True
    _steps: tuple = field(init=False, repr=False, default=())

    def __post_init__(self):
        object.__setattr__(self, "_steps", tuple((n, _DISPATCH[n]) for n in self.cfg.order))

    @property
    def target(self):
        return (self.cfg.image_size, self.cfg.image_size)

    def canonical(self, img):
        return resize_and_pad(img, self.target)

    def __call__(self, img, sample_index):
        out = self.canonical(img)
        if not self.enabled:
            return out
        for name, fn in self._steps:
            out = fn(out, rng_stream(self.cfg.seed, sample_index, name), self.cfg)
        return np.clip(out, 0.0, 1.0).astype(np.float32)


def compose_pipeline(cfg, enabled=True):
    return Augmenter(cfg, enabled)


def with_seed(cfg, seed):
    return replace(cfg, seed=int(seed))
