"""Hot per-pixel kernels: numba-compiled with a pure-numpy fallback.

The backend is chosen once at import. Set ``PTGAN_NUMBA=0`` to force the
numpy path (also used automatically when numba cannot be imported). Both
paths are always importable as ``*_numba`` / ``*_numpy`` so they can be
compared against each other.
"""

import os

import numpy as np

_FLAG = os.environ.get("PTGAN_NUMBA", "1").strip().lower()

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda fn: fn


USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "off", "no")
BACKEND = "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# bilinear remap with edge clamping
# --------------------------------------------------------------------------


@njit(cache=True)
def _remap_bilinear_numba(img, map_y, map_x):
    H, W, C = img.shape
    h, w = map_y.shape
    out = np.empty((h, w, C), dtype=img.dtype)
    for i in range(h):
        for j in range(w):
            y = min(max(map_y[i, j], 0.0), H - 1.0)
            x = min(max(map_x[i, j], 0.0), W - 1.0)
            y0 = int(np.floor(y))
            x0 = int(np.floor(x))
            y1 = min(y0 + 1, H - 1)
            x1 = min(x0 + 1, W - 1)
            wy = y - y0
            wx = x - x0
            for c in range(C):
                top = (1.0 - wx) * img[y0, x0, c] + wx * img[y0, x1, c]
                bot = (1.0 - wx) * img[y1, x0, c] + wx * img[y1, x1, c]
                out[i, j, c] = (1.0 - wy) * top + wy * bot
    return out


def _remap_bilinear_numpy(img, map_y, map_x):
    H, W, _ = img.shape
    y = np.clip(map_y, 0.0, H - 1.0)
    x = np.clip(map_x, 0.0, W - 1.0)
    y0 = np.floor(y).astype(np.intp)
    x0 = np.floor(x).astype(np.intp)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = (y - y0)[..., None]
    wx = (x - x0)[..., None]
    src = img.astype(np.float64)
    top = (1.0 - wx) * src[y0, x0] + wx * src[y0, x1]
    bot = (1.0 - wx) * src[y1, x0] + wx * src[y1, x1]
    return ((1.0 - wy) * top + wy * bot).astype(img.dtype)


def remap_bilinear(img, map_y, map_x):
    """Sample ``img`` (H, W, C) at fractional coordinates, clamping at edges."""
    img = np.ascontiguousarray(img)
    map_y = np.ascontiguousarray(map_y, dtype=np.float64)
    map_x = np.ascontiguousarray(map_x, dtype=np.float64)
    if USE_NUMBA:
        return _remap_bilinear_numba(img, map_y, map_x)
    return _remap_bilinear_numpy(img, map_y, map_x)


# --------------------------------------------------------------------------
# hue rotation + saturation scale in HSV space
# --------------------------------------------------------------------------


@njit(cache=True)
def _hsv_adjust_numba(img, hue_shift, sat_factor):
    H, W, _ = img.shape
    out = np.empty_like(img)
    for i in range(H):
        for j in range(W):
            r = float(img[i, j, 0])
            g = float(img[i, j, 1])
            b = float(img[i, j, 2])
            v = max(r, g, b)
            mn = min(r, g, b)
            c = v - mn
            s = c / v if v > 0.0 else 0.0
            if c == 0.0:
                h = 0.0
            elif v == r:
                h = ((g - b) / c) % 6.0
            elif v == g:
                h = (b - r) / c + 2.0
            else:
                h = (r - g) / c + 4.0
            h = (h / 6.0 + hue_shift) % 1.0
            s = min(s * sat_factor, 1.0)
            h6 = h * 6.0
            k = int(np.floor(h6))
            f = h6 - k
            p = v * (1.0 - s)
            q = v * (1.0 - s * f)
            t = v * (1.0 - s * (1.0 - f))
            k = k % 6
            if k == 0:
                r, g, b = v, t, p
            elif k == 1:
                r, g, b = q, v, p
            elif k == 2:
                r, g, b = p, v, t
            elif k == 3:
                r, g, b = p, q, v
            elif k == 4:
                r, g, b = t, p, v
            else:
                r, g, b = v, p, q
            out[i, j, 0] = r
            out[i, j, 1] = g
            out[i, j, 2] = b
    return out


def _hsv_adjust_numpy(img, hue_shift, sat_factor):
    rgb = img.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(v > 0, c / v, 0.0)
        h = np.where(
            c == 0,
            0.0,
            np.where(
                v == r,
                ((g - b) / c) % 6.0,
                np.where(v == g, (b - r) / c + 2.0, (r - g) / c + 4.0),
            ),
        )
    h = (h / 6.0 + hue_shift) % 1.0
    s = np.minimum(s * sat_factor, 1.0)
    h6 = h * 6.0
    k = np.floor(h6)
    f = h6 - k
    k = k.astype(np.intp) % 6
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    table = np.stack(
        [
            np.stack([v, t, p], -1),
            np.stack([q, v, p], -1),
            np.stack([p, v, t], -1),
            np.stack([p, q, v], -1),
            np.stack([t, p, v], -1),
            np.stack([v, p, q], -1),
        ]
    )
    out = np.take_along_axis(table, k[None, ..., None], axis=0)[0]
    return out.astype(img.dtype)


def hsv_adjust(img, hue_shift, sat_factor):
    """Rotate hue by ``hue_shift`` turns and scale saturation, RGB in [0, 1]."""
    img = np.ascontiguousarray(img)
    if USE_NUMBA:
        return _hsv_adjust_numba(img, float(hue_shift), float(sat_factor))
    return _hsv_adjust_numpy(img, float(hue_shift), float(sat_factor))


# --------------------------------------------------------------------------
# separable 'valid' filtering (SSIM local statistics)
# --------------------------------------------------------------------------


@njit(cache=True)
def _filter_valid_numba(x, k):
    H, W = x.shape
    n = k.shape[0]
    h = H - n + 1
    w = W - n + 1
    tmp = np.zeros((h, W))
    for i in range(h):
        for t in range(n):
            kt = k[t]
            for j in range(W):
                tmp[i, j] += kt * x[i + t, j]
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for t in range(n):
                acc += k[t] * tmp[i, j + t]
            out[i, j] = acc
    return out


def _filter_valid_numpy(x, k):
    n = k.shape[0]
    h = x.shape[0] - n + 1
    w = x.shape[1] - n + 1
    tmp = np.zeros((h, x.shape[1]))
    for t in range(n):
        tmp += k[t] * x[t : t + h, :]
    out = np.zeros((h, w))
    for t in range(n):
        out += k[t] * tmp[:, t : t + w]
    return out


def filter_valid(x, k):
    """Separable 2-D correlation of ``x`` with ``outer(k, k)``, 'valid' region only."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    k = np.ascontiguousarray(k, dtype=np.float64)
    if USE_NUMBA:
        return _filter_valid_numba(x, k)
    return _filter_valid_numpy(x, k)
