"""Image planes, PNG I/O, binary morphology, Gaussian-derivative filtering,
bilinear resampling, and Laplacian pyramids.

Color planes are ``(3, H, W)`` float arrays in [0, 1]; single planes
(alpha, masks as floats) are ``(H, W)``. Binary masks are boolean ``(H, W)``
arrays. All functions are pure.
"""

from __future__ import annotations

import numpy as np
import scipy.ndimage as ndi
from PIL import Image


class ImagingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------

def save_color_png(path, plane):
    """Write a (3,H,W) [0,1] color plane as 8-bit RGB PNG."""
    arr = np.clip(np.asarray(plane, dtype=np.float64), 0.0, 1.0)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ImagingError(f"expected (3,H,W) color plane, got {arr.shape}")
    u8 = np.rint(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(u8, mode="RGB").save(path)


def load_color_png(path):
    img = Image.open(path).convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_gray_png(path, plane, bits=16):
    """Write an (H,W) [0,1] plane as 8- or 16-bit grayscale PNG."""
    arr = np.clip(np.asarray(plane, dtype=np.float64), 0.0, 1.0)
    if arr.ndim != 2:
        raise ImagingError(f"expected (H,W) plane, got {arr.shape}")
    if bits == 16:
        u = np.rint(arr * 65535.0).astype(np.uint16)
        Image.fromarray(u, mode="I;16").save(path)
    elif bits == 8:
        u = np.rint(arr * 255.0).astype(np.uint8)
        Image.fromarray(u, mode="L").save(path)
    else:
        raise ImagingError("bits must be 8 or 16")


def load_gray_png(path):
    img = Image.open(path)
    if img.mode in ("I;16", "I"):
        arr = np.asarray(img, dtype=np.float32) / 65535.0
    elif img.mode == "L":
        arr = np.asarray(img, dtype=np.float32) / 255.0
    else:
        arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
    return arr


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def _axis_weights(n_in, n_out):
    # half-pixel centers with edge clamp
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    lo = np.floor(src).astype(np.int64)
    frac = src - lo
    i0 = np.clip(lo, 0, n_in - 1)
    i1 = np.clip(lo + 1, 0, n_in - 1)
    return i0, i1, frac


def resize_bilinear(arr, out_h, out_w):
    """Bilinear resize of an (..., H, W) array (half-pixel convention)."""
    arr = np.asarray(arr)
    h, w = arr.shape[-2:]
    if (h, w) == (out_h, out_w):
        return arr.copy()
    r0, r1, rf = _axis_weights(h, out_h)
    c0, c1, cf = _axis_weights(w, out_w)
    rows = arr[..., r0, :] * (1 - rf)[:, None] + arr[..., r1, :] * rf[:, None]
    out = rows[..., :, c0] * (1 - cf) + rows[..., :, c1] * cf
    return out.astype(arr.dtype, copy=False)


def resize_nearest(arr, out_h, out_w):
    """Nearest-neighbour resize of an (..., H, W) array."""
    arr = np.asarray(arr)
    h, w = arr.shape[-2:]
    ri = np.minimum(((np.arange(out_h) + 0.5) * (h / out_h)).astype(np.int64), h - 1)
    ci = np.minimum(((np.arange(out_w) + 0.5) * (w / out_w)).astype(np.int64), w - 1)
    return arr[..., ri, :][..., :, ci].copy()


def rotate(arr, degrees):
    """Bilinear rotation about the center with replicated edges; keeps shape."""
    arr = np.asarray(arr)
    return ndi.rotate(arr, degrees, axes=(-2, -1), reshape=False, order=1,
                      mode="nearest", prefilter=False)


# ---------------------------------------------------------------------------
# binary morphology
# ---------------------------------------------------------------------------

def _check_mask(mask):
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ImagingError(f"mask must be 2D, got shape {mask.shape}")
    return mask.astype(bool)


def _check_kernel(kernel_size):
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ImagingError(f"kernel_size must be odd and >= 1, got {kernel_size}")
    return np.ones((kernel_size, kernel_size), dtype=bool)


def dilate(mask, kernel_size, iterations):
    """Binary dilation with a centered square kernel; outside counts as 0."""
    mask = _check_mask(mask)
    structure = _check_kernel(kernel_size)
    if iterations < 0:
        raise ImagingError("iterations must be >= 0")
    if iterations == 0 or kernel_size == 1:
        return mask.copy()
    return ndi.binary_dilation(mask, structure=structure, iterations=iterations,
                               border_value=0)


def erode(mask, kernel_size, iterations, border_value=0):
    """Binary erosion with a centered square kernel.

    ``border_value=0`` (default) lets the image border erode away;
    ``border_value=1`` treats the outside as foreground, which is the
    convention under which erosion is the exact set-dual of :func:`dilate`.
    """
    mask = _check_mask(mask)
    structure = _check_kernel(kernel_size)
    if iterations < 0:
        raise ImagingError("iterations must be >= 0")
    if iterations == 0 or kernel_size == 1:
        return mask.copy()
    return ndi.binary_erosion(mask, structure=structure, iterations=iterations,
                              border_value=border_value)


# ---------------------------------------------------------------------------
# Gaussian derivative magnitude
# ---------------------------------------------------------------------------

def gaussian_derivative_kernel(sigma):
    """Horizontal first-derivative-of-Gaussian kernel, radius ceil(3*sigma),
    normalized to unit L2 norm. The vertical kernel is its transpose."""
    if sigma <= 0:
        raise ImagingError("sigma must be > 0")
    radius = int(np.ceil(3.0 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-ax ** 2 / (2.0 * sigma ** 2)) / (sigma * np.sqrt(2.0 * np.pi))
    dg = -ax * g / sigma ** 2
    hx = np.outer(g, dg)
    return hx / np.sqrt(np.sum(hx * hx))


def gaussian_derivative(plane, sigma):
    """Gradient magnitude from Gaussian derivative filters (replicated edges)."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ImagingError(f"expected (H,W) plane, got {plane.shape}")
    hx = gaussian_derivative_kernel(sigma)
    if min(plane.shape) < hx.shape[0]:
        raise ImagingError(f"plane {plane.shape} smaller than kernel {hx.shape}")
    gx = ndi.convolve(plane, hx, mode="nearest")
    gy = ndi.convolve(plane, hx.T, mode="nearest")
    return np.sqrt(gx * gx + gy * gy)


# ---------------------------------------------------------------------------
# Laplacian pyramid (5-tap binomial kernel, reflected edges)
# ---------------------------------------------------------------------------

_K5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _filter1d(x, axis, kernel):
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, -1)
    n = x.shape[-1]
    p = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(2, 2)], mode="reflect")
    y = np.zeros_like(x)
    for t, kt in enumerate(kernel):
        y += kt * p[..., t: t + n]
    return np.moveaxis(y, -1, axis)


def _filter1d_adj(g, axis, kernel):
    # adjoint of reflect-pad + correlate: full correlation, then fold the
    # pad contributions back onto their mirror sources
    g = np.moveaxis(np.asarray(g, dtype=np.float64), axis, -1)
    n = g.shape[-1]
    dp = np.zeros(g.shape[:-1] + (n + 4,), dtype=np.float64)
    for t, kt in enumerate(kernel):
        dp[..., t: t + n] += kt * g
    dx = dp[..., 2: 2 + n].copy()
    dx[..., 2] += dp[..., 0]
    dx[..., 1] += dp[..., 1]
    dx[..., n - 2] += dp[..., n + 2]
    dx[..., n - 3] += dp[..., n + 3]
    return np.moveaxis(dx, -1, axis)


def _smooth(x):
    return _filter1d(_filter1d(x, -2, _K5), -1, _K5)


def _smooth_adj(g):
    return _filter1d_adj(_filter1d_adj(g, -1, _K5), -2, _K5)


def _pyr_up(d, out_h, out_w):
    zs = np.zeros(d.shape[:-2] + (2 * d.shape[-2], 2 * d.shape[-1]), dtype=np.float64)
    zs[..., ::2, ::2] = d
    y = _filter1d(_filter1d(zs, -2, 2.0 * _K5), -1, 2.0 * _K5)
    return y[..., :out_h, :out_w]


def _pyr_up_adj(g, in_h, in_w):
    gz = np.zeros(g.shape[:-2] + (2 * in_h, 2 * in_w), dtype=np.float64)
    gz[..., : g.shape[-2], : g.shape[-1]] = g
    dzs = _filter1d_adj(_filter1d_adj(gz, -1, 2.0 * _K5), -2, 2.0 * _K5)
    return dzs[..., ::2, ::2]


def laplacian_pyramid(plane, levels):
    """Band-pass decomposition of an (..., H, W) array into ``levels`` planes.

    Level k has spatial dims ceil(dims / 2**k); the last entry is the
    low-pass residual. ``collapse_pyramid`` inverts exactly.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if levels < 1:
        raise ImagingError("levels must be >= 1")
    h, w = plane.shape[-2:]
    if min(h, w) < 2 ** levels:
        raise ImagingError(f"plane {h}x{w} too small for {levels} pyramid levels")
    bands = []
    cur = plane
    for _ in range(levels - 1):
        s = _smooth(cur)
        down = s[..., ::2, ::2]
        up = _pyr_up(down, cur.shape[-2], cur.shape[-1])
        bands.append(cur - up)
        cur = down
    bands.append(cur)
    return bands


def collapse_pyramid(bands):
    cur = bands[-1]
    for band in reversed(bands[:-1]):
        cur = band + _pyr_up(cur, band.shape[-2], band.shape[-1])
    return cur


def laplacian_pyramid_adjoint(band_grads):
    """Adjoint of :func:`laplacian_pyramid` as a linear map; takes one
    gradient array per level and returns the gradient w.r.t. the input."""
    dg = np.asarray(band_grads[-1], dtype=np.float64)
    for k in range(len(band_grads) - 2, -1, -1):
        gband = np.asarray(band_grads[k], dtype=np.float64)
        h, w = gband.shape[-2:]
        dd = dg - _pyr_up_adj(gband, dg.shape[-2], dg.shape[-1])
        ds = np.zeros(gband.shape[:-2] + (h, w), dtype=np.float64)
        ds[..., ::2, ::2] = dd
        dg = gband + _smooth_adj(ds)
    return dg
