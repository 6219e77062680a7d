"""Procedural synthesis of class-labeled matting samples.

Six default pattern families span the alpha-statistics plane (coverage ratio
vs. boundary gradient): sharp silhouettes, hair strands, smoke plumes, net
grids, defocused blobs, and lace fabric. Every emitted sample satisfies the
compositing identity I = alpha*F + (1-alpha)*B exactly, and its trimap is a
disjoint fg/bg/unknown partition derived by randomized erosion of the alpha
matte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi

from . import imaging

EPS_DEFINITE = 1.0 / 255.0

DEFAULT_CLASS_NAMES = ("sharp", "hair", "smoke", "net", "defocus", "lace")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class ClassCatalog:
    names: tuple = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        if len(self.names) < 2:
            raise SynthError("catalog needs at least 2 classes")
        if len(set(self.names)) != len(self.names):
            raise SynthError("class names must be unique")

    @property
    def n(self):
        return len(self.names)

    def index(self, name):
        return self.names.index(name)


@dataclass
class TrimapRegions:
    fg: np.ndarray
    bg: np.ndarray
    unknown: np.ndarray

    @property
    def fg_extended(self):
        """F-tilde: definite foreground plus unknown."""
        return self.fg | self.unknown

    @property
    def bg_extended(self):
        """B-tilde: definite background plus unknown."""
        return self.bg | self.unknown

    def validate(self):
        over = (self.fg & self.bg) | (self.fg & self.unknown) | (self.bg & self.unknown)
        if over.any():
            raise SynthError("trimap regions overlap")
        if not (self.fg | self.bg | self.unknown).all():
            raise SynthError("trimap regions do not cover the image")

    def encode(self):
        """Single-channel encoding: bg 0, unknown 0.5, fg 1."""
        t = np.zeros(self.fg.shape, dtype=np.float32)
        t[self.unknown] = 0.5
        t[self.fg] = 1.0
        return t

    def flip_lr(self):
        return TrimapRegions(self.fg[:, ::-1].copy(), self.bg[:, ::-1].copy(),
                             self.unknown[:, ::-1].copy())


@dataclass
class MattingSample:
    image: np.ndarray           # (3,H,W)
    fg_color: np.ndarray        # (3,H,W)
    bg_color: np.ndarray        # (3,H,W)
    alpha: np.ndarray           # (H,W)
    regions: TrimapRegions
    class_label: int
    trimap_kernel: int = 3
    trimap_iterations: int = 5
    label_map: np.ndarray | None = None   # (H,W) int16, per-region labels after merge

    @property
    def size(self):
        return self.alpha.shape

    def check_identity(self, tol=1e-6):
        comp = composite(self.fg_color, self.bg_color, self.alpha)
        err = float(np.abs(comp - self.image).max())
        if err > tol:
            raise SynthError(f"compositing identity violated by {err:.2e}")
        return err


# ---------------------------------------------------------------------------
# low-level texture helpers
# ---------------------------------------------------------------------------

def _smooth_noise(h, w, rng, cell, octaves=3):
    """Multi-octave value noise in [0,1] built from bilinearly upsampled grids."""
    acc = np.zeros((h, w))
    amp, total = 1.0, 0.0
    c = float(cell)
    for _ in range(octaves):
        gh = max(int(np.ceil(h / c)) + 1, 2)
        gw = max(int(np.ceil(w / c)) + 1, 2)
        grid = rng.standard_normal((gh, gw))
        acc += amp * imaging.resize_bilinear(grid, h, w)
        total += amp
        amp *= 0.5
        c = max(c * 0.5, 2.0)
    acc /= total
    lo, hi = acc.min(), acc.max()
    return (acc - lo) / (hi - lo + 1e-12)


def _color_field(h, w, rng, contrast=0.35, base=None, avoid=None):
    if base is None:
        base = rng.uniform(0.15, 0.85, size=3)
        if avoid is not None:
            # keep the palette visibly apart from the color to avoid
            for _ in range(16):
                if np.linalg.norm(base - avoid) >= 0.55:
                    break
                base = rng.uniform(0.05, 0.95, size=3)
    tex = _smooth_noise(h, w, rng, cell=max(h, w) / 4, octaves=3)
    planes = [np.clip(b + contrast * (tex - 0.5) * rng.uniform(0.5, 1.5), 0.0, 1.0)
              for b in base]
    return np.stack(planes).astype(np.float32)


def _box_down2(a):
    h, w = a.shape
    return a.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _blob_mask(h, w, rng, coverage=0.5, cell_frac=0.45):
    n = _smooth_noise(h, w, rng, cell=max(h, w) * cell_frac, octaves=2)
    thr = np.quantile(n, 1.0 - coverage)
    return n > thr


def _snap(alpha):
    alpha = np.clip(alpha, 0.0, 1.0)
    alpha[alpha < 0.5 / 255.0] = 0.0
    alpha[alpha > 1.0 - 0.5 / 255.0] = 1.0
    return alpha.astype(np.float32)


# ---------------------------------------------------------------------------
# per-class alpha generators
# ---------------------------------------------------------------------------

def _gen_sharp(size, rng):
    mask = _blob_mask(2 * size, 2 * size, rng, coverage=rng.uniform(0.42, 0.58))
    return _box_down2(mask.astype(np.float64))


def _gen_hair(size, rng):
    s2 = 2 * size
    n_str = int(0.35 * s2)
    x0 = rng.uniform(0, s2, n_str)
    drift = rng.uniform(-0.35, 0.35, n_str)
    steps = rng.normal(0.0, 0.9, (n_str, s2)).cumsum(axis=1)
    xs = x0[:, None] + drift[:, None] * np.arange(s2)[None, :] + steps
    xs = np.clip(np.rint(xs).astype(np.int64), 0, s2 - 1)
    rows = np.broadcast_to(np.arange(s2)[None, :], xs.shape)
    canvas = np.zeros((s2, s2))
    weights = rng.uniform(0.55, 1.0, n_str)[:, None]
    np.add.at(canvas, (rows.ravel(), xs.ravel()), np.broadcast_to(weights, xs.shape).ravel())
    canvas = ndi.gaussian_filter(canvas, 2.2, mode="constant")
    return _box_down2(np.clip(canvas * 3.2, 0.0, 1.0))


def _gen_smoke(size, rng):
    n = _smooth_noise(size, size, rng, cell=size / 6.5, octaves=4)
    yy, xx = np.mgrid[0:size, 0:size] / size
    cy, cx = rng.uniform(0.35, 0.65, 2)
    r2 = (yy - cy) ** 2 + (xx - cx) ** 2
    env = np.exp(-r2 / (2 * 0.34 ** 2))
    alpha = 1.6 * env * (0.1 + 0.9 * n ** 2.0)
    alpha[alpha < 0.015] = 0.0
    return np.clip(alpha, 0.0, 0.9)


def _gen_net(size, rng):
    period = rng.uniform(17.0, 20.0)
    thick = rng.uniform(2.0, 2.3)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    wobble = 1.6 * np.sin(2 * np.pi * yy / rng.uniform(40, 70) + rng.uniform(0, 6.28))
    xw = xx + wobble
    yw = yy + 1.6 * np.sin(2 * np.pi * xx / rng.uniform(40, 70) + rng.uniform(0, 6.28))
    dx = np.abs((xw + rng.uniform(0, period)) % period - period / 2)
    dy = np.abs((yw + rng.uniform(0, period)) % period - period / 2)
    d = np.minimum(dx, dy)
    lines = np.clip((thick - (period / 2 - d)) / 0.8 + 1.0, 0.0, 1.0)
    support = _blob_mask(size, size, rng, coverage=rng.uniform(0.55, 0.7))
    return lines * support


def _gen_defocus(size, rng):
    mask = _blob_mask(size, size, rng, coverage=rng.uniform(0.45, 0.55), cell_frac=0.6)
    sigma = size * rng.uniform(0.030, 0.036)
    return np.clip(ndi.gaussian_filter(mask.astype(np.float64), sigma) * 1.15, 0.0, 1.0)


def _gen_lace(size, rng):
    cloth = _blob_mask(2 * size, 2 * size, rng, coverage=rng.uniform(0.5, 0.62))
    cloth = _box_down2(cloth.astype(np.float64))
    period = rng.uniform(10.0, 12.0)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    s = np.sin(2 * np.pi * xx / period + rng.uniform(0, 6.28)) * \
        np.sin(2 * np.pi * yy / period + rng.uniform(0, 6.28))
    holes = np.clip((s - 0.2) / 0.1, 0.0, 1.0)
    return cloth * (1.0 - 0.96 * holes)


_GENERATORS = {
    "sharp": _gen_sharp,
    "hair": _gen_hair,
    "smoke": _gen_smoke,
    "net": _gen_net,
    "defocus": _gen_defocus,
    "lace": _gen_lace,
}


def gen_foreground(class_id, size, seed, catalog=None):
    """Deterministic per (class_id, size, seed) foreground color + alpha."""
    catalog = catalog or ClassCatalog()
    if not 0 <= class_id < catalog.n:
        raise SynthError(f"unknown class id {class_id}")
    if size < 64:
        raise SynthError("size must be >= 64")
    name = catalog.names[class_id]
    if name not in _GENERATORS:
        raise SynthError(f"no generator for class {name!r}")
    rng = np.random.default_rng(np.random.SeedSequence([101, class_id, size, seed]))
    alpha = _snap(_GENERATORS[name](size, rng))
    fg = _color_field(size, size, rng)
    return fg, alpha, class_id


# ---------------------------------------------------------------------------
# backgrounds
# ---------------------------------------------------------------------------

def gen_background(size, seed, kind=None, background_dir=None, avoid_color=None):
    """Procedural background, or a random crop from a PNG directory.

    ``avoid_color`` keeps the procedural palette away from the foreground's
    mean color so composited patterns stay visible.
    """
    rng = np.random.default_rng(np.random.SeedSequence([202, size, seed]))
    if background_dir is not None:
        paths = sorted(Path(background_dir).glob("*.png"))
        if not paths:
            raise SynthError(f"no PNGs in {background_dir}")
        img = imaging.load_color_png(paths[rng.integers(len(paths))])
        h, w = img.shape[1:]
        if h < size or w < size:
            return imaging.resize_bilinear(img, size, size).astype(np.float32)
        y = rng.integers(0, h - size + 1)
        x = rng.integers(0, w - size + 1)
        return img[:, y:y + size, x:x + size].copy()
    kind = kind or rng.choice(["noise", "gradient"])
    if kind == "noise":
        return _color_field(size, size, rng, contrast=rng.uniform(0.4, 0.8),
                            avoid=avoid_color)
    if kind == "gradient":
        c0 = rng.uniform(0.05, 0.95, 3)
        c1 = rng.uniform(0.05, 0.95, 3)
        if avoid_color is not None:
            for _ in range(16):
                if min(np.linalg.norm(c0 - avoid_color),
                       np.linalg.norm(c1 - avoid_color)) >= 0.5:
                    break
                c0 = rng.uniform(0.05, 0.95, 3)
                c1 = rng.uniform(0.05, 0.95, 3)
        t = np.linspace(0, 1, size)
        ang = rng.uniform(0, 2 * np.pi)
        ramp = np.cos(ang) * t[None, :] + np.sin(ang) * t[:, None]
        ramp = (ramp - ramp.min()) / (np.ptp(ramp) + 1e-12)
        img = c0[:, None, None] + (c1 - c0)[:, None, None] * ramp[None]
        img += 0.04 * rng.standard_normal((3, size, size))
        return np.clip(img, 0, 1).astype(np.float32)
    raise SynthError(f"unknown background kind {kind!r}")


# ---------------------------------------------------------------------------
# compositing and trimaps
# ---------------------------------------------------------------------------

def composite(fg, bg, alpha):
    """I = alpha*F + (1-alpha)*B, elementwise; alpha broadcasts over channels."""
    fg = np.asarray(fg, dtype=np.float32)
    bg = np.asarray(bg, dtype=np.float32)
    alpha = np.asarray(alpha, dtype=np.float32)
    if fg.shape != bg.shape or fg.shape[-2:] != alpha.shape[-2:]:
        raise SynthError(f"shape mismatch: F {fg.shape}, B {bg.shape}, alpha {alpha.shape}")
    a = alpha if alpha.ndim == fg.ndim else alpha[None]
    return a * fg + (1.0 - a) * bg


def make_trimap(alpha, kernel_size, iterations, eps=EPS_DEFINITE):
    """Erode the definite-foreground and definite-background indicator masks;
    whatever remains is the unknown band. Even kernels round up to odd."""
    alpha = np.asarray(alpha)
    if kernel_size % 2 == 0:
        kernel_size += 1
    fg = imaging.erode(alpha >= 1.0 - eps, kernel_size, iterations)
    bg = imaging.erode(alpha <= eps, kernel_size, iterations)
    regions = TrimapRegions(fg=fg, bg=bg, unknown=~(fg | bg))
    regions.validate()
    return regions


def random_trimap_params(rng):
    """Kernel from [2,9] (even rounded up) and iterations from [5,15]."""
    k = int(rng.integers(2, 10))
    if k % 2 == 0:
        k += 1
    it = int(rng.integers(5, 16))
    return k, it


def finalize_sample(fg, bg, alpha, class_label, kernel_size, iterations,
                    label_map=None):
    """Build a consistent MattingSample: derive regions, snap alpha to exact
    0/1 inside the definite regions, then composite the image."""
    regions = make_trimap(alpha, kernel_size, iterations)
    alpha = np.asarray(alpha, dtype=np.float32).copy()
    alpha[regions.fg] = 1.0
    alpha[regions.bg] = 0.0
    image = composite(fg, bg, alpha)
    return MattingSample(image=image, fg_color=np.asarray(fg, dtype=np.float32),
                         bg_color=np.asarray(bg, dtype=np.float32), alpha=alpha,
                         regions=regions, class_label=class_label,
                         trimap_kernel=kernel_size, trimap_iterations=iterations,
                         label_map=label_map)


def mean_foreground_color(fg, alpha):
    w = np.asarray(alpha, dtype=np.float64)
    if w.sum() <= 0:
        return np.asarray(fg).mean(axis=(1, 2))
    return (np.asarray(fg, dtype=np.float64) * w).sum(axis=(1, 2)) / w.sum()


def make_sample(class_id, size, seed, catalog=None, background_dir=None):
    """Full sample: generated foreground over a procedural background with a
    randomized-morphology trimap. Deterministic per arguments."""
    fg, alpha, _ = gen_foreground(class_id, size, seed, catalog)
    bg = gen_background(size, seed * 7919 + class_id, background_dir=background_dir,
                        avoid_color=mean_foreground_color(fg, alpha))
    rng = np.random.default_rng(np.random.SeedSequence([303, class_id, size, seed]))
    k, it = random_trimap_params(rng)
    return finalize_sample(fg, bg, alpha, class_id, k, it)


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

@dataclass
class AugmentParams:
    crop_size: int | None = None      # side of the square crop
    crop_pos: tuple | None = None     # (y, x); random when None
    out_size: int | None = None       # resize after crop
    scale: float = 1.0
    angle: float = 0.0                # degrees
    hflip: bool = False
    jitter_gain: tuple | None = None    # per-channel multiplicative
    jitter_offset: tuple | None = None  # per-channel additive
    merge_with: MattingSample | None = None
    trimap_kernel: int | None = None    # None: redraw from seed
    trimap_iterations: int | None = None


def random_augment_params(rng, crop_sizes=(80, 120, 160), out_size=None,
                          merge_candidate=None, merge_prob=0.25,
                          source_size=None):
    """Draw the standard augmentation: crop from the staged sizes, mild
    scaling, rotation, horizontal flip, color jitter, optional merge.

    When ``source_size`` is given, the crop is drawn from the feasible sizes
    and the scale range is clamped so the scaled plane still fits the crop.
    """
    merge = merge_candidate if (merge_candidate is not None
                                and rng.random() < merge_prob) else None
    sizes = list(crop_sizes)
    if source_size is not None:
        sizes = [s for s in sizes if s <= source_size] or [min(crop_sizes)]
    crop = int(rng.choice(sizes))
    lo, hi = 0.85, 1.15
    if source_size is not None:
        lo = max(lo, crop / source_size)
        hi = max(hi, lo)
    return AugmentParams(
        crop_size=crop,
        out_size=out_size,
        scale=float(rng.uniform(lo, hi)),
        angle=float(rng.uniform(-20.0, 20.0)),
        hflip=bool(rng.random() < 0.5),
        jitter_gain=tuple(rng.uniform(0.85, 1.15, 3)),
        jitter_offset=tuple(rng.uniform(-0.08, 0.08, 3)),
        merge_with=merge,
    )


def merge_foregrounds(sample, other):
    """Layer ``sample`` over ``other``: complement-product alpha, alpha-blended
    foreground color, per-pixel winner labels."""
    if sample.alpha.shape != other.alpha.shape:
        raise SynthError("merge requires equal sample sizes")
    a1, a2 = sample.alpha, other.alpha
    alpha = 1.0 - (1.0 - a1) * (1.0 - a2)
    fg = a1[None] * sample.fg_color + (1.0 - a1[None]) * other.fg_color
    top = a1 >= (1.0 - a1) * a2
    label_map = np.where(top, sample.class_label, other.class_label).astype(np.int16)
    label_map[alpha <= 0] = -1
    return fg.astype(np.float32), alpha.astype(np.float32), label_map


def augment(sample, params, seed=0, extra_planes=None):
    """Apply merge/scale/rotate/crop/flip/jitter, then rebuild the trimap and
    re-composite so the compositing identity holds exactly.

    ``extra_planes`` is an optional dict of (C,H,W) arrays carried through
    the same geometric transform (no color jitter); when given, the return
    value is ``(sample, transformed_extras)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([404, seed]))
    fg, bg = sample.fg_color, sample.bg_color
    alpha = sample.alpha
    label_map = sample.label_map
    extras = dict(extra_planes) if extra_planes is not None else None

    def map_extras(fn):
        if extras is not None:
            for key in extras:
                extras[key] = fn(extras[key])

    if params.merge_with is not None:
        fg, alpha, label_map = merge_foregrounds(sample, params.merge_with)

    if params.scale != 1.0:
        h, w = alpha.shape
        nh, nw = max(int(round(h * params.scale)), 16), max(int(round(w * params.scale)), 16)
        fg = imaging.resize_bilinear(fg, nh, nw)
        bg = imaging.resize_bilinear(bg, nh, nw)
        alpha = imaging.resize_bilinear(alpha, nh, nw)
        if label_map is not None:
            label_map = imaging.resize_nearest(label_map, nh, nw)
        map_extras(lambda p: imaging.resize_bilinear(p, nh, nw))

    if params.angle != 0.0:
        fg = imaging.rotate(fg, params.angle)
        bg = imaging.rotate(bg, params.angle)
        alpha = np.clip(imaging.rotate(alpha, params.angle), 0.0, 1.0)
        if label_map is not None:
            label_map = ndi.rotate(label_map, params.angle, axes=(-2, -1), reshape=False,
                                   order=0, mode="nearest", prefilter=False)
        map_extras(lambda p: imaging.rotate(p, params.angle))

    if params.crop_size is not None:
        c = params.crop_size
        h, w = alpha.shape
        if c > h or c > w:
            raise SynthError(f"crop {c} exceeds source dims {h}x{w}")
        if params.crop_pos is not None:
            y, x = params.crop_pos
            if y < 0 or x < 0 or y + c > h or x + c > w:
                raise SynthError("crop position out of bounds")
        else:
            y = int(rng.integers(0, h - c + 1))
            x = int(rng.integers(0, w - c + 1))
        fg = fg[:, y:y + c, x:x + c]
        bg = bg[:, y:y + c, x:x + c]
        alpha = alpha[y:y + c, x:x + c]
        if label_map is not None:
            label_map = label_map[y:y + c, x:x + c]
        map_extras(lambda p: p[:, y:y + c, x:x + c])

    if params.out_size is not None and params.out_size != alpha.shape[0]:
        o = params.out_size
        fg = imaging.resize_bilinear(fg, o, o)
        bg = imaging.resize_bilinear(bg, o, o)
        alpha = imaging.resize_bilinear(alpha, o, o)
        if label_map is not None:
            label_map = imaging.resize_nearest(label_map, o, o)
        map_extras(lambda p: imaging.resize_bilinear(p, o, o))

    if params.hflip:
        fg = fg[:, :, ::-1]
        bg = bg[:, :, ::-1]
        alpha = alpha[:, ::-1]
        if label_map is not None:
            label_map = label_map[:, ::-1]
        map_extras(lambda p: p[:, :, ::-1])

    if params.jitter_gain is not None or params.jitter_offset is not None:
        gain = np.asarray(params.jitter_gain if params.jitter_gain is not None
                          else (1.0, 1.0, 1.0), dtype=np.float32)[:, None, None]
        off = np.asarray(params.jitter_offset if params.jitter_offset is not None
                         else (0.0, 0.0, 0.0), dtype=np.float32)[:, None, None]
        fg = np.clip(fg * gain + off, 0.0, 1.0)
        bg = np.clip(bg * gain + off, 0.0, 1.0)

    k = params.trimap_kernel
    it = params.trimap_iterations
    if k is None or it is None:
        rk, rit = random_trimap_params(rng)
        k = rk if k is None else k
        it = rit if it is None else it

    fg = np.ascontiguousarray(fg, dtype=np.float32)
    bg = np.ascontiguousarray(bg, dtype=np.float32)
    alpha = np.ascontiguousarray(np.clip(alpha, 0.0, 1.0), dtype=np.float32)
    if label_map is not None:
        label_map = np.ascontiguousarray(label_map)
    out = finalize_sample(fg, bg, alpha, sample.class_label, k, it, label_map=label_map)
    if extras is None:
        return out
    extras = {k2: np.ascontiguousarray(v, dtype=np.float32) for k2, v in extras.items()}
    return out, extras


def with_background(sample, bg):
    """Re-composite the sample over a different background; alpha, regions,
    and labels are untouched."""
    bg = np.asarray(bg, dtype=np.float32)
    if bg.shape != sample.fg_color.shape:
        raise SynthError(f"background shape {bg.shape} != {sample.fg_color.shape}")
    return replace(sample, bg_color=bg,
                   image=composite(sample.fg_color, bg, sample.alpha))


# ---------------------------------------------------------------------------
# dataset on disk
# ---------------------------------------------------------------------------

def save_sample(sample_dir, sample, seed=None, params=None):
    d = Path(sample_dir)
    d.mkdir(parents=True, exist_ok=True)
    imaging.save_color_png(d / "I.png", sample.image)
    imaging.save_color_png(d / "F.png", sample.fg_color)
    imaging.save_color_png(d / "B.png", sample.bg_color)
    imaging.save_gray_png(d / "alpha.png", sample.alpha, bits=16)
    tri = np.zeros(sample.alpha.shape, dtype=np.float64)
    tri[sample.regions.unknown] = 128.0 / 255.0
    tri[sample.regions.fg] = 1.0
    imaging.save_gray_png(d / "trimap.png", tri, bits=8)
    meta = {
        "class_label": int(sample.class_label),
        "seed": seed,
        "params": dict(params or {}, trimap_kernel=sample.trimap_kernel,
                       trimap_iterations=sample.trimap_iterations),
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_sample(sample_dir):
    """Load a sample directory. The image is re-composited from the stored
    F/B/alpha planes so the compositing identity holds bit-exactly despite
    8-bit quantization of I.png."""
    d = Path(sample_dir)
    fg = imaging.load_color_png(d / "F.png")
    bg = imaging.load_color_png(d / "B.png")
    alpha = imaging.load_gray_png(d / "alpha.png")
    tri = imaging.load_gray_png(d / "trimap.png")
    fg_mask = tri > 0.9
    bg_mask = tri < 0.1
    regions = TrimapRegions(fg=fg_mask, bg=bg_mask, unknown=~(fg_mask | bg_mask))
    regions.validate()
    meta = json.loads((d / "meta.json").read_text())
    image = composite(fg, bg, alpha)
    p = meta.get("params", {})
    return MattingSample(image=image, fg_color=fg, bg_color=bg, alpha=alpha,
                         regions=regions, class_label=int(meta["class_label"]),
                         trimap_kernel=int(p.get("trimap_kernel", 3)),
                         trimap_iterations=int(p.get("trimap_iterations", 5)))


def generate_dataset(out_dir, count, seed, size=160, catalog=None,
                     test_fraction=0.15, background_dir=None):
    """Write ``count`` samples round-robin over the catalog classes, plus a
    manifest with a train/test split."""
    catalog = catalog or ClassCatalog()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    n_test = max(int(round(count * test_fraction)), catalog.n)
    for i in range(count):
        class_id = i % catalog.n
        sample_seed = seed * 100003 + i
        sample = make_sample(class_id, size, sample_seed, catalog,
                             background_dir=background_dir)
        name = f"{i:05d}_{catalog.names[class_id]}"
        split = "test" if i >= count - n_test else "train"
        save_sample(out / name, sample, seed=sample_seed)
        entries.append({"id": name, "class": catalog.names[class_id],
                        "class_label": class_id, "split": split,
                        "seed": sample_seed})
    manifest = {
        "classes": list(catalog.names),
        "size": size,
        "seed": seed,
        "samples": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_manifest(dataset_dir):
    return json.loads((Path(dataset_dir) / "manifest.json").read_text())


def load_split(dataset_dir, split=None):
    """Load all samples (optionally one split) into memory, with their ids."""
    root = Path(dataset_dir)
    manifest = load_manifest(root)
    out = []
    for entry in manifest["samples"]:
        if split is not None and entry["split"] != split:
            continue
        out.append((entry["id"], load_sample(root / entry["id"])))
    return manifest, out
