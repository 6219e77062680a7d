"""Patch classifier, class-activation score maps, multi-scale stitching, and
semantic trimap assembly.

The classifier is a small CNN over 4-channel patches (RGB + trimap encoding);
the same architecture with a 1-channel (alpha) input serves as the
multi-class discriminator that feeds the classification and feature
reconstruction losses. Score maps for a whole image come from class
activation maps of overlapped patches at several scales, averaged in logit
space, softmaxed per pixel, and zeroed outside the unknown region.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imaging
from .autodiff import GraphError, OpGraph, evaluate

CANONICAL_PATCH = 80
FEATURE_TAPS = ("f1", "f2", "f3", "f4", "f5")


@dataclass
class DiscriminatorOutput:
    logits: np.ndarray            # (B, n)
    features: list                # [f1..f5], each (B, C, h, w)

    @property
    def probs(self):
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


@dataclass
class SemanticTrimap:
    trimap: np.ndarray            # (H, W) in {0, 0.5, 1}
    scores: np.ndarray            # (n, H, W), per-class confidences

    def validate(self, tol=1e-5):
        unknown = self.trimap == 0.5
        if self.scores.min() < -tol:
            raise ValueError("negative class scores")
        sums = self.scores.sum(axis=0)
        if unknown.any() and np.abs(sums[unknown] - 1.0).max() > tol:
            raise ValueError("unknown-pixel scores do not sum to 1")
        if (~unknown).any() and np.abs(sums[~unknown]).max() > tol:
            raise ValueError("scores leak outside the unknown region")

    def stacked(self):
        """(1+n, H, W) network input block: trimap channel then scores."""
        return np.concatenate([self.trimap[None], self.scores], axis=0)


def build_classifier(n_classes, in_channels=4, dtype=np.float32, seed=0):
    """Three conv-relu-maxpool stages (16/32/64) + two residual blocks +
    a final conv (f5) + GAP + FC. The final FC starts at zero so an
    untrained net scores every class uniformly."""
    rng = np.random.default_rng(np.random.SeedSequence([7, seed, in_channels]))
    g = OpGraph(dtype=dtype)
    x = g.input("patch", channels=in_channels)

    def conv(tag, src, cin, cout, relu=True):
        w = g.parameter(f"{tag}.w", shape=(cout, cin, 3, 3), init="he", rng=rng)
        b = g.parameter(f"{tag}.b", shape=(cout,), init="zeros")
        h = g.conv2d(src, w, b)
        return g.relu(h) if relu else h

    h = conv("stage1", x, in_channels, 16)
    f1 = g.maxpool2(h, name="f1_map")
    h = conv("stage2", f1, 16, 32)
    f2 = g.maxpool2(h, name="f2_map")
    h = conv("stage3", f2, 32, 64)
    f3 = g.maxpool2(h, name="f3_map")

    h = f3
    for i in (1, 2):
        r = conv(f"res{i}a", h, 64, 64)
        r = conv(f"res{i}b", r, 64, 64, relu=False)
        h = g.relu(g.add(h, r), name=f"res{i}_out" if i == 1 else "f4_map")
    f4 = "f4_map"
    f5 = conv("final", f4, 64, 64)

    pooled = g.global_avg_pool(f5)
    fw = g.parameter("fc.w", shape=(64, n_classes), init="zeros")
    fb = g.parameter("fc.b", shape=(n_classes,), init="zeros")
    logits = g.fc(pooled, fw, fb)

    g.output("logits", logits)
    for name, ref in zip(FEATURE_TAPS, (f1, f2, f3, f4, f5)):
        g.output(name, ref)
    g.meta = {"kind": "classifier", "n_classes": n_classes,
              "in_channels": in_channels, "seed": seed}
    return g


def classifier_forward(graph, patches):
    """Run a (B,C,80-ish,80-ish) patch batch; returns logits and f1..f5."""
    outs = evaluate(graph, {"patch": patches})
    return DiscriminatorOutput(logits=outs["logits"],
                               features=[outs[t] for t in FEATURE_TAPS])


def cam(features_f5, fc_weights, class_id, out_hw=None):
    """Class activation map: channel-weighted sum of the last conv features,
    bilinearly upsampled to ``out_hw`` (defaults to 8x the feature dims,
    undoing the three pooling stages)."""
    f5 = np.asarray(features_f5)
    if f5.ndim != 3:
        raise GraphError(f"cam expects (C,h,w) features, got {f5.shape}")
    w = np.asarray(fc_weights)
    if w.shape[0] != f5.shape[0]:
        raise GraphError(f"fc weight rows {w.shape[0]} != feature channels {f5.shape[0]}")
    plane = np.tensordot(w[:, class_id], f5, axes=([0], [0]))
    if out_hw is None:
        out_hw = (8 * f5.shape[1], 8 * f5.shape[2])
    return imaging.resize_bilinear(plane, *out_hw)


def cam_all(features_f5, fc_weights, out_hw=None):
    """All-class activation maps for a batch: (B,C,h,w) -> (B,n,H,W)."""
    f5 = np.asarray(features_f5)
    maps = np.einsum("cn,bchw->bnhw", np.asarray(fc_weights), f5)
    if out_hw is None:
        out_hw = (8 * f5.shape[2], 8 * f5.shape[3])
    return imaging.resize_bilinear(maps, *out_hw)


@dataclass
class PatchGrid:
    image_hw: tuple
    patches: list                 # (y, x, side) with the patch inside the image
    notices: list

    def __len__(self):
        return len(self.patches)


def _axis_starts(length, side, step):
    starts = list(range(0, length - side + 1, step))
    if starts[-1] != length - side:
        starts.append(length - side)
    return starts


def partition_patches(image_hw, scales, overlap_fraction=0.5):
    """Overlapped square patches at every scale; every pixel is covered at
    each usable scale. Scales larger than the image are skipped with a
    notice."""
    h, w = image_hw
    if not scales:
        raise GraphError("scales must be nonempty")
    if not 0.0 <= overlap_fraction <= 0.9:
        raise GraphError("overlap_fraction must be in [0, 0.9]")
    patches, notices = [], []
    for side in scales:
        if side > h or side > w:
            notices.append(f"scale {side} exceeds image {h}x{w}; skipped")
            continue
        step = max(int(round(side * (1.0 - overlap_fraction))), 1)
        for y in _axis_starts(h, side, step):
            for x in _axis_starts(w, side, step):
                patches.append((y, x, side))
    if not patches:
        raise GraphError("no usable scales for this image")
    return PatchGrid(image_hw=(h, w), patches=patches, notices=notices)


def stitch(patch_scores, grid, unknown):
    """Average per-patch class logit maps over all covering patches, softmax
    per pixel, and zero everything outside the unknown region.

    ``patch_scores[i]`` is an (n, side, side) logit map aligned with
    ``grid.patches[i]``. Accumulation is order-independent (float64).
    """
    if len(grid) == 0:
        raise GraphError("empty patch grid")
    if len(patch_scores) != len(grid):
        raise GraphError(f"{len(patch_scores)} score maps for {len(grid)} patches")
    h, w = grid.image_hw
    n = patch_scores[0].shape[0]
    acc = np.zeros((n, h, w), dtype=np.float64)
    cover = np.zeros((h, w), dtype=np.float64)
    for (y, x, side), sm in zip(grid.patches, patch_scores):
        if sm.shape != (n, side, side):
            raise GraphError(f"score map shape {sm.shape} != ({n},{side},{side})")
        acc[:, y:y + side, x:x + side] += sm
        cover[y:y + side, x:x + side] += 1.0
    if (cover == 0).any():
        raise GraphError("patch grid does not cover the image")
    mean = acc / cover
    mean -= mean.max(axis=0, keepdims=True)
    e = np.exp(mean)
    probs = e / e.sum(axis=0, keepdims=True)
    probs[:, ~np.asarray(unknown, dtype=bool)] = 0.0
    return probs.astype(np.float32)


def default_scales(canonical=CANONICAL_PATCH):
    return (canonical // 2, canonical, 2 * canonical)


def build_semantic_trimap(image, regions, classifier, scales=None,
                          overlap_fraction=0.5, canonical=CANONICAL_PATCH,
                          batch_size=64):
    """Semantic trimap for a full image: partition into multi-scale patches,
    classify each (image + trimap channel resized to the canonical input),
    extract per-class activation maps, stitch, and mask to the unknown
    region."""
    image = np.asarray(image, dtype=np.float32)
    tri = regions.encode()
    scales = scales or default_scales(canonical)
    grid = partition_patches(image.shape[-2:], scales, overlap_fraction)
    fc_w = classifier.params["fc.w"]

    canon = []
    for (y, x, side) in grid.patches:
        img_p = image[:, y:y + side, x:x + side]
        tri_p = tri[y:y + side, x:x + side]
        if side != canonical:
            img_p = imaging.resize_bilinear(img_p, canonical, canonical)
            tri_p = imaging.resize_nearest(tri_p, canonical, canonical)
        canon.append(np.concatenate([img_p, tri_p[None]], axis=0))

    maps = []
    for lo in range(0, len(canon), batch_size):
        batch = np.stack(canon[lo:lo + batch_size])
        outs = evaluate(classifier, {"patch": batch})
        cams = cam_all(outs["f5"], fc_w, out_hw=(canonical, canonical))
        for k, (y, x, side) in enumerate(grid.patches[lo:lo + batch_size]):
            m = cams[k]
            if side != canonical:
                m = imaging.resize_bilinear(m, side, side)
            maps.append(np.asarray(m, dtype=np.float64))

    scores = stitch(maps, grid, regions.unknown)
    st = SemanticTrimap(trimap=tri, scores=scores)
    st.validate()
    return st


# ---------------------------------------------------------------------------
# score maps on disk: raw little-endian float32, C row-major (n, H, W)
# ---------------------------------------------------------------------------

def save_score_maps(path, scores, class_names):
    path = Path(path)
    scores = np.ascontiguousarray(scores, dtype="<f4")
    n, h, w = scores.shape
    path.write_bytes(scores.tobytes(order="C"))
    sidecar = {"n": int(n), "H": int(h), "W": int(w),
               "class_names": list(class_names)}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True))


def load_score_maps(path):
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    n, h, w = sidecar["n"], sidecar["H"], sidecar["W"]
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size != n * h * w:
        raise ValueError(f"score file holds {raw.size} floats, sidecar says {n * h * w}")
    return raw.reshape(n, h, w).copy(), sidecar["class_names"]
