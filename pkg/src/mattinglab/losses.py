"""Training losses with analytic gradients.

Every function takes batched ``(B,C,H,W)`` arrays plus 0/1 region masks of
shape ``(B,1,H,W)``, normalizes by the per-sample region pixel count, and
averages over the batch. Each returns the scalar value together with the
gradient arrays needed for backpropagation into the network outputs.

Component weights for the combined objective: the reconstruction term enters
at weight 1, the F/B, feature, gradient, and exclusion terms at 0.2, and the
classification term at 0.1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import spatial_gradient, spatial_gradient_adjoint
from .imaging import laplacian_pyramid, laplacian_pyramid_adjoint

log = logging.getLogger(__name__)

GROUP_WEIGHT = 0.2
CLS_WEIGHT = 0.1
PYRAMID_LEVELS = 5


class LossError(ValueError):
    pass


@dataclass
class LossReport:
    l_alpha: float = 0.0   # reconstruction incl. the pyramid term
    l_lap: float = 0.0     # pyramid part of l_alpha, reported separately
    l_fb: float = 0.0
    l_c: float = 0.0
    l_f: float = 0.0
    l_g: float = 0.0
    l_e: float = 0.0
    total: float = 0.0

    def as_dict(self):
        return {k: float(getattr(self, k)) for k in
                ("l_alpha", "l_lap", "l_fb", "l_c", "l_f", "l_g", "l_e", "total")}


def combine(l_alpha=0.0, l_fb=0.0, l_c=0.0, l_f=0.0, l_g=0.0, l_e=0.0, l_lap=0.0):
    """Weighted sum of the components into a LossReport."""
    total = l_alpha + GROUP_WEIGHT * (l_fb + l_f + l_g + l_e) + CLS_WEIGHT * l_c
    return LossReport(l_alpha=float(l_alpha), l_lap=float(l_lap), l_fb=float(l_fb),
                      l_c=float(l_c), l_f=float(l_f), l_g=float(l_g),
                      l_e=float(l_e), total=float(total))


def _region_counts(mask, what):
    counts = mask.sum(axis=(1, 2, 3))
    if (counts == 0).any():
        raise LossError(f"empty {what} region in batch")
    return counts[:, None, None, None]


def alpha_loss(alpha_hat, alpha, image, fg, bg, unknown, levels=PYRAMID_LEVELS):
    """Alpha reconstruction: L1 difference + composition error (ground-truth
    F/B with the predicted alpha, per-channel mean) over the unknown region,
    plus the weighted Laplacian pyramid term over the full plane.

    Returns ``(value, pyramid_part, grad_wrt_alpha_hat)``.
    """
    B = alpha_hat.shape[0]
    cu = _region_counts(unknown, "unknown")

    d = alpha_hat - alpha
    diff_val = float((np.abs(d) * unknown / cu).sum() / B)
    g = np.sign(d) * unknown / cu / B

    comp = alpha_hat * fg + (1.0 - alpha_hat) * bg - image
    comp_err = np.abs(comp).mean(axis=1, keepdims=True)
    comp_val = float((comp_err * unknown / cu).sum() / B)
    g = g + (np.sign(comp) * (fg - bg)).mean(axis=1, keepdims=True) * unknown / cu / B

    ph = laplacian_pyramid(alpha_hat, levels)
    pt = laplacian_pyramid(alpha, levels)
    lap_val = 0.0
    band_grads = []
    for k, (bh, bt) in enumerate(zip(ph, pt)):
        w = 2.0 ** k
        delta = bh - bt
        lap_val += w * float(np.abs(delta).mean())
        band_grads.append(w * np.sign(delta) / delta.size)
    g = g + laplacian_pyramid_adjoint(band_grads).astype(g.dtype)

    return diff_val + comp_val + lap_val, lap_val, g


def fb_loss(fg_hat, bg_hat, fg, bg, fg_ext, bg_ext):
    """L1 color error (summed over channels) inside the extended foreground
    and background regions. An empty region zeroes that term with a warning.

    Returns ``(value, grad_fg_hat, grad_bg_hat)``.
    """
    B = fg_hat.shape[0]
    value = 0.0
    grads = []
    for name, pred, gt, mask in (("F", fg_hat, fg, fg_ext), ("B", bg_hat, bg, bg_ext)):
        counts = mask.sum(axis=(1, 2, 3))
        if (counts == 0).any():
            log.warning("fb_loss: empty extended-%s region; term zeroed", name)
            grads.append(np.zeros_like(pred))
            continue
        c = counts[:, None, None, None]
        d = pred - gt
        value += float((np.abs(d) * mask / c).sum() / B)
        grads.append(np.sign(d) * mask / c / B)
    return value, grads[0], grads[1]


def classification_loss(logits, target_probs):
    """Cross entropy with the prediction as logits and the discriminator's
    probabilities on the ground truth as the soft label.

    Returns ``(value, grad_wrt_logits)``.
    """
    logits = np.asarray(logits)
    t = np.asarray(target_probs)
    if logits.shape != t.shape:
        raise LossError(f"logit shape {logits.shape} != target shape {t.shape}")
    if t.min() < -1e-6 or np.abs(t.sum(axis=1) - 1.0).max() > 1e-5:
        raise LossError("target is not a probability vector")
    B = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logz = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    value = float(-(t * logz).sum() / B)
    g = (np.exp(logz) - t) / B
    return value, g


def feature_loss(features_hat, features):
    """Per-level L2 norm of the feature difference, scaled by 1/elements.

    Returns ``(value, [grad per level])``.
    """
    if len(features_hat) != 5 or len(features) != 5:
        raise LossError(f"expected 5 feature levels, got {len(features_hat)}/{len(features)}")
    value = 0.0
    grads = []
    for fh, f in zip(features_hat, features):
        if fh.shape != f.shape:
            raise LossError(f"feature level shape mismatch: {fh.shape} vs {f.shape}")
        B = fh.shape[0]
        numel = int(np.prod(fh.shape[1:]))
        d = fh - f
        norms = np.sqrt((d * d).sum(axis=tuple(range(1, d.ndim))))
        value += float(norms.sum() / numel / B)
        safe = np.maximum(norms, 1e-12)
        scale = np.where(norms > 1e-12, 1.0 / safe, 0.0) / numel / B
        grads.append(d * scale.reshape((B,) + (1,) * (d.ndim - 1)))
    return value, grads


def gradient_loss(alpha_hat, fg_hat, bg_hat, lam1, lam2, image, unknown):
    """Content-weighted gradient constraint: the predicted image gradient
    lam1*grad(alpha) + (1-lam2)*grad(F) + lam2*grad(B) is matched to the
    input image gradient in L1 over the unknown region, summed over the two
    difference directions and the color channels (lam planes broadcast).

    Returns ``(value, g_alpha, g_fg, g_bg, g_lam1, g_lam2)``.
    """
    B = alpha_hat.shape[0]
    cu = _region_counts(unknown, "unknown")
    gI = spatial_gradient(image)          # (B,6,H,W)
    gA = spatial_gradient(alpha_hat)      # (B,2,H,W)
    gF = spatial_gradient(fg_hat)
    gB = spatial_gradient(bg_hat)

    gA_rep = np.tile(gA, (1, 3, 1, 1))
    pred = lam1 * gA_rep + (1.0 - lam2) * gF + lam2 * gB
    diff = pred - gI
    value = float((np.abs(diff).sum(axis=1, keepdims=True) * unknown / cu).sum() / B)

    s = np.sign(diff) * unknown / cu / B
    g_lam1 = (s * gA_rep).sum(axis=1, keepdims=True)
    g_lam2 = (s * (gB - gF)).sum(axis=1, keepdims=True)
    sA = (s * lam1).reshape(B, 3, 2, *s.shape[2:]).sum(axis=1)
    g_alpha = spatial_gradient_adjoint(sA, alpha_hat)
    g_fg = spatial_gradient_adjoint(s * (1.0 - lam2), fg_hat)
    g_bg = spatial_gradient_adjoint(s * lam2, bg_hat)
    return value, g_alpha, g_fg, g_bg, g_lam1, g_lam2


def exclusion_loss(alpha_hat, fg_hat, bg_hat, unknown):
    """Products of per-pixel L1 gradient magnitudes, |gF||gB| + |gA||gB|,
    averaged over the unknown region; discourages image structure from
    appearing in several layers at once.

    Returns ``(value, g_alpha, g_fg, g_bg)``.
    """
    B = alpha_hat.shape[0]
    cu = _region_counts(unknown, "unknown")
    gA = spatial_gradient(alpha_hat)
    gF = spatial_gradient(fg_hat)
    gB = spatial_gradient(bg_hat)
    nA = np.abs(gA).sum(axis=1, keepdims=True)
    nF = np.abs(gF).sum(axis=1, keepdims=True)
    nB = np.abs(gB).sum(axis=1, keepdims=True)

    value = float((((nF + nA) * nB) * unknown / cu).sum() / B)
    m = unknown / cu / B
    g_alpha = spatial_gradient_adjoint(np.sign(gA) * (nB * m), alpha_hat)
    g_fg = spatial_gradient_adjoint(np.sign(gF) * (nB * m), fg_hat)
    g_bg = spatial_gradient_adjoint(np.sign(gB) * ((nF + nA) * m), bg_hat)
    return value, g_alpha, g_fg, g_bg
