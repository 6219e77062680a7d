"""Matting evaluation metrics (SAD, MSE, Grad, Conn), per-class reports, and
dataset alpha statistics.

All four metrics are computed over the unknown region only, on [0,1]
mattes. Conventions follow the standard perceptual matting benchmark:
SAD reported /1000, MSE x1e3, Grad as the squared Gaussian-derivative
magnitude difference (sigma 1.4) /1000, and Conn as the connectivity-degree
difference (theta step 0.1, delta 0.15, 4-connected components) /1000.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi

from . import imaging

CONN_STEP = 0.1
CONN_DELTA = 0.15
GRAD_SIGMA = 1.4

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class MetricError(ValueError):
    pass


def _check(pred, gt, unknown):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    unknown = np.asarray(unknown, dtype=bool)
    if pred.shape != gt.shape or pred.shape != unknown.shape:
        raise MetricError(f"shape mismatch: {pred.shape}, {gt.shape}, {unknown.shape}")
    if not unknown.any():
        raise MetricError("empty unknown region")
    return pred, gt, unknown


def sad(pred, gt, unknown):
    """Sum of absolute differences over the unknown region, /1000."""
    pred, gt, unknown = _check(pred, gt, unknown)
    return float(np.abs(pred - gt)[unknown].sum() / 1000.0)


def mse(pred, gt, unknown):
    """Mean squared error over the unknown region, x1e3."""
    pred, gt, unknown = _check(pred, gt, unknown)
    d = (pred - gt)[unknown]
    return float((d * d).mean() * 1000.0)


def grad_metric(pred, gt, unknown, sigma=GRAD_SIGMA):
    """Sum over the unknown region of the squared difference between the
    Gaussian-derivative gradient magnitudes of the two mattes, /1000."""
    pred, gt, unknown = _check(pred, gt, unknown)
    gp = imaging.gaussian_derivative(pred, sigma)
    gg = imaging.gaussian_derivative(gt, sigma)
    d = (gp - gg)[unknown]
    return float((d * d).sum() / 1000.0)


def _connectivity_l_map(pred, gt, step):
    """Per-pixel largest threshold at which the pixel stays connected to the
    jointly-opaque source component."""
    thresh_steps = np.arange(0.0, 1.0 + step, step)
    l_map = np.full(pred.shape, -1.0)
    for i in range(1, len(thresh_steps)):
        joint = (pred >= thresh_steps[i]) & (gt >= thresh_steps[i])
        if joint.any():
            labels, n = ndi.label(joint, structure=_FOUR_CONN)
            sizes = np.bincount(labels.ravel())
            sizes[0] = 0
            omega = labels == sizes.argmax()
        else:
            omega = np.zeros(pred.shape, dtype=bool)
        drop = (l_map == -1.0) & ~omega
        l_map[drop] = thresh_steps[i - 1]
    l_map[l_map == -1.0] = 1.0
    return l_map


def conn_metric(pred, gt, unknown, step=CONN_STEP, delta=CONN_DELTA):
    """Connectivity-degree error over the unknown region, /1000.

    For each threshold the source is the largest 4-connected component of
    the jointly thresholded mattes; a pixel's degree is penalized once its
    distance from its connection level exceeds ``delta``. An entirely
    disconnected ground truth yields l=0 everywhere.
    """
    pred, gt, unknown = _check(pred, gt, unknown)
    l_map = _connectivity_l_map(pred, gt, step)
    pred_d = pred - l_map
    gt_d = gt - l_map
    pred_phi = 1.0 - pred_d * (pred_d >= delta)
    gt_phi = 1.0 - gt_d * (gt_d >= delta)
    return float(np.abs(pred_phi - gt_phi)[unknown].sum() / 1000.0)


def evaluate_pair(pred, gt, unknown):
    return {
        "sad": sad(pred, gt, unknown),
        "mse_e3": mse(pred, gt, unknown),
        "grad": grad_metric(pred, gt, unknown),
        "conn": conn_metric(pred, gt, unknown),
    }


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

METRIC_KEYS = ("sad", "mse_e3", "grad", "conn")


@dataclass
class MetricReport:
    overall: dict
    per_class: dict
    counts: dict
    n_samples: int

    def as_dict(self):
        return {"overall": self.overall, "per_class": self.per_class,
                "counts": self.counts, "n_samples": self.n_samples}

    def to_json(self, **kwargs):
        return json.dumps(self.as_dict(), sort_keys=True, **kwargs)


def class_report(per_sample, labels, class_names):
    """Aggregate per-sample metric dicts into per-class and overall means.

    Classes with no samples are omitted from ``per_class`` and counted 0.
    """
    if len(per_sample) != len(labels):
        raise MetricError("one label per sample required")
    for lb in labels:
        if not 0 <= lb < len(class_names):
            raise MetricError(f"unknown class label {lb}")
    per_class = {}
    counts = {name: 0 for name in class_names}
    sums = {name: dict.fromkeys(METRIC_KEYS, 0.0) for name in class_names}
    total = dict.fromkeys(METRIC_KEYS, 0.0)
    for m, lb in zip(per_sample, labels):
        name = class_names[lb]
        counts[name] += 1
        for k in METRIC_KEYS:
            sums[name][k] += m[k]
            total[k] += m[k]
    for name in class_names:
        if counts[name]:
            per_class[name] = {k: sums[name][k] / counts[name] for k in METRIC_KEYS}
    overall = {k: total[k] / len(per_sample) for k in METRIC_KEYS}
    return MetricReport(overall=overall, per_class=per_class, counts=counts,
                        n_samples=len(per_sample))


# ---------------------------------------------------------------------------
# dataset alpha statistics
# ---------------------------------------------------------------------------

@dataclass
class StatsReport:
    per_class: dict = field(default_factory=dict)
    skipped: int = 0

    def as_dict(self):
        return {"per_class": self.per_class, "skipped": self.skipped}

    def to_json(self, **kwargs):
        return json.dumps(self.as_dict(), sort_keys=True, **kwargs)


def sample_stats(alpha, unknown, sigma=GRAD_SIGMA):
    """(alpha_ratio, mean_gradient) of one matte inside its unknown region:
    the fraction of unknown pixels with positive alpha, and the mean
    Gaussian-derivative magnitude over those pixels."""
    unknown = np.asarray(unknown, dtype=bool)
    if not unknown.any():
        raise MetricError("empty unknown region")
    pos = (np.asarray(alpha) > 0) & unknown
    ratio = float(pos.sum() / unknown.sum())
    if not pos.any():
        return ratio, 0.0
    g = imaging.gaussian_derivative(np.asarray(alpha, dtype=np.float64), sigma)
    return ratio, float(g[pos].mean())


def dataset_stats(samples, class_names):
    """Per-class (alpha_ratio, mean_gradient) distributions over
    ``(alpha, unknown, label)`` triples; samples with an empty unknown
    region are skipped and counted."""
    if not samples:
        raise MetricError("empty sample set")
    acc = {name: {"alpha_ratio": [], "mean_gradient": []} for name in class_names}
    skipped = 0
    for alpha, unknown, label in samples:
        try:
            ratio, grad = sample_stats(alpha, unknown)
        except MetricError:
            skipped += 1
            continue
        name = class_names[label]
        acc[name]["alpha_ratio"].append(ratio)
        acc[name]["mean_gradient"].append(grad)
    per_class = {}
    for name, d in acc.items():
        if not d["alpha_ratio"]:
            continue
        r = np.asarray(d["alpha_ratio"])
        g = np.asarray(d["mean_gradient"])
        per_class[name] = {
            "alpha_ratio": r.tolist(),
            "mean_gradient": g.tolist(),
            "alpha_ratio_mean": float(r.mean()),
            "alpha_ratio_std": float(r.std()),
            "mean_gradient_mean": float(g.mean()),
            "mean_gradient_std": float(g.std()),
            "count": int(r.size),
        }
    return StatsReport(per_class=per_class, skipped=skipped)


def centroid_separation(stats_report):
    """For every class pair, the centroid distance in units of the larger
    within-class std, per axis; returns {(a, b): (sep_ratio, sep_grad)}."""
    names = sorted(stats_report.per_class)
    out = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            pa, pb = stats_report.per_class[a], stats_report.per_class[b]
            sr = abs(pa["alpha_ratio_mean"] - pb["alpha_ratio_mean"]) / \
                max(pa["alpha_ratio_std"], pb["alpha_ratio_std"], 1e-9)
            sg = abs(pa["mean_gradient_mean"] - pb["mean_gradient_mean"]) / \
                max(pa["mean_gradient_std"], pb["mean_gradient_std"], 1e-9)
            out[(a, b)] = (sr, sg)
    return out
