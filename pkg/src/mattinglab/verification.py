"""Gradient verification sweeps: every graph operator and every loss against
64-bit central finite differences, plus the end-to-end check of the combined
objective through a toy matting network and discriminator.
"""

from __future__ import annotations

import numpy as np

from . import losses, network, semantics, training
from .autodiff import OpGraph, grad_check

OPERATORS = ("conv2d", "relu", "tanh", "sigmoid", "maxpool2", "global_avg_pool",
             "fc", "flatten", "upsample2", "concat", "split", "add", "sub",
             "mul", "scale", "softmax", "spatial_grad")


def _op_instance(op, rng):
    """One random tiny scalar graph exercising ``op``; returns (graph, inputs)."""
    g = OpGraph(dtype=np.float64)
    B, C, H, W = 1, 2, 6, 8
    x = rng.normal(size=(B, C, H, W))
    inputs = {}

    if op == "conv2d":
        xin = g.input("x")
        stride = int(rng.integers(1, 3))
        dil = int(rng.integers(1, 3))
        oc = 3
        w = g.parameter("w", value=rng.normal(size=(oc, C, 3, 3)) * 0.5)
        b = g.parameter("b", value=rng.normal(size=(oc,)) * 0.1)
        node = g.conv2d(xin, w, b, stride=stride, dilation=dil)
        oh, ow = -(-H // stride), -(-W // stride)
        k = oc * oh * ow
        inputs["x"] = x
    elif op in ("relu", "maxpool2"):
        xin = g.input("x")
        # keep coordinates away from kinks and pooling ties
        xk = x + 1e-3 * np.sign(x) + 1e-3 * rng.standard_normal(x.shape)
        node = g.relu(xin) if op == "relu" else g.maxpool2(xin)
        k = C * H * W if op == "relu" else C * (H // 2) * (W // 2)
        inputs["x"] = xk
    elif op in ("tanh", "sigmoid"):
        xin = g.input("x")
        node = getattr(g, op)(xin)
        k = C * H * W
        inputs["x"] = x
    elif op == "global_avg_pool":
        xin = g.input("x")
        node = g.global_avg_pool(xin)
        k = C
        inputs["x"] = x
    elif op == "fc":
        xin = g.input("x")
        w = g.parameter("w", value=rng.normal(size=(5, 4)))
        b = g.parameter("b", value=rng.normal(size=(4,)))
        node = g.fc(xin, w, b)
        k = 4
        inputs["x"] = rng.normal(size=(1, 5))
    elif op == "flatten":
        xin = g.input("x")
        node = g.flatten(xin)
        k = C * H * W
        inputs["x"] = x
    elif op == "upsample2":
        xin = g.input("x")
        node = g.upsample2(xin)
        k = C * 2 * H * 2 * W
        inputs["x"] = x
    elif op == "concat":
        a = g.input("a")
        b = g.input("b")
        node = g.concat(a, b)
        k = 2 * C * H * W
        inputs["a"] = x
        inputs["b"] = rng.normal(size=(B, C, H, W))
    elif op == "split":
        xin = g.input("x")
        node = g.split(xin, 0, 1)
        k = H * W
        inputs["x"] = x
    elif op in ("add", "sub", "mul"):
        a = g.input("a")
        b = g.input("b")
        node = getattr(g, op)(a, b)
        k = C * H * W
        inputs["a"] = x
        inputs["b"] = rng.normal(size=(B, C, H, W))
    elif op == "scale":
        xin = g.input("x")
        node = g.scale(xin, factor=float(rng.normal()))
        k = C * H * W
        inputs["x"] = x
    elif op == "softmax":
        xin = g.input("x")
        node = g.softmax(xin, axis=1)
        k = 7
        inputs["x"] = rng.normal(size=(1, 7))
    elif op == "spatial_grad":
        xin = g.input("x")
        node = g.spatial_grad(xin)
        k = 2 * C * H * W
        inputs["x"] = x
    else:
        raise ValueError(f"unknown operator {op!r}")

    w = g.parameter("proj.w", value=rng.normal(size=(k, 1)))
    b2 = g.parameter("proj.b", shape=(1,), init="zeros")
    g.output("y", g.fc(g.flatten(node), w, b2))
    return g, inputs


def operator_suite(instances=20, seed=0, max_coords=24):
    """Gradient-check every operator on ``instances`` random graphs.

    Returns ``(worst_rel_err, [(op, max_rel_err, kinks)])``; kinked/tied
    coordinates are skipped and counted, not failed.
    """
    rows = []
    worst = 0.0
    for op in OPERATORS:
        op_worst, kinks = 0.0, 0
        for i in range(instances):
            rng = np.random.default_rng(np.random.SeedSequence([31, seed, hash(op) & 0xFFFF, i]))
            g, inputs = _op_instance(op, rng)
            res = grad_check(g, inputs, max_coords=max_coords, seed=i)
            for r in res.values():
                op_worst = max(op_worst, r.max_rel_error)
                kinks += r.kinks
        rows.append((op, op_worst, kinks))
        worst = max(worst, op_worst)
    return worst, rows


# ---------------------------------------------------------------------------
# losses against finite differences
# ---------------------------------------------------------------------------

def fd_max_rel_error(fn, arr, analytic, step=1e-5, max_coords=30, kink_tol=1e-3,
                     seed=0):
    """Central-difference check of ``analytic`` = d fn() / d arr, sampling
    coordinates; kinked coordinates are skipped."""
    rng = np.random.default_rng(seed)
    flat = arr.reshape(-1)
    a_flat = np.asarray(analytic).reshape(-1)
    coords = (np.arange(flat.size) if flat.size <= max_coords
              else rng.choice(flat.size, size=max_coords, replace=False))
    worst = 0.0
    f0 = fn()
    for c in coords:
        keep = flat[c]
        flat[c] = keep + step
        fp = fn()
        flat[c] = keep - step
        fm = fn()
        flat[c] = keep
        dp, dm = (fp - f0) / step, (f0 - fm) / step
        if abs(dp - dm) > kink_tol * max(abs(dp), abs(dm), 1.0):
            continue
        num = (fp - fm) / (2 * step)
        a = a_flat[c]
        worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-8))
    return worst


def loss_suite(seed=0, max_coords=25):
    """FD-verify the analytic gradient of every loss; returns
    ``(worst, [(name, max_rel_err)])``."""
    rng = np.random.default_rng(np.random.SeedSequence([37, seed]))
    B, H, W = 2, 32, 32
    alpha_hat = rng.random((B, 1, H, W))
    alpha = rng.random((B, 1, H, W))
    image = rng.random((B, 3, H, W))
    fgc, bgc = rng.random((B, 3, H, W)), rng.random((B, 3, H, W))
    fg_hat, bg_hat = rng.random((B, 3, H, W)), rng.random((B, 3, H, W))
    lam1 = rng.uniform(-1, 1, (B, 1, H, W))
    lam2 = rng.random((B, 1, H, W))
    unknown = (rng.random((B, 1, H, W)) > 0.3).astype(np.float64)
    fg_ext = (rng.random((B, 1, H, W)) > 0.4).astype(np.float64)
    bg_ext = (rng.random((B, 1, H, W)) > 0.4).astype(np.float64)

    rows = []

    _, _, ga = losses.alpha_loss(alpha_hat, alpha, image, fgc, bgc, unknown)
    rows.append(("alpha", fd_max_rel_error(
        lambda: losses.alpha_loss(alpha_hat, alpha, image, fgc, bgc, unknown)[0],
        alpha_hat, ga, seed=seed, max_coords=max_coords)))

    _, gF, gB = losses.fb_loss(fg_hat, bg_hat, fgc, bgc, fg_ext, bg_ext)
    fbfn = lambda: losses.fb_loss(fg_hat, bg_hat, fgc, bgc, fg_ext, bg_ext)[0]
    rows.append(("fb", max(fd_max_rel_error(fbfn, fg_hat, gF, seed=seed, max_coords=max_coords),
                           fd_max_rel_error(fbfn, bg_hat, gB, seed=seed, max_coords=max_coords))))

    logits = rng.normal(size=(3, 6))
    target = rng.random((3, 6))
    target /= target.sum(axis=1, keepdims=True)
    _, gl = losses.classification_loss(logits, target)
    rows.append(("classification", fd_max_rel_error(
        lambda: losses.classification_loss(logits, target)[0],
        logits, gl, seed=seed, max_coords=max_coords)))

    fh = [rng.normal(size=(B, 3, 8, 8)) for _ in range(5)]
    f0 = [rng.normal(size=(B, 3, 8, 8)) for _ in range(5)]
    _, gs = losses.feature_loss(fh, f0)
    rows.append(("feature", max(
        fd_max_rel_error(lambda: losses.feature_loss(fh, f0)[0], fh[k], gs[k],
                         seed=seed, max_coords=max_coords)
        for k in range(5))))

    _, ga, gf, gb, gl1, gl2 = losses.gradient_loss(alpha_hat, fg_hat, bg_hat,
                                                   lam1, lam2, image, unknown)
    gfn = lambda: losses.gradient_loss(alpha_hat, fg_hat, bg_hat, lam1, lam2,
                                       image, unknown)[0]
    rows.append(("gradient", max(
        fd_max_rel_error(gfn, alpha_hat, ga, seed=seed, max_coords=max_coords),
        fd_max_rel_error(gfn, fg_hat, gf, seed=seed, max_coords=max_coords),
        fd_max_rel_error(gfn, bg_hat, gb, seed=seed, max_coords=max_coords),
        fd_max_rel_error(gfn, lam1, gl1, seed=seed, max_coords=max_coords),
        fd_max_rel_error(gfn, lam2, gl2, seed=seed, max_coords=max_coords))))

    _, ea, ef, eb = losses.exclusion_loss(alpha_hat, fg_hat, bg_hat, unknown)
    efn = lambda: losses.exclusion_loss(alpha_hat, fg_hat, bg_hat, unknown)[0]
    rows.append(("exclusion", max(
        fd_max_rel_error(efn, alpha_hat, ea, seed=seed, max_coords=max_coords),
        fd_max_rel_error(efn, fg_hat, ef, seed=seed, max_coords=max_coords),
        fd_max_rel_error(efn, bg_hat, eb, seed=seed, max_coords=max_coords))))

    return max(err for _, err in rows), rows


# ---------------------------------------------------------------------------
# end-to-end: total objective through a toy net and discriminator
# ---------------------------------------------------------------------------

def end_to_end_check(seed=0, size=8, coords_per_tensor=3):
    """FD-verify the parameter gradients of the full training objective
    through a small 4-channel matting net and a tiny frozen discriminator.
    Returns the worst relative error over sampled parameter coordinates."""
    rng = np.random.default_rng(np.random.SeedSequence([41, seed]))
    net = network.build_matting_net(0, base=2, dtype=np.float64, seed=seed,
                                    with_scores=False)
    disc = semantics.build_classifier(3, in_channels=1, dtype=np.float64, seed=seed)
    # an untrained discriminator has zero logits; give it structure
    disc.params["fc.w"] = rng.normal(size=disc.params["fc.w"].shape) * 0.3
    disc.params["fc.b"] = rng.normal(size=disc.params["fc.b"].shape) * 0.1

    B = 1
    x = rng.random((B, 4, size, size))
    alpha = rng.random((B, 1, size, size))
    fgc, bgc = rng.random((B, 3, size, size)), rng.random((B, 3, size, size))
    image = (alpha * fgc + (1 - alpha) * bgc)
    unknown = np.ones((B, 1, size, size))
    unknown[:, :, :2, :2] = 0.0
    fg_ext = np.ones_like(unknown)
    bg_ext = np.ones_like(unknown)
    batch = (x, alpha, image, fgc, bgc, unknown, fg_ext, bg_ext)
    cfg = training.TrainConfig(use_scores=False, use_discriminator=True,
                               use_gradient=True)

    _, grads = training.matting_step(net, batch, cfg, disc=disc)

    def total():
        report, _ = training.matting_step(net, batch, cfg, disc=disc,
                                          with_grads=False)
        return report.total

    worst = 0.0
    for name in sorted(net.params):
        arr = net.params[name]
        worst = max(worst, fd_max_rel_error(total, arr, grads[name], step=1e-5,
                                            max_coords=coords_per_tensor,
                                            seed=seed))
    return worst
