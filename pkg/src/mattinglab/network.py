"""Encoder-decoder matting network.

Fully convolutional: a full-resolution stem plus three stride-2 encoder
stages (overall stride 8, dilation 2 in the deepest stage), a lightweight
atrous pyramid over the bottleneck, three upsample+skip decoder stages, and
four two-conv prediction heads producing alpha, foreground, background, and
the two content-sensitive weight planes. Output ranges are fixed by the head
activations: alpha/F/B and lambda2 sigmoid, lambda1 tanh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import GraphError, OpGraph, evaluate


@dataclass
class Prediction:
    alpha: np.ndarray     # (B,1,H,W) in [0,1]
    fg: np.ndarray        # (B,3,H,W) in [0,1]
    bg: np.ndarray        # (B,3,H,W) in [0,1]
    lam1: np.ndarray      # (B,1,H,W) in [-1,1]
    lam2: np.ndarray      # (B,1,H,W) in [0,1]


def build_matting_net(n_scores, base=16, head_hidden=None, dtype=np.float32,
                      seed=0, with_scores=True):
    """Graph over (B, 3+1+n_scores, H, W) inputs, H and W divisible by 8.

    ``with_scores=False`` builds the conventional-trimap variant (the
    ablation baseline) whose input is just RGB + trimap. ``base`` scales the
    channel widths; parameter shapes are independent of the input size.
    """
    in_channels = 4 + (n_scores if with_scores else 0)
    head_hidden = head_hidden or max(3 * base // 4, 8)
    c1, c2, c3 = base, 2 * base, 4 * base
    ck = base  # per-branch pyramid width
    rng = np.random.default_rng(np.random.SeedSequence([11, seed, in_channels, base]))
    g = OpGraph(dtype=dtype)
    x = g.input("x", channels=in_channels)

    def conv(tag, src, cin, cout, stride=1, dilation=1, act="relu"):
        w = g.parameter(f"{tag}.w", shape=(cout, cin, 3, 3), init="he", rng=rng)
        b = g.parameter(f"{tag}.b", shape=(cout,), init="zeros")
        h = g.conv2d(src, w, b, stride=stride, dilation=dilation)
        if act == "relu":
            return g.relu(h)
        return h

    e0 = conv("stem", x, in_channels, c1)
    h = conv("enc1a", e0, c1, c1, stride=2)
    e1 = conv("enc1b", h, c1, c1)
    h = conv("enc2a", e1, c1, c2, stride=2)
    e2 = conv("enc2b", h, c2, c2)
    h = conv("enc3a", e2, c2, c3, stride=2, dilation=2)
    e3 = conv("enc3b", h, c3, c3, dilation=2)

    branches = [conv(f"aspp_d{d}", e3, c3, ck, dilation=d) for d in (1, 2, 4)]
    w1 = g.parameter("aspp_1x1.w", shape=(ck, c3, 1, 1), init="he", rng=rng)
    b1 = g.parameter("aspp_1x1.b", shape=(ck,), init="zeros")
    branches.append(g.relu(g.conv2d(e3, w1, b1)))
    bottleneck = g.concat(*branches)

    d2 = conv("dec2", g.concat(g.upsample2(bottleneck), e2), 4 * ck + c2, 3 * base)
    d1 = conv("dec1", g.concat(g.upsample2(d2), e1), 3 * base + c1, 2 * base)
    d0 = conv("dec0", g.concat(g.upsample2(d1), e0), 2 * base + c1, base)

    def head(tag, cout):
        h = conv(f"{tag}_head1", d0, base, head_hidden)
        return conv(f"{tag}_head2", h, head_hidden, cout, act="none")

    g.output("alpha", g.sigmoid(head("alpha", 1)))
    g.output("fg", g.sigmoid(head("fg", 3)))
    g.output("bg", g.sigmoid(head("bg", 3)))
    lam = head("lam", 2)
    g.output("lam1", g.tanh(g.split(lam, 0, 1)))
    g.output("lam2", g.sigmoid(g.split(lam, 1, 2)))

    g.meta = {"kind": "matting", "n_scores": n_scores, "base": base,
              "head_hidden": head_hidden, "with_scores": with_scores,
              "seed": seed}
    return g


def assemble_input(image, semantic_trimap, with_scores=True):
    """Stack RGB + trimap channel (+ class score planes) for one sample."""
    image = np.asarray(image, dtype=np.float32)
    if with_scores:
        return np.concatenate([image, semantic_trimap.stacked()], axis=0)
    return np.concatenate([image, semantic_trimap.trimap[None]], axis=0)


def matting_forward(graph, batch):
    """Evaluate the net on a (B,C,H,W) input block; dims must be /8."""
    batch = np.asarray(batch)
    if batch.ndim != 4:
        raise GraphError(f"expected (B,C,H,W) input, got {batch.shape}")
    h, w = batch.shape[2:]
    if h % 8 or w % 8:
        raise GraphError(f"input dims must be divisible by 8, got {h}x{w}")
    outs = evaluate(graph, {"x": batch})
    return Prediction(alpha=outs["alpha"], fg=outs["fg"], bg=outs["bg"],
                      lam1=outs["lam1"], lam2=outs["lam2"])


def blend_with_trimap(alpha_hat, regions):
    """Clamp the prediction to the trimap: 1 on fg, 0 on bg, alpha_hat on
    the unknown region."""
    alpha_hat = np.asarray(alpha_hat)
    out = np.where(regions.unknown, alpha_hat, 0.0)
    out = np.where(regions.fg, 1.0, out)
    return out.astype(alpha_hat.dtype, copy=False)
