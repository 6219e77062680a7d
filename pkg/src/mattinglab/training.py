"""Training loops, checkpointing, and the ablation driver.

Three trainers share the machinery: the patch classifier (RGB + trimap
crops), its discriminator variant (alpha-only crops), and the matting
network optimized under the combined loss with a frozen discriminator.
Single-worker runs are bit-reproducible for a fixed seed; checkpoints round
trip bit-exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import imaging, losses, metrics, network, semantics, synth
from .autodiff import GraphError, backward, evaluate

CKPT_MAGIC = b"SIMC"
CKPT_VERSION = 1

SCORE_FILE = "scores.f32"


class CheckpointError(ValueError):
    pass


class TrainError(ValueError):
    pass


@dataclass
class TrainConfig:
    seed: int = 0
    batch_size: int = 8
    steps: int = 2000
    lr: float = 1e-3
    optimizer: str = "adam"          # "adam" or "sgd"
    momentum: float = 0.9
    use_scores: bool = True          # S: semantic trimap input
    use_discriminator: bool = True   # D: classification + feature losses
    use_gradient: bool = True        # G: gradient + exclusion losses
    desk_scale: float = 0.25         # maps the full-scale crop protocol down
    manifest: str = ""
    canonical: int = 80              # classifier input side = matting crop side
    base_width: int = 16
    merge_prob: float = 0.25
    eval_batches: int = 30           # held-out accuracy crops = batches * batch

    @property
    def crop_sizes(self):
        return tuple(int(round(s * self.desk_scale)) for s in (320, 480, 640))

    @property
    def classifier_crop_range(self):
        return (int(round(160 * self.desk_scale)), int(round(640 * self.desk_scale)))

    @property
    def toggles(self):
        return {"S": self.use_scores, "D": self.use_discriminator,
                "G": self.use_gradient}

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


ABLATION_ROWS = (
    ("basic", dict(use_scores=False, use_discriminator=False, use_gradient=False)),
    ("+S", dict(use_scores=True, use_discriminator=False, use_gradient=False)),
    ("+S+D", dict(use_scores=True, use_discriminator=True, use_gradient=False)),
    ("+S+D+G", dict(use_scores=True, use_discriminator=True, use_gradient=True)),
)


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

class Optimizer:
    def __init__(self, params, cfg):
        self.kind = cfg.optimizer
        self.base_lr = cfg.lr
        self.total = max(cfg.steps, 1)
        self.momentum = cfg.momentum
        if self.kind not in ("adam", "sgd"):
            raise TrainError(f"unknown optimizer {self.kind!r}")
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()} if self.kind == "adam" else None
        self.t = 0

    def lr(self):
        return self.base_lr * 0.5 * (1.0 + np.cos(np.pi * self.t / self.total))

    def step(self, params, grads):
        lr = self.lr()
        self.t += 1
        if self.kind == "sgd":
            for k, p in params.items():
                self.m[k] = self.momentum * self.m[k] + grads[k]
                p -= (lr * self.m[k]).astype(p.dtype, copy=False)
            return
        b1, b2, eps = 0.9, 0.999, 1e-8
        for k, p in params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * (g * g)
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            p -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.dtype, copy=False)


# ---------------------------------------------------------------------------
# checkpoints: magic "SIMC", version, JSON header, raw parameter bytes
# ---------------------------------------------------------------------------

def save_checkpoint(path, graph, step=0, config=None):
    arrays = []
    blob = bytearray()
    for name in sorted(graph.params):
        v = np.ascontiguousarray(graph.params[name])
        arrays.append({"name": name, "dtype": v.dtype.str, "shape": list(v.shape),
                       "offset": len(blob), "nbytes": v.nbytes})
        blob.extend(v.tobytes(order="C"))
    header = json.dumps({
        "meta": getattr(graph, "meta", {}),
        "dtype": graph.dtype.str,
        "step": int(step),
        "config": config or {},
        "arrays": arrays,
    }, sort_keys=True).encode()
    payload = (CKPT_MAGIC + CKPT_VERSION.to_bytes(4, "little")
               + len(header).to_bytes(8, "little") + header + bytes(blob))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
    return path


@dataclass
class Checkpoint:
    meta: dict
    dtype: str
    step: int
    config: dict
    params: dict


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != CKPT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic: {raw[:4]!r} != {CKPT_MAGIC!r}")
    version = int.from_bytes(raw[4:8], "little")
    if version != CKPT_VERSION:
        raise CheckpointError(f"checkpoint version {version}, reader supports {CKPT_VERSION}")
    hlen = int.from_bytes(raw[8:16], "little")
    if len(raw) < 16 + hlen:
        raise CheckpointError("truncated checkpoint header")
    header = json.loads(raw[16:16 + hlen].decode())
    blob = raw[16 + hlen:]
    expected = sum(a["nbytes"] for a in header["arrays"])
    if len(blob) != expected:
        raise CheckpointError(f"truncated checkpoint: {len(blob)} data bytes, expected {expected}")
    params = {}
    for a in header["arrays"]:
        buf = blob[a["offset"]: a["offset"] + a["nbytes"]]
        params[a["name"]] = np.frombuffer(buf, dtype=a["dtype"]).reshape(a["shape"]).copy()
    return Checkpoint(meta=header["meta"], dtype=header["dtype"], step=header["step"],
                      config=header["config"], params=params)


def load_params(graph, params):
    """Install checkpoint parameters into a freshly built graph; any
    name/shape difference is rejected with the full diff."""
    diffs = []
    for name in sorted(set(graph.params) | set(params)):
        a = graph.params.get(name)
        b = params.get(name)
        if a is None:
            diffs.append(f"unexpected parameter {name} {b.shape}")
        elif b is None:
            diffs.append(f"missing parameter {name} {a.shape}")
        elif tuple(a.shape) != tuple(b.shape):
            diffs.append(f"{name}: checkpoint {tuple(b.shape)} vs graph {tuple(a.shape)}")
    if diffs:
        raise CheckpointError("parameter mismatch:\n  " + "\n  ".join(diffs))
    for name, v in params.items():
        graph.params[name] = np.ascontiguousarray(v, dtype=graph.dtype)


def restore_graph(ckpt, dtype=np.float32):
    """Rebuild the network a checkpoint was saved from and load its weights."""
    meta = ckpt.meta
    kind = meta.get("kind")
    if kind == "classifier":
        g = semantics.build_classifier(meta["n_classes"], in_channels=meta["in_channels"],
                                       dtype=dtype, seed=meta.get("seed", 0))
    elif kind == "matting":
        g = network.build_matting_net(meta["n_scores"], base=meta["base"],
                                      head_hidden=meta.get("head_hidden"),
                                      dtype=dtype, seed=meta.get("seed", 0),
                                      with_scores=meta["with_scores"])
    else:
        raise CheckpointError(f"unknown graph kind {kind!r}")
    load_params(g, ckpt.params)
    return g


# ---------------------------------------------------------------------------
# crop sampling for classifier / discriminator training
# ---------------------------------------------------------------------------

class PatchSampler:
    """Square crops centered on unknown pixels, resized to the canonical
    side. ``alpha_only=True`` yields 1-channel alpha crops (discriminator);
    otherwise 4-channel image+trimap crops.

    ``augment=True`` adds flips, color jitter, and freshly composited
    backgrounds so the classifier cannot key on per-sample palettes.
    """

    def __init__(self, items, cfg, alpha_only=False, augment=False):
        self.items = items
        self.cfg = cfg
        self.alpha_only = alpha_only
        self.augment = augment
        self.centers = []
        for _, s in items:
            pts = np.argwhere(s.regions.unknown)
            if len(pts) == 0:
                pts = np.argwhere(np.ones_like(s.alpha, dtype=bool))
            self.centers.append(pts)

    def crop(self, rng, idx=None):
        if idx is None:
            idx = int(rng.integers(len(self.items)))
        _, s = self.items[idx]
        h, w = s.alpha.shape
        lo, hi = self.cfg.classifier_crop_range
        side = int(rng.integers(lo, min(hi, h, w) + 1))
        cy, cx = self.centers[idx][int(rng.integers(len(self.centers[idx])))]
        y = int(np.clip(cy - side // 2, 0, h - side))
        x = int(np.clip(cx - side // 2, 0, w - side))
        c = self.cfg.canonical
        if self.alpha_only:
            patch = imaging.resize_bilinear(s.alpha[None, y:y + side, x:x + side], c, c)
            if self.augment and rng.random() < 0.5:
                patch = patch[:, :, ::-1]
            return np.ascontiguousarray(patch, dtype=np.float32), s.class_label
        img = s.image[:, y:y + side, x:x + side]
        if self.augment and rng.random() < 0.7:
            fgc = s.fg_color[:, y:y + side, x:x + side]
            a = s.alpha[y:y + side, x:x + side]
            bg = synth.gen_background(side, int(rng.integers(2 ** 31)),
                                      avoid_color=synth.mean_foreground_color(fgc, a))
            img = synth.composite(fgc, bg, a)
        img = imaging.resize_bilinear(img, c, c)
        tri = imaging.resize_nearest(s.regions.encode()[y:y + side, x:x + side], c, c)
        if self.augment:
            if rng.random() < 0.5:
                img = img[:, :, ::-1]
                tri = tri[:, ::-1]
            gain = rng.uniform(0.85, 1.15, 3).astype(np.float32)[:, None, None]
            off = rng.uniform(-0.08, 0.08, 3).astype(np.float32)[:, None, None]
            img = np.clip(img * gain + off, 0.0, 1.0)
        patch = np.concatenate([img, tri[None]], axis=0)
        return np.ascontiguousarray(patch, dtype=np.float32), s.class_label

    def batch(self, rng, n):
        crops, labels = zip(*(self.crop(rng) for _ in range(n)))
        return np.stack(crops), np.asarray(labels)


def _one_hot(labels, n):
    out = np.zeros((len(labels), n), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


@dataclass
class PatchTrainResult:
    graph: object
    accuracy: float
    accuracy_curve: list
    history: list


def _train_patch_net(dataset_dir, cfg, alpha_only, log_path=None):
    manifest, train_items = synth.load_split(dataset_dir, "train")
    _, test_items = synth.load_split(dataset_dir, "test")
    names = manifest["classes"]
    n = len(names)
    present = {s.class_label for _, s in train_items}
    missing = set(range(n)) - present
    if missing:
        raise TrainError(f"classes absent from training set: {sorted(missing)}")

    in_ch = 1 if alpha_only else 4
    g = semantics.build_classifier(n, in_channels=in_ch, seed=cfg.seed)
    ss = np.random.SeedSequence([17, cfg.seed, in_ch])
    data_rng, eval_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    sampler = PatchSampler(train_items, cfg, alpha_only=alpha_only, augment=True)
    test_sampler = PatchSampler(test_items, cfg, alpha_only=alpha_only)
    eval_set = [test_sampler.batch(eval_rng, cfg.batch_size)
                for _ in range(cfg.eval_batches)]

    opt = Optimizer(g.params, cfg)
    history, curve = [], []
    logf = open(log_path, "w") if log_path else None
    try:
        for step in range(cfg.steps):
            batch, labels = sampler.batch(data_rng, cfg.batch_size)
            outs = evaluate(g, {"patch": batch})
            loss, glog = losses.classification_loss(outs["logits"], _one_hot(labels, n))
            grads = backward(g, {"logits": glog.astype(np.float32)})
            opt.step(g.params, grads)
            rec = {"step": step, "l_c": loss, "total": loss}
            history.append(rec)
            if logf:
                logf.write(json.dumps(rec, sort_keys=True) + "\n")
            if (step + 1) % max(cfg.steps // 10, 1) == 0 or step == cfg.steps - 1:
                acc = _patch_accuracy(g, eval_set)
                curve.append({"step": step, "accuracy": acc})
    finally:
        if logf:
            logf.close()
    return PatchTrainResult(graph=g, accuracy=curve[-1]["accuracy"],
                            accuracy_curve=curve, history=history)


def _patch_accuracy(g, eval_set):
    hit = tot = 0
    for batch, labels in eval_set:
        outs = evaluate(g, {"patch": batch})
        hit += int((outs["logits"].argmax(axis=1) == labels).sum())
        tot += len(labels)
    return hit / tot


def train_classifier(dataset_dir, cfg, log_path=None):
    """Semantic-trimap patch classifier on image+trimap crops."""
    return _train_patch_net(dataset_dir, cfg, alpha_only=False, log_path=log_path)


def train_discriminator(dataset_dir, cfg, log_path=None):
    """Discriminator variant: same architecture on ground-truth alpha crops."""
    return _train_patch_net(dataset_dir, cfg, alpha_only=True, log_path=log_path)


# ---------------------------------------------------------------------------
# semantic score-map cache
# ---------------------------------------------------------------------------

def ensure_score_maps(dataset_dir, classifier, split=None, force=False,
                      canonical=None):
    """Build (or reuse) per-sample class score maps under each sample dir."""
    root = Path(dataset_dir)
    manifest = synth.load_manifest(root)
    canonical = canonical or semantics.CANONICAL_PATCH
    built = 0
    for entry in manifest["samples"]:
        if split is not None and entry["split"] != split:
            continue
        spath = root / entry["id"] / SCORE_FILE
        if spath.exists() and not force:
            continue
        sample = synth.load_sample(root / entry["id"])
        st = semantics.build_semantic_trimap(sample.image, sample.regions, classifier,
                                             canonical=canonical)
        semantics.save_score_maps(spath, st.scores, manifest["classes"])
        built += 1
    return built


def _load_scores(dataset_dir, sample_id, n):
    spath = Path(dataset_dir) / sample_id / SCORE_FILE
    if not spath.exists():
        return None
    scores, _ = semantics.load_score_maps(spath)
    if scores.shape[0] != n:
        raise TrainError(f"score maps for {sample_id} have {scores.shape[0]} classes, expected {n}")
    return scores


def renormalize_scores(scores, unknown, tol=0.5):
    """Mask transformed score planes onto a fresh unknown region: renormalize
    where enough mass survived the warp, fall back to uniform where the new
    unknown band has no information, zero elsewhere."""
    n = scores.shape[0]
    total = scores.sum(axis=0)
    out = np.zeros_like(scores, dtype=np.float32)
    u = np.asarray(unknown, dtype=bool)
    good = u & (total > tol)
    out[:, good] = scores[:, good] / total[good]
    rest = u & ~good
    out[:, rest] = 1.0 / n
    return out


# ---------------------------------------------------------------------------
# matting trainer
# ---------------------------------------------------------------------------

@dataclass
class MattingTrainResult:
    graph: object
    history: list
    report: metrics.MetricReport


def _matting_batch(train_items, score_cache, cfg, n_classes, rng, step):
    """One augmented, online-composited training batch."""
    xs, alphas, images, fgs, bgs, unknowns, fgexts, bgexts = ([] for _ in range(8))
    c = cfg.canonical
    for _ in range(cfg.batch_size):
        idx = int(rng.integers(len(train_items)))
        sid, sample = train_items[idx]
        merge = None
        if cfg.merge_prob > 0 and rng.random() < cfg.merge_prob:
            jdx = int(rng.integers(len(train_items)))
            if jdx != idx:
                merge = train_items[jdx][1]
        params = synth.random_augment_params(rng, crop_sizes=cfg.crop_sizes,
                                             out_size=c, merge_candidate=merge,
                                             merge_prob=1.0,
                                             source_size=min(sample.alpha.shape))
        extras = None
        if cfg.use_scores:
            scores = score_cache.get(sid)
            if scores is None:
                raise TrainError(f"no cached score maps for {sid}")
            extras = {"scores": scores}
        seed = int(rng.integers(2 ** 31))
        out = synth.augment(sample, params, seed=seed, extra_planes=extras)
        aug, extras = out if extras is not None else (out, None)
        bg = synth.gen_background(c, int(rng.integers(2 ** 31)),
                                  avoid_color=synth.mean_foreground_color(
                                      aug.fg_color, aug.alpha))
        aug = synth.with_background(aug, bg)

        tri = aug.regions.encode()
        if cfg.use_scores:
            sc = renormalize_scores(extras["scores"], aug.regions.unknown)
            x = np.concatenate([aug.image, tri[None], sc], axis=0)
        else:
            x = np.concatenate([aug.image, tri[None]], axis=0)
        xs.append(x)
        alphas.append(aug.alpha[None])
        images.append(aug.image)
        fgs.append(aug.fg_color)
        bgs.append(aug.bg_color)
        unknowns.append(aug.regions.unknown[None].astype(np.float32))
        fgexts.append(aug.regions.fg_extended[None].astype(np.float32))
        bgexts.append(aug.regions.bg_extended[None].astype(np.float32))
    return (np.stack(xs), np.stack(alphas), np.stack(images), np.stack(fgs),
            np.stack(bgs), np.stack(unknowns), np.stack(fgexts), np.stack(bgexts))


def matting_step(net, batch, cfg, disc=None, with_grads=True):
    """Forward, combined loss, gradients into the net parameters.

    Returns ``(LossReport, param_grads)``; ``with_grads=False`` skips the
    backward passes and returns ``(LossReport, None)``.
    """
    x, alpha, image, fgc, bgc, unknown, fg_ext, bg_ext = batch
    pred = network.matting_forward(net, x)

    levels = min(losses.PYRAMID_LEVELS, int(np.log2(min(alpha.shape[2:]))))
    l_a, l_lap, g_alpha = losses.alpha_loss(pred.alpha, alpha, image, fgc, bgc,
                                            unknown, levels=levels)
    l_fb, g_fg, g_bg = losses.fb_loss(pred.fg, pred.bg, fgc, bgc, fg_ext, bg_ext)
    g_fg = losses.GROUP_WEIGHT * g_fg
    g_bg = losses.GROUP_WEIGHT * g_bg
    g_lam1 = np.zeros_like(pred.lam1)
    g_lam2 = np.zeros_like(pred.lam2)

    l_g = l_e = 0.0
    if cfg.use_gradient:
        l_g, ga, gf, gb, gl1, gl2 = losses.gradient_loss(
            pred.alpha, pred.fg, pred.bg, pred.lam1, pred.lam2, image, unknown)
        l_e, ea, ef, eb = losses.exclusion_loss(pred.alpha, pred.fg, pred.bg, unknown)
        g_alpha = g_alpha + losses.GROUP_WEIGHT * (ga + ea)
        g_fg = g_fg + losses.GROUP_WEIGHT * (gf + ef)
        g_bg = g_bg + losses.GROUP_WEIGHT * (gb + eb)
        g_lam1 = losses.GROUP_WEIGHT * gl1
        g_lam2 = losses.GROUP_WEIGHT * gl2

    l_c = l_f = 0.0
    if cfg.use_discriminator:
        if disc is None:
            raise TrainError("discriminator losses enabled but no discriminator given")
        ref = semantics.classifier_forward(disc, alpha.astype(disc.dtype))
        target = ref.probs
        out_hat = semantics.classifier_forward(disc, pred.alpha)
        l_c, g_logits = losses.classification_loss(out_hat.logits, target)
        l_f, g_feats = losses.feature_loss(out_hat.features, ref.features)
        if with_grads:
            disc_grads = {"logits": (losses.CLS_WEIGHT * g_logits).astype(disc.dtype)}
            for tap, gfk in zip(semantics.FEATURE_TAPS, g_feats):
                disc_grads[tap] = (losses.GROUP_WEIGHT * gfk).astype(disc.dtype)
            din = backward(disc, disc_grads)
            g_alpha = g_alpha + din["patch"]

    report = losses.combine(l_alpha=l_a, l_fb=l_fb, l_c=l_c, l_f=l_f,
                            l_g=l_g, l_e=l_e, l_lap=l_lap)
    if not with_grads:
        return report, None
    grads = backward(net, {
        "alpha": g_alpha.astype(net.dtype),
        "fg": g_fg.astype(net.dtype),
        "bg": g_bg.astype(net.dtype),
        "lam1": g_lam1.astype(net.dtype),
        "lam2": g_lam2.astype(net.dtype),
    })
    return report, grads


def evaluate_matting(net, test_items, cfg, classifier=None, score_cache=None):
    """Held-out metric report: full-size forward, trimap-clamped alpha,
    all four metrics over the unknown region."""
    per_sample, labels = [], []
    for sid, s in test_items:
        tri = s.regions.encode()
        if cfg.use_scores:
            scores = score_cache.get(sid) if score_cache else None
            if scores is None:
                st = semantics.build_semantic_trimap(s.image, s.regions, classifier,
                                                     canonical=cfg.canonical)
                scores = st.scores
            x = np.concatenate([s.image, tri[None], scores], axis=0)
        else:
            x = np.concatenate([s.image, tri[None]], axis=0)
        pred = network.matting_forward(net, x[None])
        alpha = network.blend_with_trimap(pred.alpha[0, 0], s.regions)
        per_sample.append(metrics.evaluate_pair(alpha, s.alpha, s.regions.unknown))
        labels.append(s.class_label)
    return per_sample, labels


def train_matting(dataset_dir, cfg, classifier=None, discriminator=None,
                  log_path=None, eval_report=True):
    """Train the matting net per the configured toggle set and evaluate on
    the held-out split."""
    if cfg.use_scores and classifier is None:
        raise TrainError("semantic trimap enabled but no classifier given")
    if cfg.use_discriminator and discriminator is None:
        raise TrainError("discriminator losses enabled but no discriminator given")

    manifest, train_items = synth.load_split(dataset_dir, "train")
    _, test_items = synth.load_split(dataset_dir, "test")
    names = manifest["classes"]
    n = len(names)

    score_cache = {}
    if cfg.use_scores:
        ensure_score_maps(dataset_dir, classifier, canonical=cfg.canonical)
        for sid, _ in train_items + test_items:
            score_cache[sid] = _load_scores(dataset_dir, sid, n)

    disc_before = None
    if cfg.use_discriminator:
        disc_before = {k: v.copy() for k, v in discriminator.params.items()}

    net = network.build_matting_net(n if cfg.use_scores else 0, base=cfg.base_width,
                                    seed=cfg.seed, with_scores=cfg.use_scores)
    rng = np.random.default_rng(np.random.SeedSequence([23, cfg.seed]))
    opt = Optimizer(net.params, cfg)

    history = []
    logf = open(log_path, "w") if log_path else None
    try:
        for step in range(cfg.steps):
            batch = _matting_batch(train_items, score_cache, cfg, n, rng, step)
            report, grads = matting_step(net, batch, cfg, disc=discriminator)
            opt.step(net.params, grads)
            rec = {"step": step, **report.as_dict()}
            history.append(rec)
            if logf:
                logf.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if logf:
            logf.close()

    if cfg.use_discriminator:
        for k, v in discriminator.params.items():
            if not np.array_equal(v, disc_before[k]):
                raise TrainError("discriminator parameters changed during matting training")

    report = None
    if eval_report:
        per_sample, labels = evaluate_matting(net, test_items, cfg,
                                              classifier=classifier,
                                              score_cache=score_cache)
        report = metrics.class_report(per_sample, labels, names)
    return MattingTrainResult(graph=net, history=history, report=report)


# ---------------------------------------------------------------------------
# ablation driver
# ---------------------------------------------------------------------------

def run_ablation(dataset_dir, cfg, classifier, discriminator, seeds=(0, 1, 2),
                 log_dir=None):
    """Four toggle rows x seeds; per-row median of each metric over seeds."""
    table = {}
    for row_name, toggles in ABLATION_ROWS:
        runs = []
        for seed in seeds:
            row_cfg = replace(cfg, seed=seed, **toggles)
            log_path = None
            if log_dir:
                safe = row_name.replace("+", "p")
                log_path = Path(log_dir) / f"ablate_{safe}_seed{seed}.jsonl"
            res = train_matting(dataset_dir, row_cfg, classifier=classifier,
                                discriminator=discriminator, log_path=log_path)
            runs.append(res.report.overall)
        med = {k: float(np.median([r[k] for r in runs])) for k in metrics.METRIC_KEYS}
        table[row_name] = {"median": med, "runs": runs}
    return table
