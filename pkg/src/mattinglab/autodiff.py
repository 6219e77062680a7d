"""Minimal reverse-mode autodiff over numpy arrays.

Tensors are plain ``numpy.ndarray`` values in ``(batch, channels, height,
width)`` layout for feature maps and ``(batch, features)`` for vectors.
An :class:`OpGraph` is a static, acyclic list of operator applications over
named inputs and named parameters; :func:`evaluate` runs a forward pass,
:func:`backward` accumulates gradients for every parameter and input, and
:func:`grad_check` compares analytic gradients against central finite
differences (64-bit graphs only).

The operator set is deliberately small: conv2d (odd kernel, stride 1 or 2,
same padding, dilation), relu, tanh, sigmoid, 2x2 max pooling, global
average pooling, fully-connected, bilinear 2x upsampling, channel
concat/split, elementwise add/sub/mul, scalar scaling, softmax, and a
spatial forward-difference gradient. Kinked ops (relu, maxpool) take the
left/first-argument subgradient branch at exact kinks and ties.
"""

from __future__ import annotations

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs, shape mismatches, or misuse."""


def he_uniform(shape, fan_in, rng):
    """Fan-in-scaled uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in))."""
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def assert_finite(arr, what="tensor"):
    if not np.all(np.isfinite(arr)):
        raise GraphError(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# operator forward/backward kernels
# ---------------------------------------------------------------------------

def _same_pad(n, k, stride, dilation):
    eff = dilation * (k - 1) + 1
    out = -(-n // stride)
    total = max((out - 1) * stride + eff - n, 0)
    return total // 2, total - total // 2, out


def _conv_patches(xp, kh, kw, stride, dilation, oh, ow):
    # zero-copy sliding view: patches[b,c,ky,kx,oy,ox]
    sb, sc, sh, sw = xp.strides
    shape = (xp.shape[0], xp.shape[1], kh, kw, oh, ow)
    strides = (sb, sc, sh * dilation, sw * dilation, sh * stride, sw * stride)
    return np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides)


def _conv2d_fwd(ctx, x, w, b, stride, dilation):
    if x.ndim != 4 or w.ndim != 4:
        raise GraphError("conv2d expects a (B,C,H,W) input and (OC,IC,KH,KW) weights")
    oc, ic, kh, kw = w.shape
    if x.shape[1] != ic:
        raise GraphError(f"conv2d channel mismatch: input has {x.shape[1]}, weights expect {ic}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise GraphError("conv2d kernel must be odd")
    if stride not in (1, 2):
        raise GraphError("conv2d stride must be 1 or 2")
    if dilation < 1:
        raise GraphError("conv2d dilation must be >= 1")
    if b.shape != (oc,):
        raise GraphError(f"conv2d bias shape {b.shape} != ({oc},)")
    B, _, H, W = x.shape
    pt, pb, oh = _same_pad(H, kh, stride, dilation)
    pl, pr, ow = _same_pad(W, kw, stride, dilation)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    patches = _conv_patches(xp, kh, kw, stride, dilation, oh, ow)
    out = np.tensordot(w, patches, axes=([1, 2, 3], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    out += b[None, :, None, None]
    ctx.update(pad=(pt, pb, pl, pr), out_hw=(oh, ow))
    return out


def _conv2d_bwd(ctx, g, x, w, b, stride, dilation):
    oc, ic, kh, kw = w.shape
    B, _, H, W = x.shape
    pt, pb, pl, pr = ctx["pad"]
    oh, ow = ctx["out_hw"]
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    patches = _conv_patches(xp, kh, kw, stride, dilation, oh, ow)
    dw = np.tensordot(g, patches, axes=([0, 2, 3], [0, 4, 5]))
    db = g.sum(axis=(0, 2, 3))
    dxp = np.zeros_like(xp)
    for ky in range(kh):
        for kx in range(kw):
            # t[b,c,oy,ox] = sum_oc g[b,oc,oy,ox] * w[oc,c,ky,kx]
            t = np.tensordot(g, w[:, :, ky, kx], axes=([1], [0]))
            t = t.transpose(0, 3, 1, 2)
            dxp[:, :, ky * dilation: ky * dilation + oh * stride: stride,
                kx * dilation: kx * dilation + ow * stride: stride] += t
    dx = dxp[:, :, pt: pt + H, pl: pl + W]
    return dx, dw, db


def _relu_fwd(ctx, x):
    return np.maximum(x, 0)


def _relu_bwd(ctx, g, x):
    return (g * (x > 0),)


def _tanh_fwd(ctx, x):
    out = np.tanh(x)
    ctx["out"] = out
    return out


def _tanh_bwd(ctx, g, x):
    y = ctx["out"]
    return (g * (1.0 - y * y),)


def _sigmoid_fwd(ctx, x):
    out = 1.0 / (1.0 + np.exp(-x))
    ctx["out"] = out
    return out


def _sigmoid_bwd(ctx, g, x):
    y = ctx["out"]
    return (g * y * (1.0 - y),)


def _maxpool2_fwd(ctx, x):
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise GraphError(f"maxpool2 needs even spatial dims, got {H}x{W}")
    win = x.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(B, C, H // 2, W // 2, 4)
    idx = np.argmax(win, axis=-1)  # first max in scan order at ties
    ctx["idx"] = idx
    return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]


def _maxpool2_bwd(ctx, g, x):
    B, C, H, W = x.shape
    idx = ctx["idx"]
    dwin = np.zeros((B, C, H // 2, W // 2, 4), dtype=g.dtype)
    np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
    dx = dwin.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return (dx.reshape(B, C, H, W),)


def _gap_fwd(ctx, x):
    if x.ndim != 4:
        raise GraphError("global_avg_pool expects a (B,C,H,W) input")
    ctx["hw"] = x.shape[2:]
    return x.mean(axis=(2, 3))


def _gap_bwd(ctx, g, x):
    H, W = ctx["hw"]
    return (np.broadcast_to(g[:, :, None, None] / (H * W), x.shape).copy(),)


def _fc_fwd(ctx, x, w, b):
    if x.ndim != 2:
        raise GraphError("fc expects a (B,K) input (use flatten/global_avg_pool first)")
    if x.shape[1] != w.shape[0]:
        raise GraphError(f"fc size mismatch: input K={x.shape[1]}, weights expect {w.shape[0]}")
    return x @ w + b


def _fc_bwd(ctx, g, x, w, b):
    return g @ w.T, x.T @ g, g.sum(axis=0)


def _flatten_fwd(ctx, x):
    ctx["shape"] = x.shape
    return x.reshape(x.shape[0], -1)


def _flatten_bwd(ctx, g, x):
    return (g.reshape(ctx["shape"]),)


def _up_axis(x, axis):
    # bilinear x2 along one axis, half-pixel centers, clamped edges
    x = np.moveaxis(x, axis, -1)
    left = np.concatenate([x[..., :1], x[..., :-1]], axis=-1)
    right = np.concatenate([x[..., 1:], x[..., -1:]], axis=-1)
    y = np.empty(x.shape[:-1] + (2 * x.shape[-1],), dtype=x.dtype)
    y[..., 0::2] = 0.75 * x + 0.25 * left
    y[..., 1::2] = 0.75 * x + 0.25 * right
    return np.moveaxis(y, -1, axis)


def _up_axis_adj(g, axis):
    g = np.moveaxis(g, axis, -1)
    ge, go = g[..., 0::2], g[..., 1::2]
    dx = 0.75 * (ge + go)
    dx[..., 1:] += 0.25 * go[..., :-1]    # odd outputs feed the next cell
    dx[..., -1] += 0.25 * go[..., -1]     # clamped at the far edge
    dx[..., :-1] += 0.25 * ge[..., 1:]    # even outputs feed the previous cell
    dx[..., 0] += 0.25 * ge[..., 0]       # clamped at the near edge
    return np.moveaxis(dx, -1, axis)


def _upsample2_fwd(ctx, x):
    if x.ndim != 4:
        raise GraphError("upsample2 expects a (B,C,H,W) input")
    return _up_axis(_up_axis(x, 2), 3)


def _upsample2_bwd(ctx, g, x):
    return (_up_axis_adj(_up_axis_adj(g, 3), 2),)


def _concat_fwd(ctx, *xs):
    if any(x.ndim != xs[0].ndim for x in xs):
        raise GraphError("concat inputs must share rank")
    ctx["sizes"] = [x.shape[1] for x in xs]
    return np.concatenate(xs, axis=1)


def _concat_bwd(ctx, g, *xs):
    splits = np.cumsum(ctx["sizes"])[:-1]
    return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=1))


def _split_fwd(ctx, x, start, stop):
    if not (0 <= start < stop <= x.shape[1]):
        raise GraphError(f"split range [{start},{stop}) outside {x.shape[1]} channels")
    return np.ascontiguousarray(x[:, start:stop])


def _split_bwd(ctx, g, x, start, stop):
    dx = np.zeros_like(x)
    dx[:, start:stop] = g
    return (dx,)


def _binary_check(a, b, op):
    if a.shape != b.shape:
        raise GraphError(f"{op} requires equal shapes, got {a.shape} vs {b.shape}")


def _add_fwd(ctx, a, b):
    _binary_check(a, b, "add")
    return a + b


def _add_bwd(ctx, g, a, b):
    return g, g.copy()


def _sub_fwd(ctx, a, b):
    _binary_check(a, b, "sub")
    return a - b


def _sub_bwd(ctx, g, a, b):
    return g, -g


def _mul_fwd(ctx, a, b):
    _binary_check(a, b, "mul")
    return a * b


def _mul_bwd(ctx, g, a, b):
    return g * b, g * a


def _scale_fwd(ctx, x, factor):
    return x * factor


def _scale_bwd(ctx, g, x, factor):
    return (g * factor,)


def _softmax_fwd(ctx, x, axis):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    ctx["out"] = out
    ctx["axis"] = axis
    return out


def _softmax_bwd(ctx, g, x, axis):
    s = ctx["out"]
    dot = (g * s).sum(axis=ctx["axis"], keepdims=True)
    return (s * (g - dot),)


def _spatial_grad_fwd(ctx, x):
    """Forward differences; channel 2c holds horizontal, 2c+1 vertical.

    The difference at the last column/row is zero (replicate-edge
    convention).
    """
    if x.ndim != 4:
        raise GraphError("spatial_grad expects a (B,C,H,W) input")
    B, C, H, W = x.shape
    out = np.zeros((B, 2 * C, H, W), dtype=x.dtype)
    out[:, 0::2, :, :-1] = x[:, :, :, 1:] - x[:, :, :, :-1]
    out[:, 1::2, :-1, :] = x[:, :, 1:, :] - x[:, :, :-1, :]
    return out


def _spatial_grad_bwd(ctx, g, x):
    gh = g[:, 0::2]
    gv = g[:, 1::2]
    dx = np.zeros_like(x)
    dx[:, :, :, :-1] -= gh[:, :, :, :-1]
    dx[:, :, :, 1:] += gh[:, :, :, :-1]
    dx[:, :, :-1, :] -= gv[:, :, :-1, :]
    dx[:, :, 1:, :] += gv[:, :, :-1, :]
    return (dx,)


def spatial_gradient(x):
    """Forward-difference gradient of a (B,C,H,W) array; returns (B,2C,H,W)
    with horizontal differences on even and vertical on odd channels."""
    return _spatial_grad_fwd({}, np.asarray(x))


def spatial_gradient_adjoint(g, like):
    """Adjoint of :func:`spatial_gradient` for a (B,2C,H,W) gradient."""
    return _spatial_grad_bwd({}, np.asarray(g), np.asarray(like))[0]


_OPS = {
    "conv2d": (_conv2d_fwd, _conv2d_bwd, 3),
    "relu": (_relu_fwd, _relu_bwd, 1),
    "tanh": (_tanh_fwd, _tanh_bwd, 1),
    "sigmoid": (_sigmoid_fwd, _sigmoid_bwd, 1),
    "maxpool2": (_maxpool2_fwd, _maxpool2_bwd, 1),
    "global_avg_pool": (_gap_fwd, _gap_bwd, 1),
    "fc": (_fc_fwd, _fc_bwd, 3),
    "flatten": (_flatten_fwd, _flatten_bwd, 1),
    "upsample2": (_upsample2_fwd, _upsample2_bwd, 1),
    "concat": (_concat_fwd, _concat_bwd, None),
    "split": (_split_fwd, _split_bwd, 1),
    "add": (_add_fwd, _add_bwd, 2),
    "sub": (_sub_fwd, _sub_bwd, 2),
    "mul": (_mul_fwd, _mul_bwd, 2),
    "scale": (_scale_fwd, _scale_bwd, 1),
    "softmax": (_softmax_fwd, _softmax_bwd, 1),
    "spatial_grad": (_spatial_grad_fwd, _spatial_grad_bwd, 1),
}


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("name", "op", "inputs", "attrs")

    def __init__(self, name, op, inputs, attrs):
        self.name = name
        self.op = op
        self.inputs = tuple(inputs)
        self.attrs = attrs

    def __repr__(self):
        return f"_Node({self.name!r}, op={self.op!r}, inputs={self.inputs})"


class OpGraph:
    """Static acyclic operator graph with named inputs, parameters, outputs.

    Node-adding helpers return the node's name, which later nodes use as an
    input reference. Acyclicity holds by construction: a node may only
    reference names that already exist.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.nodes = []
        self.params = {}
        self.input_channels = {}
        self.outputs = {}
        self._names = set()
        self._cache = None
        self._ctx = None
        self._referenced = set()

    # -- construction ------------------------------------------------------

    def _register(self, name):
        if name in self._names:
            raise GraphError(f"duplicate name {name!r} in graph")
        self._names.add(name)
        return name

    def input(self, name, channels=None):
        self._register(name)
        self.input_channels[name] = channels
        return name

    def parameter(self, name, value=None, shape=None, init="he", rng=None, fan_in=None):
        self._register(name)
        if value is None:
            if init == "zeros":
                value = np.zeros(shape)
            elif init == "he":
                if fan_in is None:
                    fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
                value = he_uniform(shape, fan_in, rng)
            else:
                raise GraphError(f"unknown init {init!r}")
        self.params[name] = np.asarray(value, dtype=self.dtype)
        return name

    def add_node(self, op, *inputs, name=None, **attrs):
        if op not in _OPS:
            raise GraphError(f"unknown operator {op!r}")
        arity = _OPS[op][2]
        if arity is not None and len(inputs) != arity:
            raise GraphError(f"{op} takes {arity} inputs, got {len(inputs)}")
        for ref in inputs:
            if ref not in self._names:
                raise GraphError(f"node references unknown name {ref!r}")
        if name is None:
            name = f"{op}_{len(self.nodes)}"
        self._register(name)
        self.nodes.append(_Node(name, op, inputs, attrs))
        self._referenced.update(inputs)
        return name

    def output(self, name, ref):
        if ref not in self._names:
            raise GraphError(f"output references unknown name {ref!r}")
        self.outputs[name] = ref

    # convenience wrappers -------------------------------------------------

    def conv2d(self, x, w, b, stride=1, dilation=1, name=None):
        return self.add_node("conv2d", x, w, b, stride=stride, dilation=dilation, name=name)

    def relu(self, x, name=None):
        return self.add_node("relu", x, name=name)

    def tanh(self, x, name=None):
        return self.add_node("tanh", x, name=name)

    def sigmoid(self, x, name=None):
        return self.add_node("sigmoid", x, name=name)

    def maxpool2(self, x, name=None):
        return self.add_node("maxpool2", x, name=name)

    def global_avg_pool(self, x, name=None):
        return self.add_node("global_avg_pool", x, name=name)

    def fc(self, x, w, b, name=None):
        return self.add_node("fc", x, w, b, name=name)

    def flatten(self, x, name=None):
        return self.add_node("flatten", x, name=name)

    def upsample2(self, x, name=None):
        return self.add_node("upsample2", x, name=name)

    def concat(self, *xs, name=None):
        return self.add_node("concat", *xs, name=name)

    def split(self, x, start, stop, name=None):
        return self.add_node("split", x, start=start, stop=stop, name=name)

    def add(self, a, b, name=None):
        return self.add_node("add", a, b, name=name)

    def sub(self, a, b, name=None):
        return self.add_node("sub", a, b, name=name)

    def mul(self, a, b, name=None):
        return self.add_node("mul", a, b, name=name)

    def scale(self, x, factor, name=None):
        return self.add_node("scale", x, factor=factor, name=name)

    def softmax(self, x, axis=1, name=None):
        return self.add_node("softmax", x, axis=axis, name=name)

    def spatial_grad(self, x, name=None):
        return self.add_node("spatial_grad", x, name=name)

    # -- validation --------------------------------------------------------

    def validate(self):
        if not self.outputs:
            raise GraphError("graph declares no outputs")
        unused = set(self.params) - self._referenced
        if unused:
            raise GraphError(f"parameters never referenced by any node: {sorted(unused)}")

    def param_count(self):
        return sum(int(v.size) for v in self.params.values())


def evaluate(graph, inputs, check_finite=False):
    """Run a forward pass; returns the named outputs.

    Caches intermediate values on the graph, which a subsequent
    :func:`backward` call consumes. Deterministic and side-effect free with
    respect to the parameters.
    """
    graph.validate()
    missing = set(graph.input_channels) - set(inputs)
    if missing:
        raise GraphError(f"missing graph inputs: {sorted(missing)}")
    values = {}
    for name, want in graph.input_channels.items():
        arr = np.asarray(inputs[name], dtype=graph.dtype)
        if want is not None and (arr.ndim < 2 or arr.shape[1] != want):
            raise GraphError(f"input {name!r} expects {want} channels, got shape {arr.shape}")
        values[name] = arr
    values.update(graph.params)
    ctxs = {}
    for node in graph.nodes:
        fwd = _OPS[node.op][0]
        args = [values[ref] for ref in node.inputs]
        ctx = {}
        try:
            out = fwd(ctx, *args, **node.attrs)
        except GraphError as err:
            raise GraphError(f"node {node.name!r}: {err}") from None
        if check_finite:
            assert_finite(out, f"node {node.name!r} output")
        values[node.name] = out
        ctxs[node.name] = ctx
    graph._cache = values
    graph._ctx = ctxs
    return {out: values[ref] for out, ref in graph.outputs.items()}


def backward(graph, output_grads):
    """Accumulate gradients of a scalar objective into every parameter/input.

    ``output_grads`` maps output names to the objective's gradient with
    respect to that output; omitted outputs contribute zero. Returns a dict
    with one gradient array per parameter and per graph input.
    """
    if graph._cache is None:
        raise GraphError("backward before forward: call evaluate first")
    values, ctxs = graph._cache, graph._ctx
    unknown = set(output_grads) - set(graph.outputs)
    if unknown:
        raise GraphError(f"gradients for unknown outputs: {sorted(unknown)}")
    grads = {}
    for out, g in output_grads.items():
        ref = graph.outputs[out]
        g = np.asarray(g, dtype=graph.dtype)
        if g.shape != values[ref].shape:
            raise GraphError(f"output grad {out!r} shape {g.shape} != value shape {values[ref].shape}")
        if ref in grads:
            grads[ref] = grads[ref] + g
        else:
            grads[ref] = g
    for node in reversed(graph.nodes):
        g = grads.pop(node.name, None)
        if g is None:
            continue
        bwd = _OPS[node.op][1]
        args = [values[ref] for ref in node.inputs]
        in_grads = bwd(ctxs[node.name], g, *args, **node.attrs)
        for ref, ig in zip(node.inputs, in_grads):
            if ref in grads:
                grads[ref] += ig
            else:
                grads[ref] = ig
    out = {}
    for name in list(graph.params) + list(graph.input_channels):
        got = grads.get(name)
        if got is None:
            got = np.zeros_like(values[name])
        out[name] = got
    return out


class GradCheckResult:
    """Per-tensor finite-difference comparison summary."""

    def __init__(self, max_rel_error, kinks, checked):
        self.max_rel_error = max_rel_error
        self.kinks = kinks
        self.checked = checked

    def __repr__(self):
        return (f"GradCheckResult(max_rel_error={self.max_rel_error:.3g}, "
                f"kinks={self.kinks}, checked={self.checked})")


def grad_check(graph, inputs, tolerance=1e-5, step=1e-5, max_coords=40,
               kink_tol=1e-3, seed=0):
    """Compare analytic gradients to central differences on a scalar graph.

    Requires a float64 graph whose single output has exactly one element.
    Coordinates sitting on a kink or tie (detected by disagreement between
    the one-sided difference quotients) are skipped and counted instead of
    failed. Returns ``{tensor name: GradCheckResult}``.
    """
    if graph.dtype != np.float64:
        raise GraphError("grad_check requires a float64 graph")
    outs = evaluate(graph, inputs)
    if len(outs) != 1:
        raise GraphError("grad_check requires exactly one output")
    (out_name, out_val), = outs.items()
    if out_val.size != 1:
        raise GraphError(f"grad_check requires a scalar output, got shape {out_val.shape}")
    analytic = backward(graph, {out_name: np.ones_like(out_val)})

    inputs = {k: np.asarray(v, dtype=np.float64) for k, v in inputs.items()}

    def run():
        return float(next(iter(evaluate(graph, inputs).values())))

    rng = np.random.default_rng(seed)
    results = {}
    tensors = {**graph.params, **{k: inputs[k] for k in graph.input_channels}}
    for name, arr in tensors.items():
        flat = arr.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        a_flat = analytic[name].reshape(-1)
        worst, kinks, checked = 0.0, 0, 0
        f0 = run()
        for c in coords:
            keep = flat[c]
            flat[c] = keep + step
            fp = run()
            flat[c] = keep - step
            fm = run()
            flat[c] = keep
            d_plus = (fp - f0) / step
            d_minus = (f0 - fm) / step
            scale = max(abs(d_plus), abs(d_minus), 1.0)
            if abs(d_plus - d_minus) > kink_tol * scale:
                kinks += 1
                continue
            numeric = (fp - fm) / (2 * step)
            a = a_flat[c]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
            checked += 1
        results[name] = GradCheckResult(worst, kinks, checked)
    # restore the cache for the unperturbed point
    evaluate(graph, inputs)
    return results
