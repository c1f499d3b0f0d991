"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Provides exactly the operators the segmentation network needs: 2D/3D
cross-correlation ("convolution" in the CNN sense), transposed convolution,
max pooling, ReLU, inverted dropout, axis permutation, elementwise add/mul,
sum, and a fused softmax + cross-entropy head.

Convolutions accept an optional leading batch axis; gradients of a parameter
used several times in one graph accumulate.  All ops preserve the dtype of
their inputs: build graphs in float64 for oracle/gradient checks and float32
for training.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A dense array plus the tape bookkeeping needed for backward()."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_needs")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _vjp=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._vjp = _vjp
        self._needs = requires_grad or any(p._needs for p in _parents)

    @property
    def shape(self):
        return self.data.shape

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out, _parents=(a, b), _vjp=vjp)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return Tensor(out, _parents=(a, b), _vjp=vjp)


def tsum(a) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum()

    def vjp(g):
        return (np.broadcast_to(g, a.data.shape),)

    return Tensor(out, _parents=(a,), _vjp=vjp)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    pos = a.data > 0
    out = np.where(pos, a.data, 0)

    def vjp(g):
        return (g * pos,)

    return Tensor(out, _parents=(a,), _vjp=vjp)


def permute(a, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))

    def vjp(g):
        return (g.transpose(inv),)

    return Tensor(out, _parents=(a,), _vjp=vjp)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return Tensor(out, _parents=(a,), _vjp=vjp)


def dropout(a, p_drop: float, training: bool, rng) -> Tensor:
    """Inverted dropout: zero each element with probability p_drop and scale
    survivors by 1/(1-p_drop) during training; identity at inference.

    `rng` is a seed or np.random.Generator; a fixed seed gives a fixed mask.
    """
    if not 0.0 <= p_drop < 1.0:
        raise ValueError(f"p_drop must be in [0, 1), got {p_drop}")
    a = _as_tensor(a)
    if not training or p_drop == 0.0:
        return Tensor(a.data, _parents=(a,), _vjp=lambda g: (g,))
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    keep = gen.random(a.data.shape) >= p_drop
    scale = np.asarray(1.0 / (1.0 - p_drop), dtype=a.data.dtype)
    mask = keep * scale

    def vjp(g):
        return (g * mask,)

    return Tensor(a.data * mask, _parents=(a,), _vjp=vjp)


def _batched(data: np.ndarray, unbatched_ndim: int):
    """Add a leading batch axis if absent; return (array, had_batch)."""
    if data.ndim == unbatched_ndim:
        return data[None], False
    if data.ndim == unbatched_ndim + 1:
        return data, True
    raise ValueError(f"expected {unbatched_ndim}D or {unbatched_ndim + 1}D input, got {data.ndim}D")


def conv2d(x, w, b, stride: int = 1, same_pad: bool = False) -> Tensor:
    """2D cross-correlation plus bias.

    x: [Cin, H, W] or [B, Cin, H, W]; w: [Cout, Cin, kh, kw]; b: [Cout].
    same_pad zero-pads so stride-1 output keeps H, W (odd kernels).
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    xb, had_batch = _batched(x.data, 3)
    cout, cin, kh, kw = w.data.shape
    if xb.shape[1] != cin:
        raise ValueError(f"channel mismatch: input {xb.shape[1]}, kernel {cin}")
    if same_pad:
        ph_lo, pw_lo = (kh - 1) // 2, (kw - 1) // 2
        xp = np.pad(xb, ((0, 0), (0, 0), (ph_lo, kh - 1 - ph_lo), (pw_lo, kw - 1 - pw_lo)))
    else:
        ph_lo = pw_lo = 0
        xp = xb
    bsz, _, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if hp < kh or wp < kw:
        raise ValueError(f"kernel ({kh}, {kw}) larger than padded input ({hp}, {wp})")
    out = np.zeros((bsz, ho, wo, cout), dtype=xb.dtype)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
            out += np.tensordot(xs, w.data[:, :, i, j], axes=([1], [1]))
    out = out.transpose(0, 3, 1, 2) + b.data[None, :, None, None]

    def vjp(g):
        if not had_batch:
            gb = g[None]
        else:
            gb = g
        db = gb.sum(axis=(0, 2, 3))
        dw = np.zeros_like(w.data)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                sl = (
                    slice(None),
                    slice(None),
                    slice(i, i + stride * ho, stride),
                    slice(j, j + stride * wo, stride),
                )
                dw[:, :, i, j] = np.tensordot(gb, xp[sl], axes=([0, 2, 3], [0, 2, 3]))
                dxp[sl] += np.tensordot(gb, w.data[:, :, i, j], axes=([1], [0])).transpose(
                    0, 3, 1, 2
                )
        h, wdim = xb.shape[2], xb.shape[3]
        dx = dxp[:, :, ph_lo : ph_lo + h, pw_lo : pw_lo + wdim]
        if not had_batch:
            dx = dx[0]
        return dx, dw, db

    res = out if had_batch else out[0]
    return Tensor(res, _parents=(x, w, b), _vjp=vjp)


def conv3d(x, w, b, same_pad: bool = False) -> Tensor:
    """3D cross-correlation plus bias, stride 1.

    x: [Cin, D, H, W] or [B, Cin, D, H, W]; w: [Cout, Cin, kd, kh, kw].
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    xb, had_batch = _batched(x.data, 4)
    cout, cin, kd, kh, kw = w.data.shape
    if xb.shape[1] != cin:
        raise ValueError(f"channel mismatch: input {xb.shape[1]}, kernel {cin}")
    if same_pad:
        lo = [(kd - 1) // 2, (kh - 1) // 2, (kw - 1) // 2]
        pads = [(lo[0], kd - 1 - lo[0]), (lo[1], kh - 1 - lo[1]), (lo[2], kw - 1 - lo[2])]
        xp = np.pad(xb, [(0, 0), (0, 0)] + pads)
    else:
        lo = [0, 0, 0]
        xp = xb
    bsz = xp.shape[0]
    do = xp.shape[2] - kd + 1
    ho = xp.shape[3] - kh + 1
    wo = xp.shape[4] - kw + 1
    if do <= 0 or ho <= 0 or wo <= 0:
        raise ValueError(f"kernel {w.data.shape[2:]} larger than padded input {xp.shape[2:]}")
    out = np.zeros((bsz, do, ho, wo, cout), dtype=xb.dtype)
    for i in range(kd):
        for j in range(kh):
            for k in range(kw):
                xs = xp[:, :, i : i + do, j : j + ho, k : k + wo]
                out += np.tensordot(xs, w.data[:, :, i, j, k], axes=([1], [1]))
    out = out.transpose(0, 4, 1, 2, 3) + b.data[None, :, None, None, None]

    def vjp(g):
        gb = g if had_batch else g[None]
        db = gb.sum(axis=(0, 2, 3, 4))
        dw = np.zeros_like(w.data)
        dxp = np.zeros_like(xp)
        for i in range(kd):
            for j in range(kh):
                for k in range(kw):
                    sl = (
                        slice(None),
                        slice(None),
                        slice(i, i + do),
                        slice(j, j + ho),
                        slice(k, k + wo),
                    )
                    dw[:, :, i, j, k] = np.tensordot(
                        gb, xp[sl], axes=([0, 2, 3, 4], [0, 2, 3, 4])
                    )
                    dxp[sl] += np.tensordot(
                        gb, w.data[:, :, i, j, k], axes=([1], [0])
                    ).transpose(0, 4, 1, 2, 3)
        d, h, wdim = xb.shape[2], xb.shape[3], xb.shape[4]
        dx = dxp[:, :, lo[0] : lo[0] + d, lo[1] : lo[1] + h, lo[2] : lo[2] + wdim]
        if not had_batch:
            dx = dx[0]
        return dx, dw, db

    res = out if had_batch else out[0]
    return Tensor(res, _parents=(x, w, b), _vjp=vjp)


def deconv2d(x, w, stride: int) -> Tensor:
    """Transposed 2D convolution upsampling spatial dims by `stride`.

    x: [Cin, H, W] or [B, Cin, H, W]; w: [Cin, Cout, kh, kw] with kh, kw >=
    stride.  Output is [Cout, H*stride, W*stride] (trailing rows/cols beyond
    H*stride are dropped when the kernel exceeds the stride).  This is the
    adjoint of conv2d with the same stride and no padding.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    xb, had_batch = _batched(x.data, 3)
    cin, cout, kh, kw = w.data.shape
    if xb.shape[1] != cin:
        raise ValueError(f"channel mismatch: input {xb.shape[1]}, kernel {cin}")
    if kh < stride or kw < stride or stride < 1:
        raise ValueError(f"kernel ({kh}, {kw}) must be >= stride {stride} >= 1")
    bsz, _, h, wdim = xb.shape
    full = np.zeros((bsz, cout, (h - 1) * stride + kh, (wdim - 1) * stride + kw), dtype=xb.dtype)
    for i in range(kh):
        for j in range(kw):
            full[:, :, i : i + stride * h : stride, j : j + stride * wdim : stride] += (
                np.tensordot(xb, w.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
            )
    out = full[:, :, : h * stride, : wdim * stride]

    def vjp(g):
        gb = g if had_batch else g[None]
        gfull = np.zeros_like(full)
        gfull[:, :, : h * stride, : wdim * stride] = gb
        dx = np.zeros_like(xb)
        dw = np.zeros_like(w.data)
        for i in range(kh):
            for j in range(kw):
                gs = gfull[:, :, i : i + stride * h : stride, j : j + stride * wdim : stride]
                dx += np.tensordot(gs, w.data[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
                dw[:, :, i, j] = np.tensordot(xb, gs, axes=([0, 2, 3], [0, 2, 3]))
        if not had_batch:
            dx = dx[0]
        return dx, dw

    res = out if had_batch else out[0]
    return Tensor(res, _parents=(x, w), _vjp=vjp)


def maxpool2d(x) -> tuple[Tensor, np.ndarray]:
    """2x2/stride-2 max pooling; returns (pooled, argmax indices).

    Indices are positions 0..3 in row-major window order; gradient routes to
    the first maximum of each window.
    """
    x = _as_tensor(x)
    xb, had_batch = _batched(x.data, 3)
    bsz, c, h, w = xb.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2d requires even spatial dims, got ({h}, {w})")
    win = xb.reshape(bsz, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(bsz, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def vjp(g):
        gb = g if had_batch else g[None]
        dwin = np.zeros_like(win)
        np.put_along_axis(dwin, idx[..., None], gb[..., None], axis=-1)
        dx = (
            dwin.reshape(bsz, c, h // 2, w // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(bsz, c, h, w)
        )
        if not had_batch:
            dx = dx[0]
        return (dx,)

    res = out if had_batch else out[0]
    indices = idx if had_batch else idx[0]
    return Tensor(res, _parents=(x,), _vjp=vjp), indices


def softmax(logits_data: np.ndarray, axis: int = 0) -> np.ndarray:
    """Plain-array channel softmax (inference path, no gradient)."""
    z = logits_data - logits_data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_ce(logits, target) -> tuple[Tensor, np.ndarray]:
    """Per-voxel 2-class softmax cross-entropy.

    logits: Tensor [2, ...spatial]; target: {0,1} array over the spatial dims.
    Returns (mean negative log-likelihood as a scalar Tensor, probs array).
    """
    logits = _as_tensor(logits)
    if logits.data.shape[0] != 2:
        raise ValueError(f"expected 2 classes on axis 0, got {logits.data.shape[0]}")
    target = np.asarray(target)
    if target.shape != logits.data.shape[1:]:
        raise ValueError(f"target shape {target.shape} does not match logits {logits.data.shape}")
    if target.size and not np.isin(target, (0, 1)).all():
        raise ValueError("target must be binary")
    z = logits.data - logits.data.max(axis=0, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=0, keepdims=True))
    logp = z - lse
    probs = np.exp(logp)
    n = target.size
    tgt = target.astype(np.int64)
    picked = np.take_along_axis(logp, tgt[None], axis=0)[0]
    loss = -picked.sum() / n

    def vjp(g):
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, tgt[None], 1.0, axis=0)
        return ((probs - onehot) * (g / n),)

    return Tensor(np.asarray(loss, dtype=logits.data.dtype), _parents=(logits,), _vjp=vjp), probs


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from `loss`.

    Gradients accumulate across multiple uses within the graph and across
    repeated backward calls (use zero_grad between steps).
    """
    if loss.data.shape != ():
        raise ValueError(f"backward expects a scalar, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen or not node._needs:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p._needs and id(p) not in seen:
                stack.append((p, False))
    grads: dict[int, np.ndarray] = {id(loss): np.asarray(1.0, dtype=loss.data.dtype)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        pgrads = node._vjp(g)
        for p, pg in zip(node._parents, pgrads):
            if not p._needs:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


def zero_grad(params) -> None:
    for p in params:
        p.grad = None
