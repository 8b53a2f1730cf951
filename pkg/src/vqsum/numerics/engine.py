"""Dense tensors with reverse-mode gradients, backed by numpy.

Conventions used throughout the model code:
  * a Tensor wraps one contiguous numpy array; float32 is the training dtype,
    float64 the checking dtype (finite differences are unreliable in 32-bit),
  * ops are free functions returning new Tensors; inputs are never mutated,
  * gradients are recorded only while a GradTape is active, so inference on a
    frozen model pays no bookkeeping cost and is thread-safe,
  * every op validates shapes eagerly (ShapeMismatch) and checks its output
    for NaN/Inf (NonFiniteValue).
"""

import threading
from contextlib import contextmanager

import numpy as np

from ..errors import NonFiniteValue, ShapeMismatch

_LOCAL = threading.local()


def _tape_stack():
    stack = getattr(_LOCAL, "tapes", None)
    if stack is None:
        stack = []
        _LOCAL.tapes = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class SgFreeze:
    """Capture-and-replay store for stop-gradient branch values.

    The straight-through estimator is the exact gradient of a surrogate loss
    in which every sg() operand is a constant. Finite differences therefore
    have to evaluate that surrogate: values behind sg are captured once at the
    base parameters and replayed verbatim while parameters are perturbed.
    Requires the checked function to be deterministic (fetches replay in call
    order).
    """

    def __init__(self):
        self.values = []
        self.index = None  # None while capturing

    def fetch(self, compute):
        if self.index is None:
            value = compute()
            self.values.append(value)
            return value
        value = self.values[self.index]
        self.index += 1
        return value

    def start_replay(self):
        self.index = 0


def _active_freeze():
    return getattr(_LOCAL, "sg_freeze", None)


@contextmanager
def freeze_stop_gradients():
    previous = _active_freeze()
    freeze = SgFreeze()
    _LOCAL.sg_freeze = freeze
    try:
        yield freeze
    finally:
        _LOCAL.sg_freeze = previous


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse mode."""

    __slots__ = ("data", "grad", "requires_grad", "is_leaf", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.is_leaf = True
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = self.name or "tensor"
        return f"<{tag} shape={self.data.shape} dtype={self.data.dtype}>"


class GradTape:
    """Records executed ops; backward() replays them once in reverse order.

    Creation order is a topological order of the computation graph, so the
    reversed walk visits each recorded op exactly once with its output
    gradient fully accumulated.
    """

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def record(self, out, inputs, grad_fn):
        out.is_leaf = False
        out.requires_grad = True
        self._nodes.append((out, inputs, grad_fn))

    def backward(self, loss):
        """Accumulate d(loss)/d(leaf) into .grad of every reachable leaf."""
        if loss.data.size != 1:
            raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.data.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        for out, inputs, grad_fn in reversed(self._nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            input_grads = grad_fn(g)
            for inp, gi in zip(inputs, input_grads):
                if gi is None or not inp.requires_grad:
                    continue
                if inp.is_leaf:
                    if inp.grad is None:
                        inp.grad = np.zeros_like(inp.data)
                    inp.grad += gi.reshape(inp.data.shape)
                else:
                    acc = grads.get(id(inp))
                    grads[id(inp)] = gi if acc is None else acc + gi


def _wrap(value, like):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


_CHECKS = threading.local()


@contextmanager
def suppress_finite_checks():
    """Skip per-op NaN/Inf validation inside the block.

    Used by grad_check's finite-difference loop, which validates the final
    loss value itself; per-op checks there only slow the thousands of replays.
    """
    previous = getattr(_CHECKS, "off", False)
    _CHECKS.off = True
    try:
        yield
    finally:
        _CHECKS.off = previous


def _finite(arr):
    if getattr(_CHECKS, "off", False):
        return arr
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("op produced NaN/Inf")
    return arr


def _make(out_data, inputs, grad_fn):
    _finite(out_data)
    out = object.__new__(Tensor)  # skip __init__ coercion on the hot path
    out.data = out_data if isinstance(out_data, np.ndarray) else np.asarray(out_data)
    out.grad = None
    out.requires_grad = False
    out.is_leaf = True
    out.name = None
    tape = _active_tape()
    if tape is not None and any(i.requires_grad for i in inputs):
        tape.record(out, inputs, grad_fn)
    return out


def _unbroadcast(grad, shape):
    """Sum out axes grad gained via numpy broadcasting against `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------- arithmetic


def add(a, b):
    b = _wrap(b, a)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b):
    b = _wrap(b, a)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b):
    b = _wrap(b, a)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def matmul(a, b):
    """np.matmul semantics for 2-D and batched operands."""
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatch(f"matmul {a.data.shape} x {b.data.shape}")

    def grad_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _make(np.matmul(a.data, b.data), (a, b), grad_fn)


def affine(x, w, b):
    """x @ w + b in one op; b broadcasts over the leading axes of the result."""
    if x.data.shape[-1] != w.data.shape[0] or b.data.shape != w.data.shape[-1:]:
        raise ShapeMismatch(f"affine {x.data.shape} x {w.data.shape} + {b.data.shape}")

    def grad_fn(g):
        gx = np.matmul(g, w.data.T)
        flat_x = x.data.reshape(-1, w.data.shape[0])
        gw = flat_x.T @ g.reshape(-1, w.data.shape[1])
        return gx, gw, g.reshape(-1, w.data.shape[1]).sum(axis=0)

    return _make(np.matmul(x.data, w.data) + b.data, (x, w, b), grad_fn)


def reshape(a, shape):
    def grad_fn(g):
        return (g.reshape(a.data.shape),)

    return _make(a.data.reshape(shape), (a,), grad_fn)


def transpose(a, axes):
    inverse = tuple(np.argsort(axes))

    def grad_fn(g):
        return (g.transpose(inverse),)

    return _make(a.data.transpose(axes), (a,), grad_fn)


def flip(a, axis):
    def grad_fn(g):
        return (np.flip(g, axis=axis),)

    return _make(np.flip(a.data, axis=axis), (a,), grad_fn)


def select(a, axis, index):
    """Take one index along `axis`, dropping that axis (x[:, index] style)."""

    def grad_fn(g):
        full = np.zeros_like(a.data)
        sl = [slice(None)] * a.data.ndim
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return _make(np.take(a.data, index, axis=axis), (a,), grad_fn)


def tensor_sum(a, axis=None):
    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        expanded = np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, a.data.shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), grad_fn)


def tensor_mean(a, axis=None):
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tensor_sum(a, axis=axis), 1.0 / count)


def l2_norm_sq(a):
    """Sum of squared entries, as a scalar."""

    def grad_fn(g):
        return (2.0 * g * a.data,)

    return _make(np.asarray(a.data.flatten() @ a.data.flatten()), (a,), grad_fn)


# ------------------------------------------------------------ neural network


def embedding_lookup(table, ids):
    """Rows of `table` (V, D) gathered by integer array `ids` (...,)."""
    ids = np.asarray(ids)
    if table.data.ndim != 2:
        raise ShapeMismatch(f"embedding table must be 2-D, got {table.data.shape}")
    if (
        not getattr(_CHECKS, "off", False)
        and ids.size
        and (ids.min() < 0 or ids.max() >= table.data.shape[0])
    ):
        raise ShapeMismatch("embedding id out of range")

    def grad_fn(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
        return (gt,)

    return _make(table.data[ids], (table,), grad_fn)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    if gamma.data.shape != x.data.shape[-1:] or beta.data.shape != x.data.shape[-1:]:
        raise ShapeMismatch("layer_norm gamma/beta must match last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    sigma = np.sqrt(var + eps)
    xhat = (x.data - mu) / sigma

    def grad_fn(g):
        ghat = g * gamma.data
        m1 = ghat.mean(axis=-1, keepdims=True)
        m2 = (ghat * xhat).mean(axis=-1, keepdims=True)
        gx = (ghat - m1 - xhat * m2) / sigma
        axes = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), grad_fn)


def softmax(x):
    """Softmax over the last axis (numerically stabilized)."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - dot),)

    return _make(s, (x,), grad_fn)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(x):
    """tanh-approximated GELU; smooth, so finite differences behave."""
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v**3)
    t = np.tanh(inner)

    def grad_fn(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * v**2)
        dt = (1.0 - t**2) * dinner
        return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)

    return _make(0.5 * v * (1.0 + t), (x,), grad_fn)


def cross_entropy(logits, targets, ignore_id=None):
    """Mean token cross-entropy.

    logits: (..., V); targets: integer array (...,). Positions equal to
    `ignore_id` are excluded from the mean. Fused log-softmax keeps the
    backward numerically exact.
    """
    targets = np.asarray(targets)
    if logits.data.shape[:-1] != targets.shape:
        raise ShapeMismatch(f"cross_entropy {logits.data.shape} vs targets {targets.shape}")
    v = logits.data.shape[-1]
    flat = logits.data.reshape(-1, v)
    tflat = targets.reshape(-1)
    mask = np.ones(tflat.shape, dtype=bool) if ignore_id is None else tflat != ignore_id
    count = int(mask.sum())
    if count == 0:
        raise ShapeMismatch("cross_entropy: no unmasked targets")
    m = flat.max(axis=-1, keepdims=True)
    logz = m + np.log(np.exp(flat - m).sum(axis=-1, keepdims=True))
    logp = flat - logz
    safe_t = np.where(mask, tflat, 0)
    nll = -logp[np.arange(flat.shape[0]), safe_t]
    loss = (nll * mask).sum() / count

    def grad_fn(g):
        p = np.exp(logp)
        p[np.arange(flat.shape[0]), safe_t] -= 1.0
        p *= (mask / count)[:, None]
        return (g * p.reshape(logits.data.shape),)

    return _make(np.asarray(loss), (logits,), grad_fn)


# ---------------------------------------------------------------- gradients


def stop_gradient(t):
    """Forward identity; contributes zero gradient to its operand.

    Under freeze_stop_gradients() the forward value is captured at the base
    parameters and replayed, so finite differences see it as the constant the
    gradient semantics declare it to be.
    """
    freeze = _active_freeze()
    if freeze is None:
        out = Tensor(t.data.copy())
    else:
        out = Tensor(freeze.fetch(lambda: t.data.copy()).copy())
    out.requires_grad = False
    return out


def straight_through(q, e):
    """Forward the value of `e` exactly; route the gradient to `q` unchanged.

    This is the estimator the quantizer needs: the decoder consumes the code
    embeddings, but backpropagation treats quantization as identity. Gradients
    never touch `e` through this op. Under freeze_stop_gradients() the op
    evaluates its surrogate q + capture(e - q), whose true derivative is the
    straight-through gradient.
    """
    if q.data.shape != e.data.shape:
        raise ShapeMismatch(f"straight_through {q.data.shape} vs {e.data.shape}")
    freeze = _active_freeze()
    if freeze is not None:
        delta = freeze.fetch(lambda: e.data - q.data)
        return add(q, Tensor(delta.copy()))

    def grad_fn(g):
        return (g, None)

    return _make(e.data.copy(), (q, e), grad_fn)


def conv1d(x, kernel, bias=None, padding="same"):
    """1-D convolution, stride 1.

    x: (B, C_in, L); kernel: (C_out, C_in, T) with odd T; bias: (C_out,) or
    None. Same-padding keeps the output length at L, which is what lets a
    length-H signal map to exactly H feature vectors.
    """
    if x.data.ndim != 3 or kernel.data.ndim != 3:
        raise ShapeMismatch(f"conv1d wants 3-D operands, got {x.data.shape}, {kernel.data.shape}")
    b_dim, c_in, length = x.data.shape
    c_out, k_in, taps = kernel.data.shape
    if k_in != c_in:
        raise ShapeMismatch(f"conv1d channel mismatch: {c_in} vs kernel {k_in}")
    if taps % 2 != 1:
        raise ShapeMismatch("conv1d kernel width must be odd for same-padding")
    if padding != "same":
        raise ShapeMismatch("only same-padding is supported")
    pad = taps // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    out = np.zeros((b_dim, c_out, length), dtype=x.data.dtype)
    for t in range(taps):
        out += np.einsum("oc,bcl->bol", kernel.data[:, :, t], xp[:, :, t : t + length])
    has_bias = bias is not None
    if has_bias:
        if bias.data.shape != (c_out,):
            raise ShapeMismatch(f"conv1d bias shape {bias.data.shape}, expected ({c_out},)")
        out += bias.data[None, :, None]

    def grad_fn(g):
        gx = np.zeros_like(xp)
        gk = np.zeros_like(kernel.data)
        for t in range(taps):
            gx[:, :, t : t + length] += np.einsum("oc,bol->bcl", kernel.data[:, :, t], g)
            gk[:, :, t] = np.einsum("bol,bcl->oc", g, xp[:, :, t : t + length])
        gx = gx[:, :, pad : pad + length]
        if has_bias:
            return gx, gk, g.sum(axis=(0, 2))
        return gx, gk

    inputs = (x, kernel, bias) if has_bias else (x, kernel)
    return _make(out, inputs, grad_fn)
