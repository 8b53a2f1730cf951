"""Transformer building blocks on top of the autodiff engine.

Shapes: (B, T, D) for sequences, (B, n, T, d) inside attention. All blocks are
pre-LN. Parameters register themselves into a ParamSet under a dotted prefix;
group membership (embedder vs rest) is decided later by prefix.
"""

import numpy as np

from .. import numerics as nm

NEG_INF = -1e9


class ParamSet:
    """Insertion-ordered registry of named trainable tensors."""

    def __init__(self, dtype=np.float32):
        self.dtype = dtype
        self._params = {}

    def add(self, name, array):
        if name in self._params:
            raise ValueError(f"duplicate parameter {name}")
        t = nm.Tensor(np.asarray(array, dtype=self.dtype), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def named(self):
        return dict(self._params)

    def with_prefix(self, prefix):
        return {k: v for k, v in self._params.items() if k.startswith(prefix)}

    def load_arrays(self, arrays):
        for name, tensor in self._params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint missing parameter {name}")
            arr = np.asarray(arrays[name], dtype=self.dtype)
            if arr.shape != tensor.data.shape:
                raise ValueError(f"{name}: checkpoint shape {arr.shape} != {tensor.data.shape}")
            tensor.data = arr.copy()

    def export_arrays(self):
        return {name: t.data.copy() for name, t in self._params.items()}


def sinusoidal_positions(max_len, dim, dtype):
    pos = np.arange(max_len)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / (10000 ** (2 * (i // 2) / dim))
    table = np.zeros((max_len, dim), dtype=dtype)
    table[:, 0::2] = np.sin(angle[:, 0::2])
    table[:, 1::2] = np.cos(angle[:, 1::2])
    return table


class Linear:
    def __init__(self, params, prefix, d_in, d_out, rng):
        self.w = params.add(f"{prefix}.w", rng.normal(0.0, 0.02, size=(d_in, d_out)))
        self.b = params.add(f"{prefix}.b", np.zeros(d_out))

    def __call__(self, x):
        return nm.affine(x, self.w, self.b)


class LayerNorm:
    def __init__(self, params, prefix, dim):
        self.gamma = params.add(f"{prefix}.gamma", np.ones(dim))
        self.beta = params.add(f"{prefix}.beta", np.zeros(dim))

    def __call__(self, x):
        return nm.layer_norm(x, self.gamma, self.beta)


class MultiHeadAttention:
    def __init__(self, params, prefix, dim, heads, rng):
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / np.sqrt(self.head_dim)
        self.wq = Linear(params, f"{prefix}.wq", dim, dim, rng)
        self.wk = Linear(params, f"{prefix}.wk", dim, dim, rng)
        self.wv = Linear(params, f"{prefix}.wv", dim, dim, rng)
        self.wo = Linear(params, f"{prefix}.wo", dim, dim, rng)

    def _split(self, x, b, t):
        return nm.transpose(nm.reshape(x, (b, t, self.heads, self.head_dim)), (0, 2, 1, 3))

    def __call__(self, x_q, x_kv, mask=None):
        b, t_q = x_q.data.shape[0], x_q.data.shape[1]
        t_k = x_kv.data.shape[1]
        q = self._split(self.wq(x_q), b, t_q)
        k = self._split(self.wk(x_kv), b, t_k)
        v = self._split(self.wv(x_kv), b, t_k)
        scores = nm.mul(nm.matmul(q, nm.transpose(k, (0, 1, 3, 2))), self.scale)
        if mask is not None:
            scores = nm.add(scores, mask)
        out = nm.matmul(nm.softmax(scores), v)
        out = nm.reshape(nm.transpose(out, (0, 2, 1, 3)), (b, t_q, self.heads * self.head_dim))
        return self.wo(out)


class FeedForward:
    def __init__(self, params, prefix, dim, hidden, rng):
        self.lin1 = Linear(params, f"{prefix}.lin1", dim, hidden, rng)
        self.lin2 = Linear(params, f"{prefix}.lin2", hidden, dim, rng)

    def __call__(self, x):
        return self.lin2(nm.gelu(self.lin1(x)))


class EncoderLayer:
    def __init__(self, params, prefix, dim, heads, ffn, rng):
        self.ln1 = LayerNorm(params, f"{prefix}.ln1", dim)
        self.attn = MultiHeadAttention(params, f"{prefix}.attn", dim, heads, rng)
        self.ln2 = LayerNorm(params, f"{prefix}.ln2", dim)
        self.ffn = FeedForward(params, f"{prefix}.ffn", dim, ffn, rng)

    def __call__(self, x, mask):
        h = self.ln1(x)
        x = nm.add(x, self.attn(h, h, mask))
        return nm.add(x, self.ffn(self.ln2(x)))


class DecoderLayer:
    def __init__(self, params, prefix, dim, heads, ffn, rng):
        self.ln1 = LayerNorm(params, f"{prefix}.ln1", dim)
        self.self_attn = MultiHeadAttention(params, f"{prefix}.self", dim, heads, rng)
        self.ln2 = LayerNorm(params, f"{prefix}.ln2", dim)
        self.cross_attn = MultiHeadAttention(params, f"{prefix}.cross", dim, heads, rng)
        self.ln3 = LayerNorm(params, f"{prefix}.ln3", dim)
        self.ffn = FeedForward(params, f"{prefix}.ffn", dim, ffn, rng)

    def __call__(self, x, memory, self_mask):
        h = self.ln1(x)
        x = nm.add(x, self.self_attn(h, h, self_mask))
        x = nm.add(x, self.cross_attn(self.ln2(x), memory))
        return nm.add(x, self.ffn(self.ln3(x)))


def causal_mask(t, dtype):
    i = np.arange(t)
    return ((i[:, None] < i[None, :]) * NEG_INF).astype(dtype)[None, None, :, :]


def pad_key_mask(ids, pad_id, dtype):
    """Additive mask hiding pad keys: (B, 1, 1, T)."""
    return ((ids == pad_id) * NEG_INF).astype(dtype)[:, None, None, :]
