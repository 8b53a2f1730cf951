"""The summarizer network: embedder, conv encoder, codebook, conv decoder,
token generator, and the three-term training loss.

Data flow per utterance x:
    h   = embed(x)                      pooled vector, R^H
    q   = conv_encode(h)                H feature vectors, each R^D
    z_i = argmin_k ||q_i - e_k||        one latent code per position
    h~  = conv_decode(e_z)              dense vector back in R^H
    x~  = generate(h~)                  token-by-token reconstruction

The loss is reconstruction cross-entropy plus a dictionary term pulling code
embeddings toward their assigned features and a commitment term (weight beta)
pulling features toward their codes. Quantization is bypassed in the backward
pass: the decoder consumes e_z but q receives its gradient unchanged.
"""

import json
from dataclasses import dataclass

import numpy as np

from .. import numerics as nm
from .. import text
from ..errors import LengthOverflow, ShapeMismatch
from .layers import (
    DecoderLayer,
    EncoderLayer,
    LayerNorm,
    Linear,
    ParamSet,
    causal_mask,
    pad_key_mask,
    sinusoidal_positions,
)
from .profiles import ModelProfile, profile_from_dict

CONV_KERNEL_SIZE = 3
DEFAULT_BETA = 0.25

# Token embeddings and positional tables must share a scale: if positions
# carry O(1) amplitude against 0.02-sigma tokens, the pooled vector is almost
# content-free at init and the quantizer collapses onto one code per position
# before reconstruction can create content structure.
EMBED_SIGMA = 0.05


@dataclass(frozen=True)
class LossBreakdown:
    xent: float
    dict_loss: float
    commit_loss: float
    beta: float

    @property
    def total(self):
        return self.xent + self.dict_loss + self.beta * self.commit_loss


class BuiltinEmbedder:
    """Small bidirectional encoder; the [CLS]-position vector is the output."""

    def __init__(self, params, profile, vocab_size, rng, dtype):
        dim = profile.h_dim
        self.dtype = dtype
        self.tok = params.add("embedder.tok", rng.normal(0.0, EMBED_SIGMA, size=(vocab_size, dim)))
        self.pos = sinusoidal_positions(profile.max_len, dim, dtype) * EMBED_SIGMA
        self.layers = [
            EncoderLayer(params, f"embedder.layer{i}", dim, profile.emb_heads, profile.emb_ffn, rng)
            for i in range(profile.emb_layers)
        ]
        self.final_ln = LayerNorm(params, "embedder.final_ln", dim)

    def __call__(self, ids):
        t = ids.shape[1]
        if t > self.pos.shape[0]:
            raise LengthOverflow(f"sequence of {t} tokens exceeds max length {self.pos.shape[0]}")
        x = nm.add(nm.embedding_lookup(self.tok, ids), self.pos[:t])
        mask = pad_key_mask(ids, text.PAD, self.dtype)
        for layer in self.layers:
            x = layer(x, mask)
        return nm.select(self.final_ln(x), 1, 0)  # pooled [CLS] position


class FileBackedEmbedder:
    """Frozen rows from a pre-computed table; carries no trainable parameters."""

    def __init__(self, table, h_dim, dtype):
        if table.dim != h_dim:
            raise ShapeMismatch(f"embedding table dim {table.dim} != model H {h_dim}")
        self.table = table
        self.dtype = dtype

    def rows(self, utt_ids):
        mat = np.stack([self.table.lookup(u) for u in utt_ids]).astype(self.dtype)
        return nm.Tensor(mat)


class Generator:
    """Autoregressive transformer decoder conditioned on one memory slot."""

    def __init__(self, params, profile, vocab_size, rng, dtype):
        dim = profile.h_dim
        self.dtype = dtype
        self.max_len = profile.max_len
        self.tok = params.add("generator.tok", rng.normal(0.0, EMBED_SIGMA, size=(vocab_size, dim)))
        self.pos = sinusoidal_positions(profile.max_len, dim, dtype) * EMBED_SIGMA
        self.mem = Linear(params, "generator.mem", profile.h_dim, dim, rng)
        self.layers = [
            DecoderLayer(params, f"generator.layer{i}", dim, profile.gen_heads, profile.gen_ffn, rng)
            for i in range(profile.gen_layers)
        ]
        self.final_ln = LayerNorm(params, "generator.final_ln", dim)
        self.out = Linear(params, "generator.out", dim, vocab_size, rng)

    def logits(self, h_tilde, input_ids):
        b, t = input_ids.shape
        if t > self.max_len:
            raise LengthOverflow(f"sequence of {t} tokens exceeds max length {self.max_len}")
        memory = nm.reshape(self.mem(h_tilde), (b, 1, h_tilde.data.shape[1]))
        x = nm.add(nm.embedding_lookup(self.tok, input_ids), self.pos[:t])
        mask = causal_mask(t, self.dtype) + pad_key_mask(input_ids, text.PAD, self.dtype)
        for layer in self.layers:
            x = layer(x, memory, mask)
        return self.out(self.final_ln(x))


class VqModel:
    """Trainable summarizer; frozen instances are pure and shareable."""

    def __init__(
        self,
        profile: ModelProfile,
        vocab_size: int,
        seed: int = 0,
        dtype=np.float32,
        embedding_table=None,
    ):
        self.profile = profile
        self.vocab_size = vocab_size
        self.dtype = dtype
        self.file_backed = embedding_table is not None
        rng = np.random.default_rng(seed)
        self.params = ParamSet(dtype=dtype)

        if self.file_backed:
            self.embedder = FileBackedEmbedder(embedding_table, profile.h_dim, dtype)
        else:
            self.embedder = BuiltinEmbedder(self.params, profile, vocab_size, rng, dtype)

        d, k = profile.conv_filters, profile.codebook_size
        self.conv_kernel = self.params.add(
            "conv.kernel", rng.normal(0.0, 0.1, size=(d, 1, CONV_KERNEL_SIZE))
        )
        self.conv_bias_enc = self.params.add("conv.bias_enc", np.zeros(d))
        self.conv_bias_dec = self.params.add("conv.bias_dec", np.zeros(1))
        self.codebook = self.params.add("codebook.E", rng.uniform(-1.0 / k, 1.0 / k, size=(k, d)))
        self.generator = Generator(self.params, profile, vocab_size, rng, dtype)

    # ------------------------------------------------------------- groups

    def group_e(self):
        """Embedder parameters (empty in file-backed mode)."""
        return self.params.with_prefix("embedder.")

    def group_r(self):
        """Everything that is randomly initialized: generator, conv, codebook."""
        return {k: v for k, v in self.params.named().items() if not k.startswith("embedder.")}

    # ------------------------------------------------------------ forward

    def embed(self, ids=None, utt_ids=None):
        if self.file_backed:
            if utt_ids is None:
                raise ShapeMismatch("file-backed embedder needs utterance ids")
            return self.embedder.rows(utt_ids)
        if ids is None:
            raise ShapeMismatch("built-in embedder needs token ids")
        return self.embedder(ids)

    def conv_encode(self, h):
        """h (B, H) -> feature sequence q (B, H, D)."""
        b, h_dim = h.data.shape
        signal = nm.reshape(h, (b, 1, h_dim))
        features = nm.conv1d(signal, self.conv_kernel, self.conv_bias_enc)
        return nm.transpose(features, (0, 2, 1))

    def quantize(self, q_data):
        """Nearest-code indices for raw features (..., D); ties to lowest index."""
        e = self.codebook.data
        flat = q_data.reshape(-1, e.shape[1])
        d2 = (flat * flat).sum(axis=1, keepdims=True) - 2.0 * flat @ e.T + (e * e).sum(axis=1)
        return np.argmin(d2, axis=1).reshape(q_data.shape[:-1])

    def decoder_kernel(self):
        """Tied to the encoder kernel: channels swapped, taps reversed."""
        return nm.flip(nm.transpose(self.conv_kernel, (1, 0, 2)), 2)

    def conv_decode(self, features):
        """(B, H, D) code embeddings -> reconstructed h~ (B, H)."""
        b, h_dim, _ = features.data.shape
        signal = nm.transpose(features, (0, 2, 1))
        out = nm.conv1d(signal, self.decoder_kernel(), self.conv_bias_dec)
        return nm.reshape(out, (b, h_dim))

    # --------------------------------------------------------------- loss

    def loss(self, ids, utt_ids=None, beta=DEFAULT_BETA):
        """Mean per-utterance loss over a batch of [CLS]..[SEP] id rows.

        Returns (total, breakdown, z). Gradient routing: the generator path
        updates everything but the codebook (straight-through); the dictionary
        term updates only the codebook; the commitment term only q's producers.
        """
        ids = np.asarray(ids)
        b = ids.shape[0]
        h = self.embed(ids=ids, utt_ids=utt_ids)
        q = self.conv_encode(h)
        z = self.quantize(q.data)
        e_z = nm.embedding_lookup(self.codebook, z)

        dict_loss = nm.mul(nm.l2_norm_sq(nm.sub(e_z, nm.stop_gradient(q))), 1.0 / b)
        commit_loss = nm.mul(nm.l2_norm_sq(nm.sub(nm.stop_gradient(e_z), q)), 1.0 / b)

        decoder_in = nm.straight_through(q, e_z)
        h_tilde = self.conv_decode(decoder_in)
        logits = self.generator.logits(h_tilde, ids[:, :-1])
        xent = nm.cross_entropy(logits, ids[:, 1:], ignore_id=text.PAD)

        total = nm.add(nm.add(xent, dict_loss), nm.mul(commit_loss, beta))
        breakdown = LossBreakdown(
            xent=float(xent.data),
            dict_loss=float(dict_loss.data),
            commit_loss=float(commit_loss.data),
            beta=beta,
        )
        return total, breakdown, z

    # ---------------------------------------------------------- inference

    def codes(self, ids=None, utt_ids=None):
        """Latent code assignments (B, H) for a batch, without gradients."""
        h = self.embed(ids=ids, utt_ids=utt_ids)
        q = self.conv_encode(h)
        return self.quantize(q.data)

    def reconstruct(self, ids, utt_ids=None):
        """Greedy token decode from the quantized representation (inspection)."""
        ids = np.asarray(ids)
        b = ids.shape[0]
        h = self.embed(ids=ids, utt_ids=utt_ids)
        q = self.conv_encode(h)
        z = self.quantize(q.data)
        e_z = nm.embedding_lookup(self.codebook, z)
        h_tilde = self.conv_decode(nm.straight_through(q, e_z))
        seq = np.full((b, 1), text.CLS, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        for _ in range(self.profile.max_len - 1):
            logits = self.generator.logits(h_tilde, seq)
            nxt = logits.data[:, -1, :].argmax(axis=1)
            nxt = np.where(done, text.PAD, nxt)
            seq = np.concatenate([seq, nxt[:, None]], axis=1)
            done |= nxt == text.SEP
            if done.all():
                break
        return [[int(t) for t in row if t != text.PAD] for row in seq]

    # -------------------------------------------------------- persistence

    def save(self, ckpt_path, config_path=None):
        nm.save_checkpoint(ckpt_path, self.params.export_arrays())
        if config_path is not None:
            record = {
                "profile": self.profile.to_dict(),
                "vocab_size": self.vocab_size,
                "file_backed": self.file_backed,
            }
            with open(config_path, "w", encoding="utf-8") as fh:
                json.dump(record, fh, indent=2, sort_keys=True)
                fh.write("\n")

    @classmethod
    def load(cls, ckpt_path, config_path, dtype=np.float32, embedding_table=None):
        from ..errors import DataError

        with open(config_path, encoding="utf-8") as fh:
            record = json.load(fh)
        if record.get("file_backed") and embedding_table is None:
            raise DataError(
                "this model was trained with file-backed embeddings; pass the table "
                "it was trained against (--embeddings)"
            )
        model = cls(
            profile=profile_from_dict(record["profile"]),
            vocab_size=int(record["vocab_size"]),
            dtype=dtype,
            embedding_table=embedding_table if record.get("file_backed") else None,
        )
        try:
            model.params.load_arrays(nm.load_checkpoint(ckpt_path))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{ckpt_path}: checkpoint does not match this configuration: {exc}") from exc
        return model
