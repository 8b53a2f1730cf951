"""Pretrained-encoder inference and binary table writing.

The table format is the toolkit's file-backed embedding contract: magic
"VQE1", u32 little-endian row count N, u32 little-endian dimension H, then
N*H little-endian float32 values row-major. The manifest is JSONL of
{"row": int, "utt_id": str}. Both files are written atomically
(temporary file + rename) so a crashed export never leaves a torn table.
"""

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"VQE1"


class EncoderUnavailable(RuntimeError):
    """The requested encoder could not be loaded (bad name, no cache)."""


class WriteFailure(OSError):
    pass


def load_encoder(name_or_path):
    """AutoModel/AutoTokenizer pair in inference mode (dropout disabled)."""
    import torch
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        model = AutoModel.from_pretrained(name_or_path)
    except Exception as exc:
        raise EncoderUnavailable(f"cannot load encoder {name_or_path!r}: {exc}") from exc
    model.eval()
    torch.set_grad_enabled(False)
    return tokenizer, model


def encode_texts(tokenizer, model, texts, batch_size=16, max_tokens=64):
    """[CLS]-position vectors, one row per text, float32 (N, H)."""
    import torch

    rows = []
    for start in range(0, len(texts), batch_size):
        chunk = list(texts[start : start + batch_size])
        encoded = tokenizer(
            chunk,
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=max_tokens,
        )
        with torch.no_grad():
            output = model(**encoded)
        pooled = output.last_hidden_state[:, 0, :]  # the [CLS] position
        rows.append(pooled.to(torch.float32).cpu().numpy())
    return np.concatenate(rows, axis=0)


def write_table(matrix, utt_ids, bin_path, manifest_path):
    """Atomic write of the binary table and its row manifest."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    n, h = matrix.shape
    if len(utt_ids) != n:
        raise WriteFailure(f"{len(utt_ids)} ids for {n} rows")
    if len(set(utt_ids)) != n:
        raise WriteFailure("duplicate utterance ids in manifest")
    payload = MAGIC + struct.pack("<II", n, h) + matrix.tobytes()

    def atomic(path, data, mode):
        directory = os.path.dirname(os.path.abspath(path)) or "."
        try:
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=".export-")
            with os.fdopen(fd, mode) as fh:
                fh.write(data)
            os.replace(tmp, path)
        except OSError as exc:
            raise WriteFailure(f"cannot write {path}: {exc}") from exc

    atomic(bin_path, payload, "wb")
    manifest = "".join(
        json.dumps({"row": row, "utt_id": utt_id}, sort_keys=True) + "\n"
        for row, utt_id in enumerate(utt_ids)
    )
    atomic(manifest_path, manifest, "w")
    return n, h


def export(corpus_path, model_name, out_path, manifest_path=None, filtered=False,
           batch_size=16, max_tokens=64):
    """End-to-end export; returns (rows, dim, manifest_path)."""
    from .corpus import load_utterances

    if manifest_path is None:
        manifest_path = str(out_path) + ".manifest.jsonl"
    rows = load_utterances(corpus_path, filtered=filtered)
    tokenizer, model = load_encoder(model_name)
    matrix = encode_texts(
        tokenizer, model, [r.text for r in rows], batch_size=batch_size, max_tokens=max_tokens
    )
    n, h = write_table(matrix, [r.utt_id for r in rows], out_path, manifest_path)
    return n, h, manifest_path
