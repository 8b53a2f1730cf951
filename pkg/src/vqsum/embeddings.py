"""Reader for pre-computed utterance embedding tables.

Binary format: magic "VQE1", u32 little-endian row count N, u32 little-endian
dimension H, then N*H little-endian float32 values row-major. A JSONL manifest
maps rows to utterance ids: {"row": int, "utt_id": str}.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, MalformedRecord, MissingEmbedding

MAGIC = b"VQE1"
HEADER_BYTES = 12


@dataclass(frozen=True)
class EmbeddingTable:
    matrix: np.ndarray  # (N, H) float32
    row_of: dict  # utt_id -> row

    @property
    def dim(self):
        return self.matrix.shape[1]

    def __len__(self):
        return self.matrix.shape[0]

    def lookup(self, utt_id):
        row = self.row_of.get(utt_id)
        if row is None:
            raise MissingEmbedding(f"no embedding row for utterance {utt_id!r}")
        return self.matrix[row]


def load_embedding_table(bin_path, manifest_path):
    with open(bin_path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_BYTES or blob[:4] != MAGIC:
        raise DataError(f"{bin_path}: not an embedding table (bad magic)")
    n = int.from_bytes(blob[4:8], "little")
    h = int.from_bytes(blob[8:12], "little")
    expected = HEADER_BYTES + 4 * n * h
    if len(blob) != expected:
        raise DataError(f"{bin_path}: expected {expected} bytes for {n}x{h}, got {len(blob)}")
    matrix = np.frombuffer(blob, dtype="<f4", count=n * h, offset=HEADER_BYTES).reshape(n, h)

    row_of = {}
    with open(manifest_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                row, utt_id = int(rec["row"]), str(rec["utt_id"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedRecord(line_no, f"bad manifest line ({exc})") from exc
            if not 0 <= row < n:
                raise MalformedRecord(line_no, f"row {row} outside table of {n}")
            if utt_id in row_of:
                raise MalformedRecord(line_no, f"duplicate utt_id {utt_id!r}")
            row_of[utt_id] = row
    if len(row_of) != n:
        raise DataError(f"{manifest_path}: {len(row_of)} manifest rows for a {n}-row table")
    return EmbeddingTable(matrix=matrix.copy(), row_of=row_of)
