"""Summary selections and their JSONL wire format.

Every summarizer (the code-frequency extractor and all baselines) emits the
same record so downstream evaluation is system-agnostic:
{"clip_id", "system", "k", "selected": [{"index", "score", "text"}],
 "p_size", "excluded_codes"} - the last two are null for baselines.
"""

import json
from dataclasses import dataclass

from .errors import MalformedRecord


@dataclass(frozen=True)
class SummarySelection:
    clip_id: str
    system: str
    k: int
    ranked: tuple  # (utterance index, score) best-first
    selected: tuple  # chosen indices in transcript order
    p_size: int = None
    excluded_codes: tuple = None

    def to_record(self, clip):
        texts = {i: u.text for i, u in enumerate(clip.utterances)}
        scores = dict(self.ranked)
        return {
            "clip_id": self.clip_id,
            "system": self.system,
            "k": self.k,
            "selected": [
                {"index": i, "score": scores[i], "text": texts[i]} for i in self.selected
            ],
            "p_size": self.p_size,
            "excluded_codes": list(self.excluded_codes) if self.excluded_codes is not None else None,
        }


@dataclass(frozen=True)
class ErrorRecord:
    clip_id: str
    error: str

    def to_record(self):
        return {"clip_id": self.clip_id, "error": self.error}


def rank_and_choose(scored, k):
    """(index, score) pairs -> (ranked desc, top-k indices in transcript order).

    Ties rank the earlier transcript position first.
    """
    ranked = tuple(sorted(scored, key=lambda pair: (-pair[1], pair[0])))
    chosen = sorted(i for i, _ in ranked[: min(k, len(ranked))])
    return ranked, tuple(chosen)


def dump_record(record):
    return json.dumps(record, sort_keys=True)


def write_summaries(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dump_record(record) + "\n")


def load_summaries(path):
    """Read selection records back; error records come through as-is."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"bad JSON ({exc.msg})") from exc
    return records
