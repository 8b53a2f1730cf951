"""Transcript JSONL reading, mirroring the summarizer's wire format.

One video per line: {"video_id", "title", "duration_s", "segments":
[{"offset_s", "utterances": [{"start_s", "end_s", "text"}]}]}. Utterance ids
follow the toolkit's video:clip:index convention, where clip is the 5-minute
window containing the utterance's start time and index is its rank within
that window.
"""

import json
from dataclasses import dataclass

CLIP_SECONDS = 300.0
MIN_TRAIN_WORDS = 6  # the toolkit trains on utterances with >5 words


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class UtteranceRow:
    utt_id: str
    text: str
    word_count: int


def load_utterances(path, filtered=False):
    """Utterance rows in id order; `filtered` applies the >5-word rule."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{line_no}: bad JSON ({exc.msg})") from exc
            try:
                video_id = str(record["video_id"])
                flat = [
                    (float(u["start_s"]), str(u["text"]))
                    for seg in record["segments"]
                    for u in seg.get("utterances", [])
                ]
            except (KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{line_no}: missing field {exc}") from exc
            flat.sort(key=lambda pair: pair[0])
            positions = {}
            for start, text in flat:
                window = int(start // CLIP_SECONDS)
                pos = positions.get(window, 0)
                positions[window] = pos + 1
                words = len(text.split())
                if filtered and words < MIN_TRAIN_WORDS:
                    continue
                rows.append(
                    UtteranceRow(
                        utt_id=f"{video_id}:{window}:{pos}", text=text, word_count=words
                    )
                )
    if not rows:
        raise CorpusError(f"{path}: no utterances found")
    return rows
