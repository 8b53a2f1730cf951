"""Corpus records and the rules that turn raw transcripts into usable clips.

A video's transcript arrives as ~30-second ASR segments of timed utterances.
It is cut into consecutive 5-minute windows from t=0; windows with too little
speech (<=333 words or <=38 utterances) are invalid, and a video keeps its
clips only if at least 5 of them are valid. Human annotations attach gold
extracts/abstracts or mark a clip as chitchat.
"""

import json
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, EmptyFile, MalformedRecord

CLIP_SECONDS = 300.0
MAX_FILTER_WORDS = 333  # clips with <= this many words are invalid
MAX_FILTER_UTTS = 38  # clips with <= this many utterances are invalid
MIN_VALID_CLIPS = 5  # videos with fewer valid clips are dropped

_SENTENCE_RE = re.compile(r"[.!?]+")


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    text: str
    start_s: float
    end_s: float
    word_count: int

    def __post_init__(self):
        if self.end_s < self.start_s:
            raise DataError(f"{self.utt_id}: end {self.end_s} before start {self.start_s}")


@dataclass(frozen=True)
class Segment:
    offset_s: float
    utterances: tuple


@dataclass(frozen=True)
class Transcript:
    video_id: str
    title: str
    duration_s: float
    segments: tuple

    @property
    def utterances(self):
        return [u for seg in self.segments for u in seg.utterances]


@dataclass
class Clip:
    clip_id: str
    video_id: str
    clip_index: int
    t0_s: float
    t1_s: float
    utterances: tuple
    is_valid: bool
    is_chitchat: bool = False
    gold_extract: frozenset = None
    gold_abstract: str = None

    @property
    def total_words(self):
        return sum(u.word_count for u in self.utterances)


@dataclass(frozen=True)
class CorpusSplit:
    train: frozenset
    valid: frozenset
    test: frozenset

    def __post_init__(self):
        overlap = (self.train & self.valid) | (self.train & self.test) | (self.valid & self.test)
        if overlap:
            raise DataError(f"splits overlap on {sorted(overlap)[:5]}")

    def of(self, name):
        return {"train": self.train, "valid": self.valid, "test": self.test}[name]


def _word_count(text):
    return len(text.split())


def _utterance_from_raw(raw, line_no):
    for key in ("start_s", "end_s", "text"):
        if key not in raw:
            raise MalformedRecord(line_no, f"utterance missing field '{key}'")
    return Utterance(
        utt_id="",
        text=str(raw["text"]),
        start_s=float(raw["start_s"]),
        end_s=float(raw["end_s"]),
        word_count=_word_count(str(raw["text"])),
    )


def _assign_ids(transcript):
    """Attach video:clip:index ids, with position taken within the clip window."""
    flat = sorted(transcript.utterances, key=lambda u: u.start_s)
    ids = {}
    positions = {}
    for utt in flat:
        window = int(utt.start_s // CLIP_SECONDS)
        pos = positions.get(window, 0)
        positions[window] = pos + 1
        ids[id(utt)] = f"{transcript.video_id}:{window}:{pos}"
    segments = tuple(
        Segment(
            offset_s=seg.offset_s,
            utterances=tuple(
                replace(u, utt_id=ids[id(u)])
                for u in sorted(seg.utterances, key=lambda u: u.start_s)
            ),
        )
        for seg in transcript.segments
    )
    return replace(transcript, segments=segments)


def load_transcripts(path):
    """Parse transcript JSONL, one video per line, ids assigned on the way in."""
    transcripts = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"bad JSON ({exc.msg})") from exc
            if "video_id" not in raw:
                raise MalformedRecord(line_no, "missing field 'video_id'")
            if "segments" not in raw or not isinstance(raw["segments"], list):
                raise MalformedRecord(line_no, "missing field 'segments'")
            segments = []
            for seg in raw["segments"]:
                utts = tuple(
                    _utterance_from_raw(u, line_no) for u in seg.get("utterances", [])
                )
                segments.append(Segment(offset_s=float(seg.get("offset_s", 0.0)), utterances=utts))
            all_utts = [u for seg in segments for u in seg.utterances]
            duration = float(raw.get("duration_s", 0.0))
            if duration <= 0.0 and all_utts:
                duration = max(u.end_s for u in all_utts)
            transcripts.append(
                _assign_ids(
                    Transcript(
                        video_id=str(raw["video_id"]),
                        title=str(raw.get("title", "")),
                        duration_s=duration,
                        segments=tuple(segments),
                    )
                )
            )
    if not transcripts:
        raise EmptyFile(f"{path}: no transcript records")
    return transcripts


def write_transcripts(transcripts, path):
    """Inverse of load_transcripts; load(write(x)) is structurally x."""
    with open(path, "w", encoding="utf-8") as fh:
        for tr in transcripts:
            record = {
                "video_id": tr.video_id,
                "title": tr.title,
                "duration_s": tr.duration_s,
                "segments": [
                    {
                        "offset_s": seg.offset_s,
                        "utterances": [
                            {"start_s": u.start_s, "end_s": u.end_s, "text": u.text}
                            for u in seg.utterances
                        ],
                    }
                    for seg in tr.segments
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def segment_clips(transcript):
    """Cut a video into consecutive 5-minute windows from t=0.

    An utterance belongs to the window containing its start time. Trailing
    windows with no utterances are dropped; interior empty windows are kept
    (they fail the filters and come out invalid) so clip indices stay
    consecutive. Validity applies the <=333-word / <=38-utterance rules.
    """
    flat = sorted(transcript.utterances, key=lambda u: u.start_s)
    if not flat:
        return []
    duration = max(transcript.duration_s, max(u.start_s for u in flat) + 1e-9)
    n_windows = int(np.ceil(duration / CLIP_SECONDS))
    buckets = [[] for _ in range(n_windows)]
    for utt in flat:
        buckets[min(int(utt.start_s // CLIP_SECONDS), n_windows - 1)].append(utt)
    while buckets and not buckets[-1]:
        buckets.pop()
    clips = []
    for index, bucket in enumerate(buckets):
        words = sum(u.word_count for u in bucket)
        clips.append(
            Clip(
                clip_id=f"{transcript.video_id}:{index}",
                video_id=transcript.video_id,
                clip_index=index,
                t0_s=index * CLIP_SECONDS,
                t1_s=(index + 1) * CLIP_SECONDS,
                utterances=tuple(bucket),
                is_valid=words > MAX_FILTER_WORDS and len(bucket) > MAX_FILTER_UTTS,
            )
        )
    return clips


def build_corpus(transcripts):
    """Valid clips of videos that keep at least MIN_VALID_CLIPS valid clips."""
    kept = []
    for transcript in transcripts:
        clips = segment_clips(transcript)
        valid = [c for c in clips if c.is_valid]
        if len(valid) >= MIN_VALID_CLIPS:
            kept.extend(valid)
    return kept


def load_annotations(path):
    """Annotation JSONL records; 'annotator' is optional (used for agreement)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"bad JSON ({exc.msg})") from exc
            for key in ("video_id", "clip_index"):
                if key not in raw:
                    raise MalformedRecord(line_no, f"annotation missing field '{key}'")
            records.append(
                {
                    "video_id": str(raw["video_id"]),
                    "clip_index": int(raw["clip_index"]),
                    "chitchat": bool(raw.get("chitchat", False)),
                    "extract_indices": [int(i) for i in raw.get("extract_indices", [])],
                    "abstract": raw.get("abstract"),
                    "annotator": raw.get("annotator"),
                }
            )
    if not records:
        raise EmptyFile(f"{path}: no annotation records")
    return records


def apply_annotations(clips, annotations):
    """Mark chitchat and attach gold labels; chitchat clips carry no gold."""
    by_key = {(c.video_id, c.clip_index): c for c in clips}
    for rec in annotations:
        clip = by_key.get((rec["video_id"], rec["clip_index"]))
        if clip is None:
            continue
        if rec["chitchat"]:
            clip.is_chitchat = True
            clip.gold_extract = None
            clip.gold_abstract = None
        else:
            clip.gold_extract = frozenset(rec["extract_indices"])
            clip.gold_abstract = rec["abstract"]
    return clips


def build_keyword_list(titles, stopwords, n):
    """Top-n non-stopword title words by frequency; ties break lexicographically."""
    from .text import tokenize

    counts = {}
    for title in titles:
        for token in tokenize(title):
            if token in stopwords or not any(ch.isalnum() for ch in token):
                continue
            counts[token] = counts.get(token, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [tok for tok, _ in ranked[:n]]


def make_splits(video_ids, seed, fractions=(0.8, 0.1, 0.1)):
    """Deterministic by-video split; same seed always gives the same split."""
    ordered = sorted(set(video_ids))
    rng = np.random.default_rng(seed)
    rng.shuffle(ordered)
    n = len(ordered)
    n_train = int(round(fractions[0] * n))
    n_valid = int(round(fractions[1] * n))
    return CorpusSplit(
        train=frozenset(ordered[:n_train]),
        valid=frozenset(ordered[n_train : n_train + n_valid]),
        test=frozenset(ordered[n_train + n_valid :]),
    )


def save_splits(split, path):
    record = {
        "train": sorted(split.train),
        "valid": sorted(split.valid),
        "test": sorted(split.test),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_splits(path):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return CorpusSplit(
        train=frozenset(raw.get("train", [])),
        valid=frozenset(raw.get("valid", [])),
        test=frozenset(raw.get("test", [])),
    )


@dataclass
class StatsReport:
    """Corpus-level statistics in the shape of the dataset summary table."""

    total_videos: int = 0
    total_clips: int = 0
    chitchat_clips: int = 0
    total_utterances: int = 0
    avg_utterances_per_clip: float = 0.0
    avg_utterance_duration_s: float = 0.0
    avg_words_per_utterance: float = 0.0
    avg_extract_utterances: float = 0.0
    avg_extract_words: float = 0.0
    avg_abstract_sentences: float = 0.0
    avg_abstract_words: float = 0.0
    summary_utterance_count_fraction: float = 0.0
    summary_utterance_duration_fraction: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        record = {k: v for k, v in self.__dict__.items() if k != "extras"}
        record.update(self.extras)
        return record


def corpus_stats(clips):
    """Aggregate counts and averages over (possibly annotated) clips."""
    report = StatsReport()
    if not clips:
        return report
    report.total_videos = len({c.video_id for c in clips})
    report.total_clips = len(clips)
    report.chitchat_clips = sum(1 for c in clips if c.is_chitchat)
    utts = [u for c in clips for u in c.utterances]
    report.total_utterances = len(utts)
    if utts:
        report.avg_utterances_per_clip = len(utts) / len(clips)
        report.avg_utterance_duration_s = float(np.mean([u.end_s - u.start_s for u in utts]))
        report.avg_words_per_utterance = float(np.mean([u.word_count for u in utts]))

    annotated = [c for c in clips if c.gold_extract is not None]
    if annotated:
        ex_utts, ex_words = [], []
        summary_count = total_count = 0
        summary_dur = total_dur = 0.0
        for clip in annotated:
            gold = [clip.utterances[i] for i in sorted(clip.gold_extract) if i < len(clip.utterances)]
            ex_utts.append(len(gold))
            ex_words.append(sum(u.word_count for u in gold))
            summary_count += len(gold)
            total_count += len(clip.utterances)
            summary_dur += sum(u.end_s - u.start_s for u in gold)
            total_dur += sum(u.end_s - u.start_s for u in clip.utterances)
        report.avg_extract_utterances = float(np.mean(ex_utts))
        report.avg_extract_words = float(np.mean(ex_words))
        if total_count:
            report.summary_utterance_count_fraction = summary_count / total_count
        if total_dur:
            report.summary_utterance_duration_fraction = summary_dur / total_dur

    abstracts = [c.gold_abstract for c in clips if c.gold_abstract]
    if abstracts:
        report.avg_abstract_words = float(np.mean([_word_count(a) for a in abstracts]))
        report.avg_abstract_sentences = float(
            np.mean([max(1, len([s for s in _SENTENCE_RE.split(a) if s.strip()])) for a in abstracts])
        )
    return report


def write_clips(clips, path):
    """Processed-corpus JSONL: one clip per line, utterances inlined."""
    with open(path, "w", encoding="utf-8") as fh:
        for clip in clips:
            record = {
                "clip_id": clip.clip_id,
                "video_id": clip.video_id,
                "clip_index": clip.clip_index,
                "t0_s": clip.t0_s,
                "t1_s": clip.t1_s,
                "is_valid": clip.is_valid,
                "is_chitchat": clip.is_chitchat,
                "gold_extract": sorted(clip.gold_extract) if clip.gold_extract is not None else None,
                "gold_abstract": clip.gold_abstract,
                "utterances": [
                    {
                        "utt_id": u.utt_id,
                        "text": u.text,
                        "start_s": u.start_s,
                        "end_s": u.end_s,
                        "word_count": u.word_count,
                    }
                    for u in clip.utterances
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_clips(path):
    clips = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"bad JSON ({exc.msg})") from exc
            try:
                utts = tuple(
                    Utterance(
                        utt_id=u["utt_id"],
                        text=u["text"],
                        start_s=float(u["start_s"]),
                        end_s=float(u["end_s"]),
                        word_count=int(u["word_count"]),
                    )
                    for u in raw["utterances"]
                )
                gold = raw.get("gold_extract")
                clips.append(
                    Clip(
                        clip_id=raw["clip_id"],
                        video_id=raw["video_id"],
                        clip_index=int(raw["clip_index"]),
                        t0_s=float(raw["t0_s"]),
                        t1_s=float(raw["t1_s"]),
                        utterances=utts,
                        is_valid=bool(raw["is_valid"]),
                        is_chitchat=bool(raw.get("is_chitchat", False)),
                        gold_extract=frozenset(gold) if gold is not None else None,
                        gold_abstract=raw.get("gold_abstract"),
                    )
                )
            except KeyError as exc:
                raise MalformedRecord(line_no, f"clip missing field {exc}") from exc
    if not clips:
        raise EmptyFile(f"{path}: no clip records")
    return clips
