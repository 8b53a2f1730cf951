"""Summary extraction from a frozen model via prominent latent codes.

Per clip: quantize every eligible utterance into H codes, drop the globally
degenerate codes (the most frequent ones over the training split - they track
chitchat and verbosity, not content), keep the clip's p most frequent
remaining codes as the prominent set P, and score each utterance by how many
of its codes fall in P. The top-k utterances, ties to the earlier position,
form the summary in transcript order.
"""

from dataclasses import dataclass

import numpy as np

from . import text
from .errors import EmptyClip, NoGoldLabels
from .selection import ErrorRecord, SummarySelection, rank_and_choose

SYSTEM_NAME = "vq"
DEFAULT_P_SIZE = 50
DEFAULT_EXCLUDE_TOP = 2
DEFAULT_K = 5  # one utterance per minute of clip


@dataclass(frozen=True)
class CodeStats:
    counts: np.ndarray  # (K,) assignment counts

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass(frozen=True)
class ProminentCodes:
    codes: frozenset
    excluded: tuple

    def __post_init__(self):
        assert not (self.codes & set(self.excluded))


@dataclass(frozen=True)
class ExtractConfig:
    p_size: int = DEFAULT_P_SIZE
    k: int = DEFAULT_K
    excluded: tuple = ()
    max_len: int = 64
    batch_size: int = 64


def eligible_utterances(clip):
    """Indices and utterances long enough to carry a trained representation."""
    return [
        (i, u) for i, u in enumerate(clip.utterances) if u.word_count >= text.MIN_TRAIN_WORDS
    ]


def assignments(model, vocab, utterances, max_len=64, batch_size=64):
    """Latent codes (N, H) for a list of utterances, in order."""
    rows = []
    for start in range(0, len(utterances), batch_size):
        chunk = utterances[start : start + batch_size]
        if model.file_backed:
            z = model.codes(utt_ids=[u.utt_id for u in chunk])
        else:
            encoded = [text.encode(u.text, vocab, max_len=max_len).ids for u in chunk]
            width = max(len(ids) for ids in encoded)
            ids = np.full((len(chunk), width), text.PAD, dtype=np.int64)
            for r, seq in enumerate(encoded):
                ids[r, : len(seq)] = seq
            z = model.codes(ids=ids)
        rows.append(z)
    return np.concatenate(rows, axis=0)


def code_stats(model, vocab, utterances, max_len=64, batch_size=64):
    """Assignment counts over the given utterances (N*H total mass)."""
    counts = np.zeros(model.profile.codebook_size, dtype=np.int64)
    if utterances:
        z = assignments(model, vocab, utterances, max_len=max_len, batch_size=batch_size)
        np.add.at(counts, z.reshape(-1), 1)
    return CodeStats(counts=counts)


def degenerate_codes(global_stats, m=DEFAULT_EXCLUDE_TOP):
    """The m globally most frequent codes; ties break to the lower index."""
    if m <= 0:
        return []
    counts = global_stats.counts
    order = np.lexsort((np.arange(len(counts)), -counts))
    return [int(c) for c in order[:m]]


def prominent_codes(clip_stats, excluded, p_size):
    """Top p_size codes in the clip after exclusion; ties to the lower index."""
    counts = clip_stats.counts.astype(np.int64).copy()
    counts[list(excluded)] = -1
    order = np.lexsort((np.arange(len(counts)), -counts))
    top = [int(c) for c in order[:p_size] if counts[c] > 0]
    return ProminentCodes(codes=frozenset(top), excluded=tuple(excluded))


def score(z_row, prominent):
    """How many of the utterance's codes are prominent."""
    return int(sum(1 for code in z_row if int(code) in prominent))


def summarize_clip(model, vocab, clip, config):
    """Scored, ranked selection for one clip; pure given a frozen model."""
    pool = eligible_utterances(clip)
    if not pool:
        raise EmptyClip(f"{clip.clip_id}: no eligible utterances")
    utts = [u for _, u in pool]
    z = assignments(model, vocab, utts, max_len=config.max_len, batch_size=config.batch_size)
    counts = np.zeros(model.profile.codebook_size, dtype=np.int64)
    np.add.at(counts, z.reshape(-1), 1)
    prominent = prominent_codes(CodeStats(counts=counts), config.excluded, config.p_size)
    scored = [(pool[row][0], score(z[row], prominent.codes)) for row in range(len(pool))]
    ranked, chosen = rank_and_choose(scored, config.k)
    return SummarySelection(
        clip_id=clip.clip_id,
        system=SYSTEM_NAME,
        k=config.k,
        ranked=ranked,
        selected=chosen,
        p_size=config.p_size,
        excluded_codes=tuple(config.excluded),
    )


def fit_excluded(model, vocab, training_utterances, m=DEFAULT_EXCLUDE_TOP, max_len=64):
    """Global degenerate-code list, frozen before any clip is summarized."""
    stats = code_stats(model, vocab, training_utterances, max_len=max_len)
    return degenerate_codes(stats, m=m)


def grid_search_p(model, vocab, clips, candidates, excluded=(), k=DEFAULT_K, max_len=64):
    """p_size with the best mean utterance-level F1 at the given k.

    Ties prefer the smaller p_size. Clips without gold extracts are skipped;
    if none carry gold, there is nothing to tune against.
    """
    from .evaluation import prf_single

    labelled = [c for c in clips if c.gold_extract is not None]
    if not labelled:
        raise NoGoldLabels("grid search needs validation clips with gold extracts")
    candidates = sorted(set(int(p) for p in candidates))
    if not candidates:
        raise NoGoldLabels("no candidate p_size values given")
    best_p, best_f1 = candidates[0], -1.0
    for p_size in candidates:
        config = ExtractConfig(p_size=p_size, k=k, excluded=tuple(excluded), max_len=max_len)
        f1s = []
        for clip in labelled:
            try:
                sel = summarize_clip(model, vocab, clip, config)
            except EmptyClip:
                continue
            f1s.append(prf_single(set(sel.selected), set(clip.gold_extract)).f1)
        mean_f1 = float(np.mean(f1s)) if f1s else 0.0
        if mean_f1 > best_f1:
            best_p, best_f1 = p_size, mean_f1
    return best_p


def stream(model, vocab, clips, config):
    """Per-clip summaries as they arrive; failures become error records.

    Each selection depends only on its own clip plus the pre-frozen exclusion
    list, so streaming output matches batch summarization clip for clip.
    """
    for clip in clips:
        try:
            yield summarize_clip(model, vocab, clip, config)
        except EmptyClip as exc:
            yield ErrorRecord(clip_id=clip.clip_id, error=str(exc))
