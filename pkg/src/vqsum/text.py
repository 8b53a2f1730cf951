"""Tokenization and vocabulary for the reconstruction objective.

Word-level, lowercased, punctuation split off as separate tokens. Sequences
are framed as [CLS] w1..wn [SEP]; only utterances longer than 5 raw words ever
enter the training pool.
"""

import re
from dataclasses import dataclass

from .errors import EmptyCorpus

PAD, UNK, CLS, SEP = 0, 1, 2, 3
RESERVED = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]

MIN_TRAIN_WORDS = 6  # keep utterances with >5 words

_TOKEN_RE = re.compile(r"[\w']+|[^\w\s]")


def tokenize(text):
    """Lowercase word tokens with punctuation split off."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocab:
    """Bijective token<->id map with dense ids; 0..3 are reserved."""

    token_to_id: dict
    id_to_token: tuple

    def __len__(self):
        return len(self.id_to_token)

    def id_of(self, token):
        return self.token_to_id.get(token, UNK)

    def token_of(self, idx):
        return self.id_to_token[idx]


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple
    word_count: int


def build_vocab(texts, min_freq=1, max_size=None):
    """Frequency-ranked vocabulary over tokenized texts.

    Ties in frequency break lexicographically so rebuilds are deterministic.
    `max_size` bounds the total size including the four reserved tokens.
    """
    texts = list(texts)
    if not texts:
        raise EmptyCorpus("cannot build a vocabulary from no text")
    counts = {}
    for text in texts:
        for token in tokenize(text):
            counts[token] = counts.get(token, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, freq in ranked if freq >= min_freq]
    if max_size is not None:
        kept = kept[: max(0, max_size - len(RESERVED))]
    id_to_token = tuple(RESERVED + kept)
    return Vocab({tok: i for i, tok in enumerate(id_to_token)}, id_to_token)


def encode(text, vocab, max_len=64):
    """[CLS] tokens [SEP], truncated to max_len with [SEP] kept last."""
    ids = [CLS] + [vocab.id_of(tok) for tok in tokenize(text)] + [SEP]
    if len(ids) > max_len:
        ids = ids[: max_len - 1] + [SEP]
    return TokenSequence(tuple(ids), word_count=len(text.split()))


def decode(ids, vocab):
    """Tokens for the non-special ids, for round-trip checks and inspection."""
    return [vocab.token_of(i) for i in ids if i not in (PAD, CLS, SEP)]


def training_pool(clips, split_videos=None):
    """Utterances eligible for training: >5 words, from valid non-chitchat clips.

    `split_videos` restricts to clips whose video is in the given set (the
    training split); None means all clips.
    """
    pool = []
    for clip in clips:
        if not clip.is_valid or clip.is_chitchat:
            continue
        if split_videos is not None and clip.video_id not in split_videos:
            continue
        pool.extend(u for u in clip.utterances if u.word_count >= MIN_TRAIN_WORDS)
    return pool


def save_vocab(vocab, path):
    """One token per line; the line number is the id."""
    with open(path, "w", encoding="utf-8") as fh:
        for token in vocab.id_to_token:
            fh.write(token + "\n")


def load_vocab(path):
    with open(path, encoding="utf-8") as fh:
        id_to_token = tuple(line.rstrip("\n") for line in fh if line.strip())
    return Vocab({tok: i for i, tok in enumerate(id_to_token)}, id_to_token)
