"""Unsupervised extractive baselines on the extractor's exact input contract.

All systems see only utterances with >5 words (the same eligibility rule the
trained extractor uses) and emit the shared SummarySelection record, so they
drop into evaluation interchangeably.
"""

import numpy as np

from . import text
from .errors import EmptyClip, NonConvergence
from .extractor import eligible_utterances
from .selection import SummarySelection, rank_and_choose

DAMPING = 0.85
TOL = 1e-6
MAX_ITER = 1000


def _selection(system, clip, scored, n):
    ranked, chosen = rank_and_choose(scored, n)
    return SummarySelection(
        clip_id=clip.clip_id, system=system, k=n, ranked=ranked, selected=chosen
    )


def lead_n(clip, n):
    """First min(n, N) eligible utterances."""
    pool = eligible_utterances(clip)
    if not pool:
        raise EmptyClip(f"{clip.clip_id}: no eligible utterances")
    scored = [(i, 1.0 if rank < n else 0.0) for rank, (i, _) in enumerate(pool)]
    return _selection("lead", clip, scored, n)


def sumbasic(clip, n, stopwords=frozenset()):
    """Frequency-driven greedy picking with squared-probability updates.

    A sentence scores the mean unigram probability of its content words; after
    a pick, probabilities of the picked sentence's words are squared so the
    next pick prefers fresh content. The recorded score is the one the
    sentence had in the round it was picked (or in the final round if never
    picked). A sentence is picked at most once.
    """
    pool = eligible_utterances(clip)
    if not pool:
        raise EmptyClip(f"{clip.clip_id}: no eligible utterances")
    token_lists = [
        [w for w in text.tokenize(u.text) if w not in stopwords] for _, u in pool
    ]
    total = sum(len(tokens) for tokens in token_lists)
    prob = {}
    for tokens in token_lists:
        for w in tokens:
            prob[w] = prob.get(w, 0.0) + 1.0 / max(1, total)

    def round_score(row):
        tokens = token_lists[row]
        return sum(prob[w] for w in tokens) / len(tokens) if tokens else 0.0

    picked = []  # (row, score at pick time), in pick order
    remaining = list(range(len(pool)))
    while remaining and len(picked) < n:
        scores = [(row, round_score(row)) for row in remaining]
        best_row, best_score = max(scores, key=lambda rs: (rs[1], -rs[0]))
        picked.append((best_row, best_score))
        remaining.remove(best_row)
        for w in set(token_lists[best_row]):
            prob[w] = prob[w] ** 2

    leftovers = sorted(remaining, key=lambda row: (-round_score(row), row))
    ranked = tuple(
        [(pool[row][0], float(s)) for row, s in picked]
        + [(pool[row][0], float(round_score(row))) for row in leftovers]
    )
    chosen = tuple(sorted(pool[row][0] for row, _ in picked))
    return SummarySelection(
        clip_id=clip.clip_id, system="sumbasic", k=n, ranked=ranked, selected=chosen
    )


def stationary_scores(similarity, damping=DAMPING, tol=TOL, max_iter=MAX_ITER):
    """Stationary distribution of the damped row-normalized similarity walk.

    Rows that sum to zero fall back to uniform transitions. Power iteration
    runs until ||vG - v||_1 <= tol; NonConvergence past max_iter.
    """
    n = similarity.shape[0]
    if n == 1:
        return np.ones(1)
    rows = similarity.sum(axis=1, keepdims=True)
    m = np.where(rows > 0, similarity / np.where(rows == 0, 1.0, rows), 1.0 / n)
    g = damping * m + (1.0 - damping) / n
    v = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = v @ g
        if np.abs(nxt - v).sum() <= tol:
            return nxt
        v = nxt
    raise NonConvergence(f"power iteration did not reach {tol} in {max_iter} iterations")


def _tfidf_cosine_matrix(token_lists):
    n = len(token_lists)
    df = {}
    for tokens in token_lists:
        for w in set(tokens):
            df[w] = df.get(w, 0) + 1
    idf = {w: np.log(n / c) for w, c in df.items()}
    vectors = []
    for tokens in token_lists:
        vec = {}
        for w in tokens:
            if idf[w] > 0:
                vec[w] = vec.get(w, 0.0) + idf[w]
        norm = np.sqrt(sum(x * x for x in vec.values()))
        vectors.append((vec, norm))
    sim = np.zeros((n, n))
    for i in range(n):
        vi, ni = vectors[i]
        for j in range(i + 1, n):
            vj, nj = vectors[j]
            if ni == 0 or nj == 0:
                continue
            dot = sum(x * vj.get(w, 0.0) for w, x in vi.items())
            sim[i, j] = sim[j, i] = dot / (ni * nj)
    return sim


def _overlap_matrix(token_lists):
    n = len(token_lists)
    sim = np.zeros((n, n))
    sets = [set(tokens) for tokens in token_lists]
    for i in range(n):
        for j in range(i + 1, n):
            if len(token_lists[i]) < 1 or len(token_lists[j]) < 1:
                continue
            denom = np.log(len(token_lists[i])) + np.log(len(token_lists[j]))
            if denom <= 0:
                continue
            sim[i, j] = sim[j, i] = len(sets[i] & sets[j]) / denom
    return sim


def _centrality(system, clip, n, matrix_fn, stopwords, damping, tol, max_iter):
    pool = eligible_utterances(clip)
    if not pool:
        raise EmptyClip(f"{clip.clip_id}: no eligible utterances")
    token_lists = [
        [w for w in text.tokenize(u.text) if w not in stopwords] for _, u in pool
    ]
    sim = matrix_fn(token_lists)
    scores = stationary_scores(sim, damping=damping, tol=tol, max_iter=max_iter)
    scored = [(pool[row][0], float(scores[row])) for row in range(len(pool))]
    return _selection(system, clip, scored, n)


def lexrank(clip, n, damping=DAMPING, tol=TOL, max_iter=MAX_ITER, stopwords=frozenset()):
    """TF-IDF cosine similarity graph ranked by its stationary distribution."""
    return _centrality("lexrank", clip, n, _tfidf_cosine_matrix, stopwords, damping, tol, max_iter)


def textrank(clip, n, damping=DAMPING, tol=TOL, max_iter=MAX_ITER, stopwords=frozenset()):
    """Word-overlap similarity normalized by log sentence lengths."""
    return _centrality("textrank", clip, n, _overlap_matrix, stopwords, damping, tol, max_iter)


BASELINES = {
    "lead": lead_n,
    "sumbasic": sumbasic,
    "lexrank": lexrank,
    "textrank": textrank,
}
