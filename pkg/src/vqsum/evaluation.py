"""Every metric the toolkit reports.

Utterance-level precision/recall/F1 against gold extracts (micro-averaged as
the headline, macro also emitted), ROUGE-1/2/L against human abstracts,
Fleiss' kappa over 10-second intervals for annotator agreement, and Best-Worst
Scaling for human judgments. ROUGE aggregation over a corpus is the mean of
per-clip scores; F1 is the headline and all three components are kept in
the report.
"""

import csv
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from ._porter import stem as porter_stem
from .errors import EmptyText, InsufficientAnnotators, NoGoldLabels, NoJudgments

_ROUGE_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class RougeScore:
    variant: str
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class JudgmentRecord:
    item_id: str
    system: str
    best: int
    worst: int
    total: int

    def __post_init__(self):
        if self.best + self.worst > self.total:
            raise NoJudgments(f"{self.item_id}/{self.system}: best+worst exceeds total")


def _prf_from_counts(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn)


def prf_single(predicted, gold):
    predicted, gold = set(predicted), set(gold)
    tp = len(predicted & gold)
    return _prf_from_counts(tp, len(predicted) - tp, len(gold) - tp)


def prf_micro(pairs):
    """Sum tp/fp/fn over clips, then divide."""
    pairs = list(pairs)
    if not pairs:
        raise NoGoldLabels("no (predicted, gold) pairs to score")
    tp = fp = fn = 0
    for predicted, gold in pairs:
        single = prf_single(predicted, gold)
        tp, fp, fn = tp + single.tp, fp + single.fp, fn + single.fn
    return _prf_from_counts(tp, fp, fn)


def prf_macro(pairs):
    """Mean of per-clip precision/recall/F1."""
    singles = [prf_single(p, g) for p, g in pairs]
    if not singles:
        raise NoGoldLabels("no (predicted, gold) pairs to score")
    return PRF(
        precision=float(np.mean([s.precision for s in singles])),
        recall=float(np.mean([s.recall for s in singles])),
        f1=float(np.mean([s.f1 for s in singles])),
        tp=sum(s.tp for s in singles),
        fp=sum(s.fp for s in singles),
        fn=sum(s.fn for s in singles),
    )


def rouge_tokens(raw, stemming=False):
    """Lowercased alphanumeric tokens; optional Porter stemming."""
    tokens = _ROUGE_TOKEN_RE.findall(raw.lower())
    if stemming:
        tokens = [porter_stem(t) for t in tokens]
    return tokens


def _fscore(variant, overlap, n_cand, n_ref):
    precision = overlap / n_cand if n_cand else 0.0
    recall = overlap / n_ref if n_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return RougeScore(variant=variant, precision=precision, recall=recall, f1=f1)


def rouge_n(candidate, reference, n, stemming=False):
    """Clipped n-gram overlap, n in {1, 2}."""
    if n not in (1, 2):
        raise ValueError("rouge_n supports n in {1, 2}")
    cand = rouge_tokens(candidate, stemming)
    ref = rouge_tokens(reference, stemming)
    if not cand or not ref:
        raise EmptyText("ROUGE needs non-empty candidate and reference")
    cand_grams = Counter(tuple(cand[i : i + n]) for i in range(len(cand) - n + 1))
    ref_grams = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    overlap = sum(min(c, ref_grams[g]) for g, c in cand_grams.items())
    return _fscore(str(n), overlap, sum(cand_grams.values()), sum(ref_grams.values()))


def _lcs_len(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference, stemming=False):
    """Longest-common-subsequence F over the whole token sequences."""
    cand = rouge_tokens(candidate, stemming)
    ref = rouge_tokens(reference, stemming)
    if not cand or not ref:
        raise EmptyText("ROUGE needs non-empty candidate and reference")
    lcs = _lcs_len(cand, ref)
    return _fscore("L", lcs, len(cand), len(ref))


def _overlaps(utterance, w0, w1):
    if utterance.end_s > utterance.start_s:
        return utterance.start_s < w1 and utterance.end_s > w0
    return w0 <= utterance.start_s < w1


def fleiss_kappa(selections, clips, interval_s=10.0):
    """Chance-corrected agreement over fixed time intervals.

    selections: {annotator: {clip_id: set of utterance indices}}. Each
    interval of each clip becomes one binary item per annotator: 1 if any of
    that annotator's selected utterances overlaps the interval. Annotators
    who all mark some content in an interval, or none at all, agree there.
    """
    annotators = sorted(selections)
    n = len(annotators)
    if n < 2:
        raise InsufficientAnnotators("Fleiss' kappa needs at least 2 annotators")
    items = []  # per item: count of annotators voting 1
    for clip in sorted(clips, key=lambda c: c.clip_id):
        w0 = clip.t0_s
        while w0 < clip.t1_s:
            w1 = min(w0 + interval_s, clip.t1_s)
            votes = 0
            for annotator in annotators:
                chosen = selections[annotator].get(clip.clip_id, set())
                hit = any(
                    _overlaps(clip.utterances[i], w0, w1)
                    for i in chosen
                    if i < len(clip.utterances)
                )
                votes += int(hit)
            items.append(votes)
            w0 += interval_s
    if not items:
        raise InsufficientAnnotators("no intervals to rate")

    table = np.array([[n - v, v] for v in items], dtype=np.float64)
    big_n = len(items)
    p_i = (np.square(table).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_i.mean()
    p_j = table.sum(axis=0) / (big_n * n)
    p_e = float(np.square(p_j).sum())
    if p_e >= 1.0:
        return 1.0 if p_bar >= 1.0 else 0.0
    return float((p_bar - p_e) / (1.0 - p_e))


def bws(records):
    """Best-minus-worst fraction per system, in [-1, 1]."""
    records = list(records)
    if not records:
        raise NoJudgments("no judgment records")
    best, worst, total = Counter(), Counter(), Counter()
    for rec in records:
        best[rec.system] += rec.best
        worst[rec.system] += rec.worst
        total[rec.system] += rec.total
    scores = {}
    for system in sorted(total):
        if total[system] == 0:
            raise NoJudgments(f"system {system!r} has zero judgments")
        scores[system] = (best[system] - worst[system]) / total[system]
    return scores


def load_judgments_csv(path):
    """Rows of (item, system, rank in {best, worst, none}) -> JudgmentRecords."""
    tally = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["item"], row["system"])
            best, worst, total = tally.get(key, (0, 0, 0))
            rank = row["rank"].strip().lower()
            if rank not in ("best", "worst", "none"):
                raise NoJudgments(f"unknown rank {row['rank']!r} for {key}")
            tally[key] = (best + (rank == "best"), worst + (rank == "worst"), total + 1)
    return [
        JudgmentRecord(item_id=item, system=system, best=b, worst=w, total=t)
        for (item, system), (b, w, t) in sorted(tally.items())
    ]


def summary_word_count(texts):
    """Total whitespace words across selected utterances."""
    return sum(len(t.split()) for t in texts)


def evaluate_system(records, clips_by_id, stemming=False):
    """Metrics for one system's selection records against gold labels."""
    pairs = []
    rouge_rows = {"1": [], "2": [], "L": []}
    word_counts = []
    for record in records:
        clip = clips_by_id.get(record.get("clip_id"))
        if clip is None or "selected" not in record:
            continue
        predicted = {s["index"] for s in record["selected"]}
        texts = [s["text"] for s in record["selected"]]
        word_counts.append(summary_word_count(texts))
        if clip.gold_extract is not None:
            pairs.append((predicted, set(clip.gold_extract)))
        if clip.gold_abstract:
            summary = " ".join(texts)
            if summary.strip():
                rouge_rows["1"].append(rouge_n(summary, clip.gold_abstract, 1, stemming))
                rouge_rows["2"].append(rouge_n(summary, clip.gold_abstract, 2, stemming))
                rouge_rows["L"].append(rouge_l(summary, clip.gold_abstract, stemming))
    if not pairs and not any(rouge_rows.values()):
        raise NoGoldLabels("no clips with gold labels matched the selections")

    def _prf_dict(prf):
        return {"precision": prf.precision, "recall": prf.recall, "f1": prf.f1}

    def _rouge_dict(rows):
        if not rows:
            return None
        return {
            "precision": float(np.mean([r.precision for r in rows])),
            "recall": float(np.mean([r.recall for r in rows])),
            "f1": float(np.mean([r.f1 for r in rows])),
        }

    report = {
        "clips_scored": len(pairs),
        "prf_micro": _prf_dict(prf_micro(pairs)) if pairs else None,
        "prf_macro": _prf_dict(prf_macro(pairs)) if pairs else None,
        "rouge1": _rouge_dict(rouge_rows["1"]),
        "rouge2": _rouge_dict(rouge_rows["2"]),
        "rougeL": _rouge_dict(rouge_rows["L"]),
        "avg_words": float(np.mean(word_counts)) if word_counts else 0.0,
    }
    return report
