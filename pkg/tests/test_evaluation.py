import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqsum import evaluation as ev
from vqsum._porter import stem
from vqsum.corpus import Clip, Utterance
from vqsum.errors import EmptyText, InsufficientAnnotators, NoJudgments


# ------------------------------------------------------------------ P/R/F


def test_prf_hand_values():
    got = ev.prf_single({1, 2}, {2, 3})
    assert (got.precision, got.recall, got.f1) == (0.5, 0.5, 0.5)
    perfect = ev.prf_single({1, 2}, {1, 2})
    assert (perfect.precision, perfect.recall, perfect.f1) == (1.0, 1.0, 1.0)
    nothing = ev.prf_single(set(), {1})
    assert nothing.f1 == 0.0


def test_prf_micro_vs_macro():
    pairs = [({1}, {1}), ({1, 2, 3, 4}, {5, 6, 7, 8})]
    micro = ev.prf_micro(pairs)
    macro = ev.prf_macro(pairs)
    # micro pools counts: tp=1, fp=4, fn=4
    assert micro.precision == pytest.approx(1 / 5)
    assert micro.recall == pytest.approx(1 / 5)
    # macro averages per-clip scores: (1 + 0) / 2
    assert macro.f1 == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(
    pred=st.sets(st.integers(0, 10), max_size=8),
    gold=st.sets(st.integers(0, 10), min_size=1, max_size=8),
)
def test_prf_swap_symmetry(pred, gold):
    a = ev.prf_single(pred, gold)
    b = ev.prf_single(gold, pred)
    assert a.precision == pytest.approx(b.recall)
    assert a.recall == pytest.approx(b.precision)
    assert a.f1 == pytest.approx(b.f1)


# ------------------------------------------------------------------ ROUGE

ROUGE_FIXTURES = [
    # (fn, candidate, reference, expected P, R, F) - all hand-enumerated
    ("r1", "the cat", "the cat sat on the mat", 1.0, 2 / 6, 0.5),
    ("r1", "a b c", "a b c", 1.0, 1.0, 1.0),
    ("r1", "a b", "c d", 0.0, 0.0, 0.0),
    ("r1", "a a a b", "a b b", 0.5, 2 / 3, 4 / 7),
    ("r1", "The CAT!", "the cat", 1.0, 1.0, 1.0),
    ("r2", "the cat sat", "the cat ran", 0.5, 0.5, 0.5),
    ("r2", "x y z w", "y z w q", 2 / 3, 2 / 3, 2 / 3),
    ("rl", "a c", "a b c", 1.0, 2 / 3, 0.8),
    ("rl", "b a", "a b", 0.5, 0.5, 0.5),
    ("rl", "a x b y c", "a b c", 0.6, 1.0, 0.75),
]


@pytest.mark.parametrize("fn,cand,ref,p,r,f", ROUGE_FIXTURES)
def test_rouge_hand_fixtures(fn, cand, ref, p, r, f):
    if fn == "r1":
        got = ev.rouge_n(cand, ref, 1)
    elif fn == "r2":
        got = ev.rouge_n(cand, ref, 2)
    else:
        got = ev.rouge_l(cand, ref)
    assert got.precision == pytest.approx(p, abs=1e-6)
    assert got.recall == pytest.approx(r, abs=1e-6)
    assert got.f1 == pytest.approx(f, abs=1e-6)


def test_rouge_reversed_two_token_reference():
    got = ev.rouge_l("b a", "a b")
    assert got.precision == pytest.approx(0.5)  # LCS 1


def test_rouge_empty_raises():
    with pytest.raises(EmptyText):
        ev.rouge_n("", "something", 1)
    with pytest.raises(EmptyText):
        ev.rouge_l("something", "...")  # punctuation only


def test_rouge_stemming_flag():
    got = ev.rouge_n("running runs", "run", 1, stemming=True)
    assert got.recall == pytest.approx(1.0)
    assert got.precision == pytest.approx(0.5)
    plain = ev.rouge_n("running runs", "run", 1, stemming=False)
    assert plain.f1 == 0.0


def test_porter_classic_pairs():
    pairs = {
        "caresses": "caress", "ponies": "poni", "ties": "ti", "caress": "caress",
        "cats": "cat", "feed": "feed", "agreed": "agre", "plastered": "plaster",
        "motoring": "motor", "sing": "sing", "hopping": "hop", "happy": "happi",
        "relational": "relat", "conditional": "condit", "rational": "ration",
        "generalizations": "gener", "oscillators": "oscil",
    }
    for word, expected in pairs.items():
        assert stem(word) == expected, word


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=12))
def test_rouge_identity_and_monotone_recall(tokens):
    content = " ".join(tokens)
    same = ev.rouge_n(content, content, 1)
    assert same.f1 == pytest.approx(1.0)
    # adding a matching token to the candidate never lowers recall
    base = ev.rouge_n(content, content + " e", 1)
    grown = ev.rouge_n(content + " e", content + " e", 1)
    assert grown.recall >= base.recall - 1e-12


# ------------------------------------------------------------------ kappa


def _clip(clip_id, n_windows, window_s=10.0):
    utts = tuple(
        Utterance(
            utt_id=f"{clip_id}:{i}",
            text="spoken words in this utterance here",
            start_s=i * window_s + 1.0,
            end_s=i * window_s + 4.0,
            word_count=6,
        )
        for i in range(n_windows)
    )
    return Clip(clip_id=clip_id, video_id="v", clip_index=0, t0_s=0.0,
                t1_s=n_windows * window_s, utterances=utts, is_valid=True)


def _direct_fleiss(table):
    """Direct evaluation of the agreement formula on an N x 2 count table."""
    table = np.asarray(table, dtype=float)
    n = table[0].sum()
    big_n = table.shape[0]
    p_i = (np.square(table).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_i.mean()
    p_j = table.sum(axis=0) / (big_n * n)
    p_e = np.square(p_j).sum()
    return (p_bar - p_e) / (1 - p_e)


def test_kappa_perfect_agreement_is_one():
    clip = _clip("c1", 3)
    selections = {"a": {"c1": {0}}, "b": {"c1": {0}}, "c": {"c1": {0}}}
    assert ev.fleiss_kappa(selections, [clip]) == pytest.approx(1.0)


def test_kappa_all_identical_selections():
    clip = _clip("c1", 4)
    chosen = {0, 2}
    selections = {a: {"c1": set(chosen)} for a in "abc"}
    assert ev.fleiss_kappa(selections, [clip]) == pytest.approx(1.0)


def test_kappa_mixed_fixture_matches_direct_formula():
    clip = _clip("c1", 4)
    selections = {"a": {"c1": {0, 1, 2}}, "b": {"c1": {0, 1}}, "c": {"c1": {0}}}
    got = ev.fleiss_kappa(selections, [clip])
    expected = _direct_fleiss([[0, 3], [1, 2], [2, 1], [3, 0]])
    assert got == pytest.approx(expected, abs=1e-9)
    assert got == pytest.approx(1 / 3, abs=1e-9)


def test_kappa_two_annotator_fixture_matches_direct_formula():
    clip = _clip("c1", 5)
    selections = {"a": {"c1": {0, 1, 4}}, "b": {"c1": {0, 2, 4}}}
    got = ev.fleiss_kappa(selections, [clip])
    expected = _direct_fleiss([[0, 2], [1, 1], [1, 1], [2, 0], [0, 2]])
    assert got == pytest.approx(expected, abs=1e-9)


def test_kappa_invariances():
    clips = [_clip("c1", 4), _clip("c2", 3)]
    selections = {"a": {"c1": {0, 1}, "c2": {2}}, "b": {"c1": {1}, "c2": {0, 2}},
                  "c": {"c1": {0, 1, 3}, "c2": set()}}
    base = ev.fleiss_kappa(selections, clips)
    permuted = {k: selections[k] for k in ["c", "a", "b"]}
    assert ev.fleiss_kappa(permuted, clips) == pytest.approx(base, abs=1e-12)
    assert ev.fleiss_kappa(selections, clips[::-1]) == pytest.approx(base, abs=1e-12)


def test_kappa_needs_two_annotators():
    with pytest.raises(InsufficientAnnotators):
        ev.fleiss_kappa({"a": {"c1": {0}}}, [_clip("c1", 3)])


def test_kappa_overlap_uses_time_not_index():
    # an utterance spanning two windows marks both
    utt = Utterance(utt_id="c1:0", text="long words span windows here now",
                    start_s=8.0, end_s=14.0, word_count=6)
    clip = Clip(clip_id="c1", video_id="v", clip_index=0, t0_s=0.0, t1_s=20.0,
                utterances=(utt,), is_valid=True)
    selections = {"a": {"c1": {0}}, "b": {"c1": set()}}
    table = [[1, 1], [1, 1]]  # both windows: a yes, b no
    got = ev.fleiss_kappa(selections, [clip])
    assert got == pytest.approx(_direct_fleiss(table), abs=1e-12)


# -------------------------------------------------------------------- BWS


def test_bws_arithmetic():
    records = [ev.JudgmentRecord("i1", "sys", best=3, worst=1, total=5)]
    assert ev.bws(records)["sys"] == pytest.approx(0.4)
    records = [ev.JudgmentRecord("i1", "bad", best=0, worst=4, total=4)]
    assert ev.bws(records)["bad"] == pytest.approx(-1.0)


def test_bws_zero_sum_when_one_best_one_worst_per_judgment():
    rng = np.random.default_rng(0)
    systems = ["a", "b", "c"]
    tallies = {s: [0, 0, 0] for s in systems}  # best, worst, total
    for _ in range(30):
        best, worst = rng.choice(3, size=2, replace=False)
        for i, s in enumerate(systems):
            tallies[s][0] += int(i == best)
            tallies[s][1] += int(i == worst)
            tallies[s][2] += 1
    records = [
        ev.JudgmentRecord("item", s, best=b, worst=w, total=t)
        for s, (b, w, t) in tallies.items()
    ]
    scores = ev.bws(records)
    assert sum(scores.values()) == pytest.approx(0.0, abs=1e-12)


def test_bws_errors():
    with pytest.raises(NoJudgments):
        ev.bws([])
    with pytest.raises(NoJudgments):
        ev.JudgmentRecord("i", "s", best=3, worst=3, total=5)


def test_judgments_csv_loader(tmp_path):
    path = tmp_path / "judgments.csv"
    path.write_text(
        "item,system,rank\n"
        "clip1,vq,best\nclip1,lead,worst\nclip1,lexrank,none\n"
        "clip2,vq,best\nclip2,lead,none\nclip2,lexrank,worst\n"
    )
    records = ev.load_judgments_csv(path)
    scores = ev.bws(records)
    assert scores["vq"] == pytest.approx(1.0)
    assert scores["lead"] == pytest.approx(-0.5)
    assert scores["lexrank"] == pytest.approx(-0.5)
    assert sum(scores.values()) == pytest.approx(0.0)


# ------------------------------------------------------------- aggregation


def test_summary_word_count():
    assert ev.summary_word_count(["four words right here", "and four more words"]) == 8
    assert ev.summary_word_count([]) == 0


def test_evaluate_system_report_shape():
    utts = tuple(
        Utterance(utt_id=f"v:0:{i}", text=f"topic words number {i} spoken here",
                  start_s=i * 5.0, end_s=i * 5.0 + 4.0, word_count=6)
        for i in range(6)
    )
    clip = Clip(clip_id="v:0", video_id="v", clip_index=0, t0_s=0.0, t1_s=300.0,
                utterances=utts, is_valid=True,
                gold_extract=frozenset({1, 2}), gold_abstract="topic words spoken.")
    records = [{
        "clip_id": "v:0", "system": "vq", "k": 2,
        "selected": [
            {"index": 1, "score": 4, "text": utts[1].text},
            {"index": 3, "score": 2, "text": utts[3].text},
        ],
    }]
    report = ev.evaluate_system(records, {"v:0": clip})
    assert report["prf_micro"]["f1"] == pytest.approx(0.5)
    assert 0 < report["rouge1"]["f1"] <= 1
    assert report["avg_words"] == pytest.approx(12.0)
