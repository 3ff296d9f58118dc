import logging

import numpy as np
import pytest

from histnorm.data import TokenPair
from histnorm.decoding import (
    BeamResult, beam_search, beam_search_core, build_unchanged_lexicon, default_max_len,
    greedy_core, greedy_decode, hybrid_normalize, normalize_batch, score_sequence, search_problem,
)
from histnorm.segmentation import EOS_ID

from oracles import TableModel, model_exhaustive, two_symbol_model


def table_search(tm, beam, max_len):
    step, init = tm.search_problem()
    return beam_search_core(step, init, beam, max_len, eos=tm.eos, bos=-1)


# -- generic core ------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(30))
def test_beam_one_is_greedy(seed):
    tm = TableModel(4, seed, eos=0, temperature=2.0)
    step, init = tm.search_problem()
    assert table_search(tm, 1, 6) == greedy_core(step, init, 6, eos=0, bos=-1)


@pytest.mark.parametrize("seed", range(20))
def test_saturated_beam_is_exact(seed):
    tm = TableModel(3, seed, eos=0, temperature=2.0)
    body, score = tm.exhaustive_best(4, bos=-1)
    res = table_search(tm, 81, 4)
    assert res.finished
    assert res.symbols == body
    assert res.score == pytest.approx(score, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("beam", [1, 2, 5])
def test_beam_never_beats_the_optimum(seed, beam):
    tm = TableModel(3, seed, eos=0, temperature=2.0)
    _, best = tm.exhaustive_best(4, bos=-1)
    res = table_search(tm, beam, 4)
    if res.finished:
        assert res.score <= best + 1e-12


def test_beam_score_monotone_on_small_models():
    for seed in range(100):
        tm = TableModel(3, seed, eos=0)
        scores = [table_search(tm, k, 4) for k in range(1, 10)]
        finished = [r.score for r in scores if r.finished]
        assert all(b >= a - 1e-12 for a, b in zip(finished, finished[1:])), seed


def test_wider_beam_can_prune_the_greedy_path():
    # beam search is not monotone in general: with beam 2 the greedy
    # continuation is pushed out by two children of a better-looking prefix
    tm = TableModel(8, 31, eos=0, temperature=3.0)
    narrow, wide = table_search(tm, 1, 8), table_search(tm, 2, 8)
    assert narrow.finished and wide.finished
    assert wide.score < narrow.score
    assert table_search(tm, 8**3, 8).score >= narrow.score


def test_deterministic_model_forced_sequence():
    forced = [5, 3, 4, 0]

    class Forced:
        def select(self, idx):
            return Forced.__new__(Forced)

    def step(states, last):
        k = len(last)
        t = step.calls
        step.calls += 1
        lp = np.full((k, 6), -np.inf)
        lp[:, forced[min(t, 3)]] = 0.0
        return lp, Forced()

    for beam in (1, 3, 7):
        step.calls = 0
        assert beam_search_core(step, Forced(), beam, 10, eos=0, bos=1) == BeamResult((5, 3, 4), 0.0, True)


def test_forced_eos_warns(caplog):
    def step(states, last):
        lp = np.log(np.full((len(last), 3), 1 / 3))
        lp[:, 0] = -np.inf
        return lp, states

    class S:
        def select(self, idx):
            return self

    with caplog.at_level(logging.WARNING):
        res = beam_search_core(step, S(), 2, 3, eos=0, bos=1)
    assert not res.finished and len(res.symbols) == 3
    assert "forcing end of sequence" in caplog.text


def test_max_len_rule():
    assert default_max_len(4) == 17


def test_invalid_beam():
    tm = TableModel(3, 0, eos=0)
    with pytest.raises(ValueError):
        table_search(tm, 0, 4)


# -- real models ----------------------------------------------------------------------

@pytest.mark.parametrize("preset", ["Att-GRU", "NoAtt-LSTM", "Transformer"])
@pytest.mark.parametrize("seed", range(3))
def test_model_beam_one_matches_greedy(preset, seed):
    m, seg = two_symbol_model(preset, seed)
    for tok in ("a", "ab", "bba"):
        assert beam_search(m, seg, tok, beam_size=1) == greedy_decode(m, seg, tok)


@pytest.mark.parametrize("preset", ["Att-RNN", "Transformer"])
@pytest.mark.parametrize("seed", range(3))
def test_model_saturated_beam_is_exact(preset, seed):
    m, seg = two_symbol_model(preset, seed)
    step, init, _ = search_problem(m, seg, "ab")
    ids = [seg.vocab.symbol_to_id[c] for c in "ab"]
    body, score = model_exhaustive(step, init, 4, ids)
    res = beam_search_core(step, init, 81, 4)
    assert res.symbols == body
    assert res.score == pytest.approx(score, abs=1e-9)


def test_model_never_emits_specials():
    m, seg = two_symbol_model("Att-GRU", 0, scale=10.0)
    step, init, n = search_problem(m, seg, "ab")
    res = beam_search_core(step, init, 5, default_max_len(n))
    assert all(s >= 4 for s in res.symbols)


# -- lexicon and hybrid -------------------------------------------------------------

def test_lexicon_examples():
    assert "late" in build_unchanged_lexicon([TokenPair("late", "late")])
    mixed = [TokenPair("a", "a"), TokenPair("a", "b")]
    assert "a" not in build_unchanged_lexicon(mixed, "majority")
    assert "a" in build_unchanged_lexicon(mixed, "any-unchanged")
    assert len(build_unchanged_lexicon([])) == 0
    with pytest.raises(ValueError):
        build_unchanged_lexicon(mixed, "sometimes")


def test_lexicon_entries_seen_unchanged():
    pairs = [TokenPair("a", "a"), TokenPair("a", "a"), TokenPair("a", "b"), TokenPair("c", "d")]
    lex = build_unchanged_lexicon(pairs)
    assert lex.counts["a"] == (2, 1)
    assert "a" in lex and "c" not in lex


def test_lexicon_is_case_sensitive_unless_folded():
    pairs = [TokenPair("Late", "Late")]
    assert "late" not in build_unchanged_lexicon(pairs)
    assert "late" in build_unchanged_lexicon(pairs, casefold=True)


class ExplodingModel:
    def __getattr__(self, name):
        raise AssertionError("model must not be invoked")


def test_hybrid_copies_lexicon_hits_without_the_model():
    lex = build_unchanged_lexicon([TokenPair("late", "late")])
    assert hybrid_normalize("late", lex, ExplodingModel(), None) == "late"
    assert normalize_batch(["late", "late"], "hybrid", ExplodingModel(), None, lex) == ["late", "late"]


def test_hybrid_miss_is_beam_search():
    m, seg = two_symbol_model("Att-GRU", 1)
    lex = build_unchanged_lexicon([TokenPair("ab", "ab")])
    assert hybrid_normalize("ba", lex, m, seg) == beam_search(m, seg, "ba")


def test_normalize_batch_contract():
    m, seg = two_symbol_model("Att-LSTM", 2)
    toks = ["ab", "ba", "ab", "bbb"]
    out = normalize_batch(toks, "neural", m, seg)
    assert out == [beam_search(m, seg, t) for t in toks]
    assert out[0] == out[2]
    assert normalize_batch([], "neural", m, seg) == []
    with pytest.raises(ValueError):
        normalize_batch(toks, "hybrid", m, seg)
    with pytest.raises(ValueError):
        normalize_batch(toks, "sampling", m, seg)


def test_score_sequence_matches_beam_score():
    m, seg = two_symbol_model("Att-GRU", 3)
    step, init, _ = search_problem(m, seg, "ab")
    res = beam_search_core(step, init, 3, 8)
    assert score_sequence(step, init, res.symbols, eos=EOS_ID) == pytest.approx(res.score, abs=1e-9)
