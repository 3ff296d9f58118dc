"""Beam search, greedy decoding and the lexicon+neural hybrid normaliser."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import TokenPair
from .models.seq2seq import Seq2Seq, make_batch
from .segmentation import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Segmenter

log = logging.getLogger(__name__)

# step_fn(states, last_symbols) -> (log_probs (K, V), new_states); states are
# opaque and must support ``select(indices)``.
StepFn = Callable[[object, np.ndarray], tuple[np.ndarray, object]]


@dataclass
class Hypothesis:
    symbols: tuple[int, ...]
    score: float
    finished: bool = False


@dataclass
class BeamResult:
    symbols: tuple[int, ...]   # without BOS/EOS
    score: float
    finished: bool             # False when EOS was forced at max_len


def log_softmax(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64) - x.max(-1, keepdims=True)
    return x - np.log(np.exp(x).sum(-1, keepdims=True))


def beam_search_core(step_fn: StepFn, init_state, beam_size: int, max_len: int,
                     eos: int = EOS_ID, bos: int = BOS_ID, length_penalty: float = 0.0
                     ) -> BeamResult:
    """Generic beam search over raw summed log-probabilities.

    Every step keeps the ``beam_size`` best expansions of the live
    hypotheses; expansions ending in ``eos`` are set aside as finished.
    Without a length penalty the search stops as soon as no live hypothesis
    can beat the best finished one. With ``length_penalty`` = a, finished
    hypotheses are ranked by ``score / len ** a`` and the search runs until
    the beam is exhausted or ``max_len`` is hit.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")

    def norm(score, n):
        return score / (n ** length_penalty) if length_penalty else score

    alive = [Hypothesis((), 0.0)]
    states = init_state
    last = np.array([bos])
    finished: list[Hypothesis] = []
    for t in range(max_len):
        logp, new_states = step_fn(states, last)
        cand = np.array([h.score for h in alive])[:, None] + logp
        flat = cand.reshape(-1)
        k = min(beam_size, flat.size)
        # stable ordering: score desc, then (hypothesis, symbol) index asc
        top = np.argsort(-flat, kind="stable")[:k]
        V = logp.shape[1]
        keep_rows, keep_syms, next_alive = [], [], []
        for j in top:
            row, sym = divmod(int(j), V)
            if not np.isfinite(flat[j]):
                continue
            h = Hypothesis(alive[row].symbols + (sym,), float(flat[j]))
            if sym == eos:
                h.finished = True
                finished.append(h)
            else:
                next_alive.append(h)
                keep_rows.append(row)
                keep_syms.append(sym)
        alive = next_alive
        if not alive:
            break
        states = new_states.select(keep_rows)
        last = np.array(keep_syms)
        if finished and not length_penalty:
            if max(f.score for f in finished) >= max(h.score for h in alive):
                break
    if finished:
        best = max(finished, key=lambda h: norm(h.score, len(h.symbols)))
        return BeamResult(best.symbols[:-1], best.score, True)
    best = max(alive, key=lambda h: norm(h.score, len(h.symbols) + 1))
    log.warning("no hypothesis finished within %d steps; forcing end of sequence", max_len)
    return BeamResult(best.symbols, best.score, False)


def greedy_core(step_fn: StepFn, init_state, max_len: int, eos: int = EOS_ID,
                bos: int = BOS_ID) -> BeamResult:
    syms, score, state, last = [], 0.0, init_state, np.array([bos])
    for _ in range(max_len):
        logp, state = step_fn(state, last)
        s = int(np.argmax(logp[0]))
        score += float(logp[0, s])
        if s == eos:
            return BeamResult(tuple(syms), score, True)
        syms.append(s)
        last = np.array([s])
    return BeamResult(tuple(syms), score, False)


# ---------------------------------------------------------------------------
# model glue

_BANNED = (PAD_ID, BOS_ID, UNK_ID)


def default_max_len(source_len: int) -> int:
    return 3 * source_len + 5


class _ModelStep:
    def __init__(self, model: Seq2Seq, enc):
        self.model = model
        self.enc = enc

    def __call__(self, state, last):
        enc = self.enc.expand(len(last)) if self.enc.summary_state.shape[0] != len(last) else self.enc
        logits, new = self.model.decode_step(state, last, enc)
        lp = log_softmax(logits.data)
        lp[:, list(_BANNED)] = -np.inf
        return lp, new


def search_problem(model: Seq2Seq, segmenter: Segmenter, token: str):
    """``(step_fn, initial_state, source_length)`` for decoding ``token``."""
    ids = segmenter.encode(token)
    b = make_batch([ids], dtype=model.dtype)
    enc = model.encode(b.src, b.src_mask)
    return _ModelStep(model, enc), model.init_state(enc), len(ids)


def beam_search(model: Seq2Seq, segmenter: Segmenter, token: str, beam_size: int = 5,
                max_len: int | None = None, length_penalty: float = 0.0) -> str:
    step, state, n = search_problem(model, segmenter, token)
    res = beam_search_core(step, state, beam_size, max_len or default_max_len(n),
                           length_penalty=length_penalty)
    return segmenter.detokenize(res.symbols)


def greedy_decode(model: Seq2Seq, segmenter: Segmenter, token: str,
                  max_len: int | None = None) -> str:
    step, state, n = search_problem(model, segmenter, token)
    return segmenter.detokenize(greedy_core(step, state, max_len or default_max_len(n)).symbols)


# ---------------------------------------------------------------------------
# hybrid


@dataclass
class UnchangedLexicon:
    counts: dict[str, tuple[int, int]] = field(default_factory=dict)  # form -> (unchanged, changed)
    policy: str = "majority"
    casefold: bool = False
    entries: frozenset = frozenset()

    def _key(self, s: str) -> str:
        return s.lower() if self.casefold else s

    def __contains__(self, token: str) -> bool:
        return self._key(token) in self.entries

    def __len__(self):
        return len(self.entries)


def build_unchanged_lexicon(train_pairs: Iterable[TokenPair], policy: str = "majority",
                            casefold: bool = False) -> UnchangedLexicon:
    """Forms seen unchanged in training.

    ``any-unchanged`` keeps every form seen unchanged at least once;
    ``majority`` keeps those seen unchanged strictly more often than changed.
    """
    if policy not in ("majority", "any-unchanged"):
        raise ValueError(f"unknown lexicon policy {policy!r}")
    unch, chg = Counter(), Counter()
    for p in train_pairs:
        h = p.historical.lower() if casefold else p.historical
        m = p.modern.lower() if casefold else p.modern
        (unch if h == m else chg)[h] += 1
    counts = {f: (unch[f], chg[f]) for f in unch}
    if policy == "majority":
        entries = frozenset(f for f, (u, c) in counts.items() if u > c)
    else:
        entries = frozenset(counts)
    return UnchangedLexicon(counts, policy, casefold, entries)


def hybrid_normalize(token: str, lexicon: UnchangedLexicon, model: Seq2Seq,
                     segmenter: Segmenter, beam_size: int = 5, **kw) -> str:
    if token in lexicon:
        return token
    return beam_search(model, segmenter, token, beam_size, **kw)


def normalize_batch(tokens: Sequence[str], mode: str, model: Seq2Seq, segmenter: Segmenter,
                    lexicon: UnchangedLexicon | None = None, beam_size: int = 5,
                    length_penalty: float = 0.0) -> list[str]:
    """Normalise each token; output is aligned with the input.

    Identical tokens are decoded once (decoding is deterministic).
    """
    if mode not in ("neural", "hybrid"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "hybrid" and lexicon is None:
        raise ValueError("hybrid mode needs a lexicon")
    cache: dict[str, str] = {}
    out = []
    for tok in tokens:
        if tok not in cache:
            if mode == "hybrid" and tok in lexicon:
                cache[tok] = tok
            else:
                cache[tok] = beam_search(model, segmenter, tok, beam_size,
                                         length_penalty=length_penalty)
        out.append(cache[tok])
    return out


def score_sequence(step_fn: StepFn, init_state, symbols: Sequence[int], eos: int = EOS_ID,
                   bos: int = BOS_ID) -> float:
    """Sum of log-probabilities of ``symbols`` followed by ``eos``."""
    total, state, last = 0.0, init_state, np.array([bos])
    for s in list(symbols) + [eos]:
        lp, state = step_fn(state, last)
        total += float(lp[0, s])
        if not math.isfinite(total):
            return total
        last = np.array([s])
    return total
