"""Rule-generated historical/modern token pairs for desk-scale benchmarks.

Modern forms are derived from historical ones by three deterministic
orthographic rules, applied in order:

1. doubled consonants collapse (``ll`` -> ``l``),
2. ``y`` -> ``i``,
3. ``v`` -> ``u`` when not word-initial or word-final.

Word types follow a Zipf distribution so frequent forms recur across
splits, as in real corpora.
"""
from __future__ import annotations

import re

import numpy as np

from .data import Dataset, TokenPair

CONSONANTS = "bcdfghjklmnpqrstwxz"
VOWELS = "aeiou"
_DOUBLE = re.compile(r"([%s])\1+" % (CONSONANTS + "v"))


def modernize(historical: str) -> str:
    s = _DOUBLE.sub(r"\1", historical)
    s = s.replace("y", "i")
    if len(s) > 2:
        s = s[0] + s[1:-1].replace("v", "u") + s[-1]
    return s


def _base_word(rng: np.random.Generator) -> str:
    out = []
    for _ in range(rng.integers(1, 4)):
        if rng.random() < 0.8:
            out.append(CONSONANTS[rng.integers(len(CONSONANTS))])
        out.append(VOWELS[rng.integers(len(VOWELS))])
        if rng.random() < 0.4:
            out.append(CONSONANTS[rng.integers(len(CONSONANTS))])
    w = "".join(out)
    return _DOUBLE.sub(r"\1", w)


def _historicize(word: str, rng: np.random.Generator) -> str:
    chars = list(word)
    for _ in range(rng.integers(1, 3)):
        kind = rng.integers(3)
        if kind == 0:
            pos = [i for i, c in enumerate(chars) if c == "i"]
            if pos:
                chars[pos[rng.integers(len(pos))]] = "y"
        elif kind == 1:
            pos = [i for i, c in enumerate(chars[1:-1], 1) if c == "u"]
            if pos:
                chars[pos[rng.integers(len(pos))]] = "v"
        else:
            pos = [i for i, c in enumerate(chars) if c in CONSONANTS
                   and (i + 1 == len(chars) or chars[i + 1] != c)
                   and (i == 0 or chars[i - 1] != c)]
            if pos:
                i = pos[rng.integers(len(pos))]
                chars.insert(i, chars[i])
    return "".join(chars)


def make_lexicon(n_types: int, change_prob: float, rng: np.random.Generator) -> list[TokenPair]:
    seen, pairs = set(), []
    while len(pairs) < n_types:
        base = _base_word(rng)
        if len(base) < 3 or base in seen:
            continue
        seen.add(base)
        hist = _historicize(base, rng) if rng.random() < change_prob else base
        pairs.append(TokenPair(hist, modernize(hist)))
    return pairs


def synthetic_dataset(n_pairs: int = 5000, seed: int = 0, n_types: int = 2000,
                      change_prob: float = 0.5, zipf_s: float = 1.0,
                      split=(0.8, 0.1, 0.1)) -> Dataset:
    rng = np.random.default_rng(seed)
    lex = make_lexicon(n_types, change_prob, rng)
    ranks = np.arange(1, n_types + 1)
    p = ranks ** -zipf_s
    p /= p.sum()
    idx = rng.choice(n_types, size=n_pairs, p=p)
    pairs = [lex[i] for i in idx]
    n_tr = int(round(split[0] * n_pairs))
    n_dev = int(round(split[1] * n_pairs))
    return Dataset(pairs[:n_tr], pairs[n_tr:n_tr + n_dev], pairs[n_tr + n_dev:], "synthetic")
