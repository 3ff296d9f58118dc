"""Character segmentation, byte-pair-encoding merges and symbol vocabularies."""
from __future__ import annotations

import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

EOW = "</w>"

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def char_segment(token: str) -> list[str]:
    """Split an NFC-normalised token into Unicode scalar values."""
    if not token:
        raise ValueError("char_segment: empty token")
    return list(nfc(token))


# ---------------------------------------------------------------------------
# BPE


@dataclass(frozen=True)
class BpeModel:
    merges: tuple[tuple[str, str], ...]
    target_vocab_size: int = 0

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple(tuple(m) for m in self.merges))

    @property
    def ranks(self) -> dict[tuple[str, str], int]:
        return _ranks(self.merges)

    def apply(self, token: str) -> list[str]:
        return bpe_apply(self, token)

    def save(self, path) -> None:
        lines = []
        for a, b in self.merges:
            if any(ch.isspace() for ch in a + b):
                raise ValueError(f"cannot serialise merge with whitespace: {(a, b)!r}")
            lines.append(f"{a} {b}\n")
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BpeModel":
        merges = []
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise ValueError(f"{path}:{n}: expected 'symbol1 symbol2', got {line!r}")
            merges.append((parts[0], parts[1]))
        return cls(tuple(merges))


@lru_cache(maxsize=64)
def _ranks(merges):
    return {m: i for i, m in enumerate(merges)}


def _word_symbols(token: str) -> tuple[str, ...]:
    chars = char_segment(token)
    chars[-1] = chars[-1] + EOW
    return tuple(chars)


def _strip_eow(symbols: list[str]) -> list[str]:
    out = list(symbols)
    last = out[-1][: -len(EOW)]
    if last:
        out[-1] = last
    else:
        out.pop()
    return out


def char_inventory(tokens: Iterable[str]) -> set[str]:
    inv = set()
    for t in tokens:
        inv.update(nfc(t))
    return inv


def bpe_learn(tokens: Iterable[str] | Counter, target_vocab_size: int) -> BpeModel:
    """Greedy BPE: repeatedly merge the most frequent adjacent pair.

    The budget counts total symbols, i.e. distinct characters plus merges.
    Frequencies are weighted by token counts; ties go to the lexicographically
    smallest pair.
    """
    counts = Counter(tokens) if not isinstance(tokens, Counter) else tokens
    counts = Counter({nfc(t): c for t, c in counts.items() if t})
    if not counts:
        raise ValueError("bpe_learn: empty corpus")
    n_chars = len(char_inventory(counts))
    if target_vocab_size < n_chars:
        raise ValueError(
            f"bpe_learn: budget {target_vocab_size} below character inventory {n_chars}")
    n_merges = target_vocab_size - n_chars

    words = [list(_word_symbols(t)) for t in counts]
    freqs = list(counts.values())
    pair_counts: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for i, (w, f) in enumerate(zip(words, freqs)):
        for p in zip(w, w[1:]):
            pair_counts[p] += f
            where[p].add(i)

    merges = []
    while len(merges) < n_merges:
        best = None
        best_count = 0
        for p, c in pair_counts.items():
            if c > best_count or (c == best_count and c > 0 and p < best):
                best, best_count = p, c
        if best is None or best_count <= 0:
            break
        merges.append(best)
        a, b = best
        merged = a + b
        for i in list(where[best]):
            w, f = words[i], freqs[i]
            for p in zip(w, w[1:]):
                pair_counts[p] -= f
            new = _merge_once(w, a, b, merged)
            words[i] = new
            for p in zip(new, new[1:]):
                pair_counts[p] += f
                where[p].add(i)
        for p in [p for p, c in pair_counts.items() if c <= 0]:
            del pair_counts[p]
            where.pop(p, None)
    return BpeModel(tuple(merges), target_vocab_size)


def _merge_once(symbols: Sequence[str], a: str, b: str, merged: str) -> list[str]:
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == a and symbols[i + 1] == b:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def bpe_apply(model: BpeModel, token: str) -> list[str]:
    """Segment ``token`` by replaying merges in learned order.

    Each merge is applied left to right; the end-of-word marker is removed
    from the output, so ``"".join(result) == nfc(token)``.
    """
    if not token:
        raise ValueError("bpe_apply: empty token")
    return list(_apply_cached(model.merges, nfc(token)))


@lru_cache(maxsize=200_000)
def _apply_cached(merges, token):
    ranks = _ranks(merges)
    symbols = list(_word_symbols(token))
    # lowest-rank-first is equivalent to replaying merges in order: a merge can
    # only create pairs whose rules were learned after it.
    while len(symbols) > 1:
        best_rank, best = None, None
        for p in zip(symbols, symbols[1:]):
            r = ranks.get(p)
            if r is not None and (best_rank is None or r < best_rank):
                best_rank, best = r, p
        if best is None:
            break
        symbols = _merge_once(symbols, best[0], best[1], best[0] + best[1])
    return tuple(_strip_eow(symbols))


# ---------------------------------------------------------------------------
# vocabulary


@dataclass(frozen=True)
class Vocabulary:
    symbols: tuple[str, ...]
    symbol_to_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.symbols[:4]) != SPECIALS:
            raise ValueError("vocabulary must start with the special symbols")
        mapping = {s: i for i, s in enumerate(self.symbols)}
        if len(mapping) != len(self.symbols):
            raise ValueError("vocabulary symbols must be unique")
        object.__setattr__(self, "symbol_to_id", mapping)

    @classmethod
    def from_symbols(cls, symbols: Iterable[str]) -> "Vocabulary":
        seen = [s for s in sorted(set(symbols)) if s not in SPECIALS]
        return cls(SPECIALS + tuple(seen))

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, sym):
        return sym in self.symbol_to_id

    def encode(self, symbols: Iterable[str]) -> list[int]:
        get = self.symbol_to_id.get
        return [get(s, UNK_ID) for s in symbols]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.symbols[i] for i in ids]

    def save(self, path) -> None:
        Path(path).write_text("".join(s + "\n" for s in self.symbols), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        return cls(tuple(text.split("\n")[:-1]))


def build_vocab(segmented_corpus: Iterable[Sequence[str]], level: str = "character",
                bpe: BpeModel | None = None) -> Vocabulary:
    """Collect every symbol seen in the segmented corpus (frequency >= 1).

    At subword level every character and the outputs of all learned merges
    are added as well, with the end-of-word marker removed.
    """
    syms = set()
    for seq in segmented_corpus:
        syms.update(seq)
    if level == "subword" and bpe is not None:
        # every character stays addressable, not only those left unmerged
        syms.update(ch for s in list(syms) for ch in s)
        for a, b in bpe.merges:
            unit = (a + b)
            if unit.endswith(EOW):
                unit = unit[: -len(EOW)]
            if unit:
                syms.add(unit)
    elif level not in ("character", "subword"):
        raise ValueError(f"unknown level {level!r}")
    return Vocabulary.from_symbols(syms)


class Segmenter:
    """Token <-> symbol-id conversion for one model (character or BPE level)."""

    def __init__(self, vocab: Vocabulary, bpe: BpeModel | None = None):
        self.vocab = vocab
        self.bpe = bpe

    @property
    def level(self) -> str:
        return "subword" if self.bpe is not None else "character"

    def segment(self, token: str) -> list[str]:
        return bpe_apply(self.bpe, token) if self.bpe is not None else char_segment(token)

    def encode(self, token: str) -> list[int]:
        return self.vocab.encode(self.segment(token))

    def detokenize(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            if i == EOS_ID:
                break
            if i < len(SPECIALS):
                continue
            out.append(self.vocab.symbols[i])
        return "".join(out)

    @classmethod
    def fit(cls, tokens: Sequence[str], bpe_size: int = 0) -> "Segmenter":
        """Learn a joint segmentation and vocabulary from ``tokens``."""
        bpe = bpe_learn(Counter(tokens), bpe_size) if bpe_size > 0 else None
        seg = [bpe_apply(bpe, t) if bpe else char_segment(t) for t in tokens if t]
        return cls(build_vocab(seg, "subword" if bpe else "character", bpe), bpe)
