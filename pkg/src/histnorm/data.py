"""Token-pair corpora: TSV I/O, casing policy, corpus statistics, resplitting."""
from __future__ import annotations

import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Sequence

from .segmentation import nfc

log = logging.getLogger(__name__)


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TokenPair:
    historical: str
    modern: str

    def __post_init__(self):
        # stored canonical (NFC, trimmed) so a TSV round trip is exact
        for name in ("historical", "modern"):
            v = nfc(nfc(getattr(self, name)).strip())
            if not v:
                raise ValueError(f"TokenPair.{name} is empty")
            if any(c in v for c in "\t\n\r"):
                raise ValueError(f"TokenPair.{name} contains a tab or line break: {v!r}")
            object.__setattr__(self, name, v)

    @property
    def unchanged(self) -> bool:
        return self.historical == self.modern


@dataclass
class Dataset:
    train: list[TokenPair]
    dev: list[TokenPair]
    test: list[TokenPair]
    language_tag: str = ""

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.dev), len(self.test)


def parse_tsv(text: str, source: str = "<string>") -> list[TokenPair]:
    pairs = []
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for n, line in enumerate(lines, 1):
        line = line.removesuffix("\r")
        if not line.strip():
            log.warning("%s:%d: skipping blank line", source, n)
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise CorpusFormatError(
                f"{source}:{n}: expected 2 tab-separated fields, found {len(fields)}")
        try:
            pairs.append(TokenPair(*fields))
        except ValueError as e:
            raise CorpusFormatError(f"{source}:{n}: {e}") from None
    return pairs


def load_tsv(path) -> list[TokenPair]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    pairs = parse_tsv(text, str(path))
    if not pairs:
        raise CorpusFormatError(f"{path}: no token pairs")
    return pairs


def save_tsv(pairs: Iterable[TokenPair], path) -> None:
    Path(path).write_text("".join(f"{p.historical}\t{p.modern}\n" for p in pairs),
                          encoding="utf-8")


def load_dataset(train, dev, test, language_tag: str = "") -> Dataset:
    return Dataset(load_tsv(train), load_tsv(dev), load_tsv(test), language_tag)


# ---------------------------------------------------------------------------

PHASES = ("train", "dev", "test_input", "eval")


def apply_casing_policy(pairs: Sequence, phase: str):
    """Training, tuning and test inputs keep their case; evaluation lowercases.

    Accepts TokenPairs or plain strings.
    """
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}; expected one of {PHASES}")
    if phase != "eval":
        return list(pairs)
    out = []
    for p in pairs:
        if isinstance(p, TokenPair):
            out.append(TokenPair(p.historical.lower(), p.modern.lower()))
        else:
            out.append(p.lower())
    return out


@dataclass
class CorpusStats:
    n_train: int
    n_dev: int
    n_test: int
    unchanged_rate_test: float
    token_vocab: int
    char_vocab: int
    max_len: int
    avg_len: float
    # alternative readings of the token-vocabulary and length columns
    token_vocab_historical: int = 0
    token_vocab_modern: int = 0
    avg_len_historical: float = 0.0
    avg_len_modern: float = 0.0
    language_tag: str = ""

    def as_dict(self) -> dict:
        return asdict(self)

    def to_keyvalue(self) -> str:
        prefix = f"{self.language_tag}." if self.language_tag else ""
        lines = []
        for k, v in self.as_dict().items():
            if k == "language_tag":
                continue
            lines.append(f"{prefix}{k}={v:.6f}" if isinstance(v, float) else f"{prefix}{k}={v}")
        return "\n".join(lines)


def corpus_stats(ds: Dataset) -> CorpusStats:
    """Table-style statistics; every count is case-sensitive.

    Token vocabulary, character vocabulary and lengths cover the historical
    and modern sides of the training split; ``token_vocab`` is their union.
    """
    test = ds.test
    unchanged = sum(p.unchanged for p in test) / len(test) if test else 0.0
    hist = [p.historical for p in ds.train]
    mod = [p.modern for p in ds.train]
    both = hist + mod
    chars = set()
    for t in both:
        chars.update(t)
    lens = [len(t) for t in both]

    def mean(xs):
        return sum(xs) / len(xs) if xs else 0.0

    return CorpusStats(
        n_train=len(ds.train), n_dev=len(ds.dev), n_test=len(test),
        unchanged_rate_test=unchanged,
        token_vocab=len(set(both)),
        char_vocab=len(chars),
        max_len=max(lens, default=0),
        avg_len=mean(lens),
        token_vocab_historical=len(set(hist)),
        token_vocab_modern=len(set(mod)),
        avg_len_historical=mean([len(t) for t in hist]),
        avg_len_modern=mean([len(t) for t in mod]),
        language_tag=ds.language_tag,
    )


def format_stats_table(stats: Sequence[CorpusStats]) -> str:
    head = f"{'Language':<12}{'Train':>9}{'Dev':>8}{'Test':>8}{'Unch%':>7}{'Token':>8}{'Char':>6}{'Max':>5}{'Avg':>6}"
    rows = [head]
    for s in stats:
        rows.append(
            f"{s.language_tag or '-':<12}{s.n_train:>9,}{s.n_dev:>8,}{s.n_test:>8,}"
            f"{100 * s.unchanged_rate_test:>7.1f}{s.token_vocab:>8,}{s.char_vocab:>6}"
            f"{s.max_len:>5}{s.avg_len:>6.2f}")
    return "\n".join(rows)


def resplit(ds: Dataset, move_to_train: int, move_to_dev: int, discard: int = 0) -> Dataset:
    """Move pairs from the beginning of the test split into train and dev.

    The first ``move_to_train`` test pairs are appended to train, the next
    ``move_to_dev`` to dev, the next ``discard`` are dropped, and the rest
    stay in test.
    """
    if min(move_to_train, move_to_dev, discard) < 0:
        raise ValueError("resplit: counts must be non-negative")
    total = move_to_train + move_to_dev + discard
    if total > len(ds.test):
        raise ValueError(
            f"resplit: asked to take {total} pairs from a test split of {len(ds.test)}")
    t = ds.test
    a, b = move_to_train, move_to_train + move_to_dev
    return Dataset(
        train=list(ds.train) + list(t[:a]),
        dev=list(ds.dev) + list(t[a:b]),
        test=list(t[total:]),
        language_tag=ds.language_tag,
    )
