"""Word accuracy, character error rate, error taxonomy and edit-distance statistics."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .data import TokenPair
from .segmentation import nfc

CORRECT, CHANGE, COPY, OTHER = "Correct", "Change", "Copy", "Other"
ERROR_CLASSES = (CHANGE, COPY, OTHER)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode scalar values."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _check_aligned(predictions, references):
    if len(predictions) != len(references):
        raise ValueError(
            f"{len(predictions)} predictions but {len(references)} references")


def word_accuracy(predictions: Sequence[str], references: Sequence[str]) -> float:
    _check_aligned(predictions, references)
    if not references:
        return 0.0
    return sum(p == r for p, r in zip(predictions, references)) / len(references)


def cer(predictions: Sequence[str], references: Sequence[str]) -> float:
    """Corpus-level CER: total edit distance over total reference length."""
    _check_aligned(predictions, references)
    denom = sum(len(r) for r in references)
    if not references or denom == 0:
        raise ValueError("cer: empty reference corpus")
    return sum(levenshtein(p, r) for p, r in zip(predictions, references)) / denom


def cer_per_token(predictions: Sequence[str], references: Sequence[str]) -> float:
    """Macro-averaged CER: mean of per-token distance / reference length."""
    _check_aligned(predictions, references)
    if not references:
        raise ValueError("cer: empty reference corpus")
    return sum(levenshtein(p, r) / max(len(r), 1)
               for p, r in zip(predictions, references)) / len(references)


def classify_error(historical: str, reference: str, prediction: str) -> str:
    if prediction == reference:
        return CORRECT
    if historical == reference:
        return CHANGE
    if prediction == historical:
        return COPY
    return OTHER


@dataclass
class EditStats:
    avg_changed_distance: float | None
    avg_incorrect_distance: float | None
    n_changed: int = 0
    n_incorrect_changed: int = 0


def _eval_form(s: str) -> str:
    return nfc(s).lower()


def edit_stats(test_pairs: Sequence[TokenPair], predictions: Sequence[str]) -> EditStats:
    _check_aligned(predictions, test_pairs)
    changed, incorrect = [], []
    for p, pred in zip(test_pairs, predictions):
        h, m, y = _eval_form(p.historical), _eval_form(p.modern), _eval_form(pred)
        if h == m:
            continue
        changed.append(levenshtein(h, m))
        if y != m:
            incorrect.append(levenshtein(y, m))
    mean = lambda xs: sum(xs) / len(xs) if xs else None  # noqa: E731
    return EditStats(mean(changed), mean(incorrect), len(changed), len(incorrect))


@dataclass
class EvalReport:
    word_accuracy: float
    cer: float
    cer_per_token: float
    error_distribution: dict[str, float]
    error_counts: dict[str, int]
    n_evaluated: int
    edit: EditStats = field(default_factory=lambda: EditStats(None, None))

    def to_keyvalue(self) -> str:
        lines = [
            f"n_evaluated={self.n_evaluated}",
            f"word_accuracy={100 * self.word_accuracy:.2f}",
            f"cer={self.cer:.4f}",
            f"cer_per_token={self.cer_per_token:.4f}",
        ]
        for k in ERROR_CLASSES:
            if self.error_distribution:
                lines.append(f"error.{k.lower()}={100 * self.error_distribution[k]:.1f}")
        for k in ("avg_changed_distance", "avg_incorrect_distance"):
            v = getattr(self.edit, k)
            if v is not None:
                lines.append(f"{k}={v:.2f}")
        return "\n".join(lines)

    def to_table(self) -> str:
        rows = [f"Acc {100 * self.word_accuracy:6.2f}   CER {self.cer:.2f}   (n={self.n_evaluated})"]
        if self.error_distribution:
            rows.append("  ".join(f"{k} {100 * self.error_distribution[k]:.1f}%"
                                  for k in ERROR_CLASSES))
        return "\n".join(rows)


def report(test_pairs: Sequence[TokenPair], predictions: Sequence[str]) -> EvalReport:
    """All metrics on lowercased NFC forms of predictions and references."""
    _check_aligned(predictions, test_pairs)
    hist = [_eval_form(p.historical) for p in test_pairs]
    refs = [_eval_form(p.modern) for p in test_pairs]
    preds = [_eval_form(y) for y in predictions]
    counts = Counter(classify_error(h, r, y) for h, r, y in zip(hist, refs, preds))
    n_err = sum(counts[k] for k in ERROR_CLASSES)
    dist = {k: counts[k] / n_err for k in ERROR_CLASSES} if n_err else {}
    return EvalReport(
        word_accuracy=word_accuracy(preds, refs),
        cer=cer(preds, refs),
        cer_per_token=cer_per_token(preds, refs),
        error_distribution=dist,
        error_counts={k: counts[k] for k in (CORRECT,) + ERROR_CLASSES},
        n_evaluated=len(refs),
        edit=edit_stats(test_pairs, predictions),
    )
