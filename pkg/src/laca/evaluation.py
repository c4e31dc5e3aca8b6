"""Exact-match micro-F1, multi-seed aggregation, and the error taxonomy.

A predicted tuple is correct only if both its boundary and its polarity
match a gold tuple of the same sentence. Boundary identity uses spans when
both sides carry them (gold XML test sets) and normalized aspect strings
otherwise (generated data); reports carry a ``match_mode`` flag saying
which rule applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .corpus import LabeledExample, SentimentTuple, normalize_term
from .errors import EmptyInput, IdMismatch


def _boundary_match(gold: SentimentTuple, pred: SentimentTuple) -> bool:
    if gold.span is not None and pred.span is not None:
        return gold.span == pred.span
    return normalize_term(gold.aspect) == normalize_term(pred.aspect)


def _tuple_match(gold: SentimentTuple, pred: SentimentTuple) -> bool:
    return gold.polarity is pred.polarity and _boundary_match(gold, pred)


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    match_mode: str = "string"

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, match_mode: str = "string") -> "EvalReport":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, fn, precision, recall, f1, match_mode)

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "match_mode": self.match_mode,
        }


def _pair_by_id(
    gold: Sequence[LabeledExample], pred: Sequence[LabeledExample]
) -> list[tuple[LabeledExample, LabeledExample]]:
    gold_by_id = {ex.id: ex for ex in gold}
    pred_by_id = {ex.id: ex for ex in pred}
    if set(gold_by_id) != set(pred_by_id):
        missing = sorted(set(gold_by_id) - set(pred_by_id))[:5]
        extra = sorted(set(pred_by_id) - set(gold_by_id))[:5]
        raise IdMismatch(f"gold/pred ids differ (missing={missing}, extra={extra})")
    pairs = []
    for sid, g in gold_by_id.items():
        p = pred_by_id[sid]
        if g.lang != p.lang:
            raise IdMismatch(f"language mismatch for id {sid!r}: {g.lang} vs {p.lang}")
        pairs.append((g, p))
    return pairs


def micro_f1(gold: Sequence[LabeledExample], pred: Sequence[LabeledExample]) -> EvalReport:
    """Pool exact one-to-one matches over all sentences (micro average).

    Matching is greedy but provably maximal here: matches require identity,
    and tuple sets are deduplicated, so no two choices conflict.
    """
    tp = fp = fn = 0
    all_spanned = True
    for g_ex, p_ex in _pair_by_id(gold, pred):
        remaining = list(g_ex.tuples)
        for t in list(g_ex.tuples) + list(p_ex.tuples):
            all_spanned = all_spanned and t.span is not None
        for p in p_ex.tuples:
            hit = next((g for g in remaining if _tuple_match(g, p)), None)
            if hit is not None:
                remaining.remove(hit)
                tp += 1
            else:
                fp += 1
        fn += len(remaining)
    return EvalReport.from_counts(tp, fp, fn, match_mode="span" if all_spanned else "string")


@dataclass(frozen=True)
class AggregateReport:
    f1_scores: tuple[float, ...]
    mean: float
    std: float

    def to_json(self) -> dict:
        return {"f1_scores": list(self.f1_scores), "mean": self.mean, "std": self.std}


def aggregate_runs(reports: Sequence[EvalReport]) -> AggregateReport:
    """Mean and population standard deviation of per-run F1 scores."""
    if not reports:
        raise EmptyInput("aggregate_runs requires at least one report")
    scores = tuple(r.f1 for r in reports)
    mean = sum(scores) / len(scores)
    std = math.sqrt(sum((s - mean) ** 2 for s in scores) / len(scores))
    return AggregateReport(scores, mean, std)


@dataclass(frozen=True)
class ErrorTaxonomy:
    """Per-category error counts from a deterministic gold/pred matching.

    ``boundary``: overlapping but boundary-mismatched pairs; ``missing``:
    undetected gold aspects; ``extra``: predicted aspects absent from gold;
    ``polarity``: wrong sentiment on exactly-matched or boundary-matched
    aspects. ``correct`` and ``polarity_exact`` are bookkeeping for
    conservation checks.
    """

    boundary: int = 0
    missing: int = 0
    extra: int = 0
    polarity: int = 0
    correct: int = 0
    polarity_exact: int = 0

    def __add__(self, other: "ErrorTaxonomy") -> "ErrorTaxonomy":
        return ErrorTaxonomy(
            self.boundary + other.boundary,
            self.missing + other.missing,
            self.extra + other.extra,
            self.polarity + other.polarity,
            self.correct + other.correct,
            self.polarity_exact + other.polarity_exact,
        )

    def to_json(self) -> dict:
        return {
            "boundary": self.boundary,
            "missing": self.missing,
            "extra": self.extra,
            "polarity": self.polarity,
        }


def _char_overlap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]))


def classify_errors(gold_ex: LabeledExample, pred_ex: LabeledExample) -> ErrorTaxonomy:
    """Three-pass greedy matching of one sentence's tuples.

    1. exact boundary + polarity pairs are removed as correct;
    2. exact boundary, wrong polarity -> one polarity error each;
    3. remaining span-carrying tuples pair by maximal character overlap
       (ties: leftmost gold, then leftmost pred) -> one boundary error each,
       plus a polarity error when the polarities also differ.
    Leftover gold tuples are missing; leftover predictions are extra.
    """
    if gold_ex.id != pred_ex.id:
        raise IdMismatch(f"classify_errors ids differ: {gold_ex.id!r} vs {pred_ex.id!r}")
    gold = list(gold_ex.tuples)
    pred = list(pred_ex.tuples)
    correct = polarity_exact = boundary = polarity_boundary = 0

    for g in list(gold):
        hit = next((p for p in pred if _tuple_match(g, p)), None)
        if hit is not None:
            gold.remove(g)
            pred.remove(hit)
            correct += 1

    for g in list(gold):
        hit = next((p for p in pred if _boundary_match(g, p)), None)
        if hit is not None:
            gold.remove(g)
            pred.remove(hit)
            polarity_exact += 1

    candidates = [
        (-_char_overlap(g.span, p.span), g.span, p.span, gi, pi)
        for gi, g in enumerate(gold)
        if g.span is not None
        for pi, p in enumerate(pred)
        if p.span is not None and _char_overlap(g.span, p.span) > 0
    ]
    used_gold: set[int] = set()
    used_pred: set[int] = set()
    for _neg_overlap, _gspan, _pspan, gi, pi in sorted(candidates):
        if gi in used_gold or pi in used_pred:
            continue
        used_gold.add(gi)
        used_pred.add(pi)
        boundary += 1
        if gold[gi].polarity is not pred[pi].polarity:
            polarity_boundary += 1

    missing = len(gold) - len(used_gold)
    extra = len(pred) - len(used_pred)
    return ErrorTaxonomy(
        boundary=boundary,
        missing=missing,
        extra=extra,
        polarity=polarity_exact + polarity_boundary,
        correct=correct,
        polarity_exact=polarity_exact,
    )


def classify_errors_dataset(
    gold: Sequence[LabeledExample], pred: Sequence[LabeledExample]
) -> ErrorTaxonomy:
    total = ErrorTaxonomy()
    for g_ex, p_ex in _pair_by_id(gold, pred):
        total = total + classify_errors(g_ex, p_ex)
    return total
