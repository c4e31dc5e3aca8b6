"""Training-data quality controls.

Pre-filter: drop predictions with no sentiment element. Post-filters on
generated pairs: the text must contain every labelled aspect term, and the
ABSA model's own prediction on the text must equal the label. Rejections
are data, not errors: every dropped pair leaves a RejectionRecord.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .backend import BackendClient, predict_batch
from .corpus import LabeledExample, SentimentTuple, normalize_term

REJECTION_STAGES = (
    "empty_prediction",
    "missing_aspect",
    "inconsistent_prediction",
    "generation_failed",
)


@dataclass(frozen=True)
class RejectionRecord:
    id: str
    stage: str
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.stage not in REJECTION_STAGES:
            raise ValueError(f"unknown rejection stage {self.stage!r}")

    def to_json(self) -> dict:
        return {"id": self.id, "stage": self.stage, "details": self.details}


def write_rejections(records: Iterable[RejectionRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def prefilter_predictions(
    predicted: Sequence[LabeledExample],
) -> tuple[list[LabeledExample], list[RejectionRecord]]:
    """Keep predictions with at least one sentiment element."""
    kept, rejected = [], []
    for ex in predicted:
        if ex.tuples:
            kept.append(ex)
        else:
            rejected.append(RejectionRecord(ex.id, "empty_prediction"))
    return kept, rejected


def contains_all_aspects(text: str, label: Iterable[SentimentTuple]) -> bool:
    """Case-insensitive, whitespace-normalized substring containment for
    every aspect term in the label."""
    haystack = normalize_term(text)
    return all(normalize_term(t.aspect) in haystack for t in label)


def _label_key(tuples: Iterable[SentimentTuple]) -> frozenset:
    return frozenset(t.key() for t in tuples)


def consistency_check(absa_client: BackendClient, model: str, generated: LabeledExample) -> bool:
    """True iff the model's prediction on the text equals the label as a set
    under (normalized aspect, polarity); spans are ignored."""
    preds = predict_batch(absa_client, generated.lang, [(generated.id, generated.text)], model)
    return _label_key(preds[generated.id]) == _label_key(generated.tuples)


def filter_generated(
    pairs: Sequence[LabeledExample],
    absa_client: BackendClient,
    model: str,
    batch_size: int = 32,
) -> tuple[list[LabeledExample], list[RejectionRecord]]:
    """Apply both post-filters; kept + rejected partition the input exactly.

    The cheap containment check runs first; only its survivors reach the
    backend for the consistency check.
    """
    rejected: list[RejectionRecord] = []
    survivors: list[LabeledExample] = []
    for ex in pairs:
        missing = [t.aspect for t in ex.tuples if not contains_all_aspects(ex.text, [t])]
        if missing:
            rejected.append(RejectionRecord(ex.id, "missing_aspect", {"missing": missing}))
        else:
            survivors.append(ex)

    if not survivors:
        return [], rejected
    if len({ex.lang for ex in survivors}) > 1:
        raise ValueError("filter_generated expects a single-language batch")

    preds = predict_batch(
        absa_client,
        survivors[0].lang,
        [(ex.id, ex.text) for ex in survivors],
        model,
        batch_size=batch_size,
    )
    kept: list[LabeledExample] = []
    for ex in survivors:
        predicted_key = _label_key(preds[ex.id])
        if predicted_key == _label_key(ex.tuples):
            kept.append(ex if ex.origin == "generated" else _as_generated(ex))
        else:
            rejected.append(
                RejectionRecord(
                    ex.id,
                    "inconsistent_prediction",
                    {
                        "expected": sorted(f"{a}/{p.value}" for a, p in _label_key(ex.tuples)),
                        "predicted": sorted(f"{a}/{p.value}" for a, p in predicted_key),
                    },
                )
            )
    return kept, rejected


def _as_generated(ex: LabeledExample) -> LabeledExample:
    return replace(ex, origin="generated")
