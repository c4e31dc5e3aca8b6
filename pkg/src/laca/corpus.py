"""Datasets: SemEval-2016-style XML ingestion, JSONL interchange, statistics.

All character offsets count Unicode scalar values (Python string indices),
never bytes; SemEval annotations are character-based and byte offsets would
break on accented text.
"""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import DuplicateId, MalformedXml, SchemaViolation

SUPPORTED_LANGUAGES = ("en", "es", "fr", "nl", "ru", "tr")
ORIGINS = ("gold", "predicted", "generated")

_LANG_RE = re.compile(r"[a-z]{2}")


def normalize_ws(text: str) -> str:
    """Collapse internal whitespace runs to single spaces and trim the ends.

    Used only for comparisons; stored text is never mutated.
    """
    return " ".join(text.split())


def normalize_term(text: str) -> str:
    """Whitespace-normalized, case-folded form used as an aspect key."""
    return normalize_ws(text).casefold()


def check_language(code: str, allow_any: bool = False) -> str:
    if not isinstance(code, str) or not _LANG_RE.fullmatch(code):
        raise ValueError(f"language code must be two lowercase letters, got {code!r}")
    if not allow_any and code not in SUPPORTED_LANGUAGES:
        raise ValueError(
            f"unsupported language {code!r}; expected one of {', '.join(SUPPORTED_LANGUAGES)} "
            "(pass --allow-any-lang to override)"
        )
    return code


class Polarity(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"

    @classmethod
    def from_word(cls, word: str) -> "Polarity":
        try:
            return cls(word.strip().casefold())
        except ValueError:
            raise ValueError(f"unknown polarity word: {word!r}") from None

    def __repr__(self) -> str:  # keeps test diffs readable
        return f"Polarity.{self.name}"


@dataclass(frozen=True)
class SentimentTuple:
    """One (aspect term, polarity) pair, optionally anchored to a text span.

    ``span`` is half-open ``(start, end)`` in characters. ``category`` is
    opaque metadata from SemEval Opinions (e.g. FOOD#QUALITY); it is kept for
    provenance but excluded from equality and never serialized.
    """

    aspect: str
    polarity: Polarity
    span: tuple[int, int] | None = None
    category: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.aspect, str) or not self.aspect:
            raise ValueError("aspect must be a non-empty string")
        if self.aspect != self.aspect.strip():
            raise ValueError(f"aspect has leading/trailing whitespace: {self.aspect!r}")
        if not isinstance(self.polarity, Polarity):
            raise ValueError(f"polarity must be a Polarity, got {self.polarity!r}")
        if self.span is not None:
            start, end = self.span
            if not (isinstance(start, int) and isinstance(end, int) and 0 <= start < end):
                raise ValueError(f"bad span {self.span!r}: need 0 <= from < to")

    def key(self) -> tuple[str, Polarity]:
        """Deduplication / set-equality key: (normalized aspect, polarity)."""
        return (normalize_term(self.aspect), self.polarity)


def strip_spans(tuples: Iterable[SentimentTuple]) -> tuple[SentimentTuple, ...]:
    """Drop span anchors (used when a label is re-paired with new text)."""
    return tuple(SentimentTuple(t.aspect, t.polarity) for t in tuples)


def canonical_tuple_order(tuples: Iterable[SentimentTuple]) -> tuple[SentimentTuple, ...]:
    """Deterministic ordering for tuples coming out of sets or wire payloads."""
    return tuple(
        sorted(
            tuples,
            key=lambda t: (
                t.span is None,
                t.span or (0, 0),
                normalize_term(t.aspect),
                t.polarity.value,
            ),
        )
    )


@dataclass(frozen=True)
class LabeledExample:
    """Sentence text plus its sentiment tuples.

    ``origin`` records provenance: gold annotation, model prediction, or
    LLM generation. Tuples are deduplicated under (normalized aspect,
    polarity), keeping the first occurrence; spans are validated against
    the text.
    """

    id: str
    lang: str
    text: str
    tuples: tuple[SentimentTuple, ...]
    origin: str

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("id must be a non-empty string")
        if not isinstance(self.lang, str) or not _LANG_RE.fullmatch(self.lang):
            raise ValueError(f"lang must be a two-letter lowercase code, got {self.lang!r}")
        if not isinstance(self.text, str) or not self.text:
            raise ValueError(f"text must be non-empty (id={self.id!r})")
        if self.origin not in ORIGINS:
            raise ValueError(f"origin must be one of {ORIGINS}, got {self.origin!r}")
        deduped: list[SentimentTuple] = []
        seen = set()
        for t in self.tuples:
            if not isinstance(t, SentimentTuple):
                raise ValueError(f"tuples must be SentimentTuple, got {t!r}")
            if t.span is not None:
                start, end = t.span
                if end > len(self.text):
                    raise ValueError(
                        f"span {t.span} out of range for text of length {len(self.text)} (id={self.id!r})"
                    )
                if normalize_ws(self.text[start:end]) != normalize_ws(t.aspect):
                    raise ValueError(
                        f"span text {self.text[start:end]!r} != aspect {t.aspect!r} (id={self.id!r})"
                    )
            if t.key() not in seen:
                seen.add(t.key())
                deduped.append(t)
        object.__setattr__(self, "tuples", tuple(deduped))

    def tuple_keys(self) -> frozenset[tuple[str, Polarity]]:
        return frozenset(t.key() for t in self.tuples)


@dataclass
class LabeledDataset:
    examples: list[LabeledExample] = field(default_factory=list)

    def __post_init__(self):
        seen: set[str] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise DuplicateId(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[LabeledExample]:
        return iter(self.examples)


@dataclass(frozen=True)
class DatasetStats:
    n_sentences: int
    n_aspects: int
    polarity_histogram: Mapping[Polarity, int]

    def to_json(self) -> dict:
        return {
            "n_sentences": self.n_sentences,
            "n_aspects": self.n_aspects,
            "polarity_histogram": {p.value: self.polarity_histogram[p] for p in Polarity},
        }


def dataset_stats(dataset: LabeledDataset | Iterable[LabeledExample]) -> DatasetStats:
    hist = {p: 0 for p in Polarity}
    n_sentences = 0
    for ex in dataset:
        n_sentences += 1
        for t in ex.tuples:
            hist[t.polarity] += 1
    return DatasetStats(n_sentences, sum(hist.values()), hist)


# --- SemEval XML ingestion ---------------------------------------------------

#: Issue kinds recorded (per sentence) while parsing XML; the sentence is
#: skipped. NULL targets are not issues: the implicit-aspect subtask is out
#: of scope, so they are silently dropped and counted.
XML_ISSUE_KINDS = (
    "offset_mismatch",
    "bad_polarity",
    "bad_offset",
    "missing_attribute",
    "empty_text",
    "duplicate_id",
)


@dataclass(frozen=True)
class XmlIssue:
    sentence_id: str
    kind: str
    detail: str = ""


@dataclass
class XmlParseResult:
    dataset: LabeledDataset
    issues: list[XmlIssue]
    null_targets_skipped: int


def parse_semeval_xml(data: bytes | str, lang: str, allow_any_lang: bool = False) -> XmlParseResult:
    """Parse Reviews/Review/sentences/sentence XML into a gold dataset.

    Opinion elements carry target/category/polarity/from/to attributes.
    target="NULL" opinions (implicit aspects) are dropped and counted.
    Sentences with inconsistent annotations are skipped and recorded as
    issues rather than failing the whole file.
    """
    check_language(lang, allow_any_lang)
    try:
        root = ET.fromstring(data)
    except ET.ParseError as e:
        line, col = e.position
        raise MalformedXml(f"not well-formed XML at line {line}, column {col}: {e}") from e

    examples: list[LabeledExample] = []
    issues: list[XmlIssue] = []
    null_skipped = 0
    seen_ids: set[str] = set()

    for i, sent in enumerate(root.iter("sentence")):
        sid = sent.get("id") or f"sentence:{i}"
        text_el = sent.find("text")
        text = text_el.text if text_el is not None else None
        if not text:
            issues.append(XmlIssue(sid, "empty_text"))
            continue

        tuples: list[SentimentTuple] = []
        sentence_ok = True
        opinions = sent.find("Opinions")
        for op in opinions.findall("Opinion") if opinions is not None else []:
            target = op.get("target")
            if target == "NULL":
                null_skipped += 1
                continue
            polarity_word = op.get("polarity")
            if target is None or polarity_word is None:
                issues.append(XmlIssue(sid, "missing_attribute", "target/polarity"))
                sentence_ok = False
                break
            try:
                polarity = Polarity.from_word(polarity_word)
            except ValueError:
                issues.append(XmlIssue(sid, "bad_polarity", polarity_word))
                sentence_ok = False
                break

            raw_from, raw_to = op.get("from"), op.get("to")
            span: tuple[int, int] | None = None
            aspect = normalize_ws(target)
            if raw_from is not None and raw_to is not None:
                try:
                    start, end = int(raw_from), int(raw_to)
                except ValueError:
                    issues.append(XmlIssue(sid, "bad_offset", f"{raw_from},{raw_to}"))
                    sentence_ok = False
                    break
                if not (0 <= start < end <= len(text)):
                    issues.append(XmlIssue(sid, "bad_offset", f"{start},{end}"))
                    sentence_ok = False
                    break
                # Snug the span onto non-whitespace, then require that the
                # slice matches the annotated target after normalization.
                slice_ = text[start:end]
                start += len(slice_) - len(slice_.lstrip())
                end -= len(slice_) - len(slice_.rstrip())
                if start >= end or normalize_ws(text[start:end]) != normalize_ws(target):
                    issues.append(
                        XmlIssue(sid, "offset_mismatch", f"{target!r} vs {slice_!r} at {start}:{end}")
                    )
                    sentence_ok = False
                    break
                span = (start, end)
                aspect = text[start:end]
            if not aspect:
                issues.append(XmlIssue(sid, "missing_attribute", "empty target"))
                sentence_ok = False
                break
            tuples.append(SentimentTuple(aspect, polarity, span, category=op.get("category")))

        if not sentence_ok:
            continue
        if sid in seen_ids:
            issues.append(XmlIssue(sid, "duplicate_id"))
            continue
        seen_ids.add(sid)
        examples.append(LabeledExample(sid, lang, text, tuple(tuples), "gold"))

    return XmlParseResult(LabeledDataset(examples), issues, null_skipped)


# --- JSONL interchange -------------------------------------------------------

_RECORD_KEYS = {"id", "lang", "text", "tuples", "origin"}
_TUPLE_KEYS = {"aspect", "polarity", "from", "to"}


def tuple_to_json(t: SentimentTuple) -> dict:
    obj: dict = {"aspect": t.aspect, "polarity": t.polarity.value}
    if t.span is not None:
        obj["from"], obj["to"] = t.span
    return obj


def tuple_from_json(obj) -> SentimentTuple:
    if not isinstance(obj, dict):
        raise ValueError(f"tuple entry must be an object, got {type(obj).__name__}")
    unknown = set(obj) - _TUPLE_KEYS
    if unknown:
        raise ValueError(f"unknown tuple keys: {sorted(unknown)}")
    if "aspect" not in obj or "polarity" not in obj:
        raise ValueError("tuple entry missing 'aspect' or 'polarity'")
    if ("from" in obj) != ("to" in obj):
        raise ValueError("tuple entry must carry both 'from' and 'to' or neither")
    span = None
    if "from" in obj:
        if not (isinstance(obj["from"], int) and isinstance(obj["to"], int)):
            raise ValueError("'from'/'to' must be integers")
        span = (obj["from"], obj["to"])
    if not isinstance(obj["aspect"], str):
        raise ValueError("'aspect' must be a string")
    return SentimentTuple(obj["aspect"], Polarity.from_word(obj["polarity"]), span)


def example_to_record(ex: LabeledExample) -> dict:
    return {
        "id": ex.id,
        "lang": ex.lang,
        "text": ex.text,
        "tuples": [tuple_to_json(t) for t in ex.tuples],
        "origin": ex.origin,
    }


def example_from_record(obj) -> LabeledExample:
    if not isinstance(obj, dict):
        raise ValueError(f"record must be an object, got {type(obj).__name__}")
    missing = _RECORD_KEYS - set(obj)
    if missing:
        raise ValueError(f"record missing keys: {sorted(missing)}")
    unknown = set(obj) - _RECORD_KEYS
    if unknown:
        raise ValueError(f"unknown record keys: {sorted(unknown)}")
    if not isinstance(obj["tuples"], list):
        raise ValueError("'tuples' must be a list")
    tuples = tuple(tuple_from_json(t) for t in obj["tuples"])
    return LabeledExample(obj["id"], obj["lang"], obj["text"], tuples, obj["origin"])


def dumps_record(ex: LabeledExample) -> str:
    return json.dumps(example_to_record(ex), ensure_ascii=False)


def read_jsonl(path: str | Path) -> LabeledDataset:
    """Read a JSONL dataset; raises SchemaViolation with the offending line."""
    examples: list[LabeledExample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaViolation(f"invalid JSON: {e}", line=n) from e
            try:
                ex = example_from_record(obj)
            except ValueError as e:
                raise SchemaViolation(str(e), line=n) from e
            if ex.id in seen:
                raise DuplicateId(f"duplicate example id {ex.id!r} at line {n}")
            seen.add(ex.id)
            examples.append(ex)
    return LabeledDataset(examples)


def write_jsonl(dataset: LabeledDataset | Iterable[LabeledExample], path: str | Path) -> None:
    """Write records in input order, UTF-8, one JSON object per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ex in dataset:
            f.write(dumps_record(ex) + "\n")
