"""Tuple-set text format used by generative backbones and inside prompts.

Rendered form: ``[A] aspect [P] polarity`` segments joined by `` [;] ``,
with the polarity as a lowercase English word. Parsing is tolerant
(case-insensitive markers and polarity words, loose whitespace) because LLM
outputs drift; anything unparseable is dropped and surfaced as an issue.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .corpus import Polarity, SentimentTuple
from .errors import EmptyTupleList

ASPECT_MARKER = "[A]"
POLARITY_MARKER = "[P]"
SEPARATOR = "[;]"

#: Matches any marker-looking bracket group; aspects containing one cannot be
#: serialized because the grammar has no escaping.
_MARKER_RE = re.compile(r"\[\s*[AaPp;]\s*\]")
_SEP_RE = re.compile(r"\[\s*;\s*\]")
_SEGMENT_RE = re.compile(
    r"\s*\[\s*[Aa]\s*\](?P<aspect>.*?)\[\s*[Pp]\s*\](?P<polarity>.*)$", re.DOTALL
)

ISSUE_KINDS = ("empty_segment", "missing_marker", "unknown_polarity", "empty_aspect")


@dataclass(frozen=True)
class ParseIssue:
    kind: str
    detail: str = ""


def serialize_tuples(tuples: Sequence[SentimentTuple]) -> str:
    """Render an ordered tuple list; aspects appear verbatim."""
    if not tuples:
        raise EmptyTupleList("cannot serialize an empty tuple list")
    parts = []
    for t in tuples:
        if _MARKER_RE.search(t.aspect):
            raise ValueError(f"aspect {t.aspect!r} contains a reserved marker")
        parts.append(f"{ASPECT_MARKER} {t.aspect} {POLARITY_MARKER} {t.polarity.value}")
    return f" {SEPARATOR} ".join(parts)


def parse_tuples(text: str) -> tuple[set[SentimentTuple], list[ParseIssue]]:
    """Best-effort inverse of serialize_tuples; never raises.

    Each dropped segment yields exactly one issue; exact duplicates are
    collapsed without an issue.
    """
    tuples: set[SentimentTuple] = set()
    issues: list[ParseIssue] = []
    for segment in _SEP_RE.split(text):
        if not segment.strip():
            issues.append(ParseIssue("empty_segment"))
            continue
        m = _SEGMENT_RE.match(segment)
        if m is None:
            issues.append(ParseIssue("missing_marker", segment.strip()))
            continue
        aspect = m.group("aspect").strip()
        if not aspect:
            issues.append(ParseIssue("empty_aspect", segment.strip()))
            continue
        word = m.group("polarity").strip()
        try:
            polarity = Polarity.from_word(word)
        except ValueError:
            issues.append(ParseIssue("unknown_polarity", word))
            continue
        tuples.add(SentimentTuple(aspect, polarity))
    return tuples, issues
