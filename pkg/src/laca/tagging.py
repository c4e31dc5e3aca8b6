"""Offset-preserving tokenization and the BIO-with-polarity tag scheme.

Tag strings are rendered exactly as "O", "B-POS", "I-POS", "B-NEG", "I-NEG",
"B-NEU", "I-NEU"; these appear verbatim in backend payloads and debug dumps.
"""

from __future__ import annotations

import logging
import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Polarity, SentimentTuple, normalize_term
from .errors import OverlappingAspects, UnalignableSpan

logger = logging.getLogger(__name__)

POLARITY_SUFFIX = {Polarity.POSITIVE: "POS", Polarity.NEGATIVE: "NEG", Polarity.NEUTRAL: "NEU"}
SUFFIX_POLARITY = {v: k for k, v in POLARITY_SUFFIX.items()}

OUTSIDE = "O"
ALL_TAGS = (OUTSIDE,) + tuple(f"{bi}-{suf}" for suf in ("POS", "NEG", "NEU") for bi in ("B", "I"))

_WS_CHUNK = re.compile(r"\S+")


@dataclass(frozen=True)
class Token:
    """A token with half-open character offsets into its source sentence."""

    text: str
    start: int
    end: int


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[Token]:
    """Split on whitespace, then peel leading/trailing punctuation characters
    into their own tokens. Offsets are exact; empty text gives an empty list.
    """
    tokens: list[Token] = []
    for m in _WS_CHUNK.finditer(text):
        chunk, base = m.group(), m.start()
        left, right = 0, len(chunk)
        while left < right and _is_punct(chunk[left]):
            left += 1
        while right > left and _is_punct(chunk[right - 1]):
            right -= 1
        for i in range(left):
            tokens.append(Token(chunk[i], base + i, base + i + 1))
        if left < right:
            tokens.append(Token(chunk[left:right], base + left, base + right))
        for i in range(right, len(chunk)):
            tokens.append(Token(chunk[i], base + i, base + i + 1))
    return tokens


def span_text(tokens: Sequence[Token], first: int, last: int) -> str:
    """Reconstruct the surface text of tokens[first..last], using a single
    space wherever the original had a gap (whitespace-normalized form).
    """
    parts = [tokens[first].text]
    for k in range(first + 1, last + 1):
        if tokens[k].start > tokens[k - 1].end:
            parts.append(" ")
        parts.append(tokens[k].text)
    return "".join(parts)


def _tag_parts(tag: str) -> tuple[str, Polarity | None]:
    if tag == OUTSIDE:
        return OUTSIDE, None
    if tag not in ALL_TAGS:
        raise ValueError(f"unknown tag {tag!r}; expected one of {ALL_TAGS}")
    bi, suffix = tag.split("-", 1)
    return bi, SUFFIX_POLARITY[suffix]


def is_well_formed(tags: Sequence[str]) -> bool:
    """True iff every I-x is immediately preceded by B-x or I-x of the same polarity."""
    prev: Polarity | None = None
    for tag in tags:
        bi, pol = _tag_parts(tag)
        if bi == "I" and pol is not prev:
            return False
        prev = pol if bi in ("B", "I") else None
    return True


def repair_tags(tags: Sequence[str]) -> list[str]:
    """Rewrite any I-x that does not continue a same-polarity span to B-x.

    Standard IOB2 repair; idempotent, and the output is always well-formed.
    """
    repaired: list[str] = []
    prev: Polarity | None = None
    for tag in tags:
        bi, pol = _tag_parts(tag)
        if bi == "I" and pol is not prev:
            tag = f"B-{POLARITY_SUFFIX[pol]}"
        repaired.append(tag)
        prev = pol
    return repaired


def _locate_aspect(tokens: Sequence[Token], aspect: str) -> tuple[int, int] | None:
    """Leftmost, shortest token run whose normalized surface equals the aspect."""
    target = normalize_term(aspect)
    n = len(tokens)
    for i in range(n):
        for j in range(i, n):
            cand = normalize_term(span_text(tokens, i, j))
            if cand == target:
                return (tokens[i].start, tokens[j].end)
            if len(cand) > len(target) + 1:
                break
    return None


def encode_bio(tokens: Sequence[Token], tuples: Iterable[SentimentTuple]) -> list[str]:
    """Encode tuples as a BIO-with-polarity sequence over the given tokens.

    Spans that start or end mid-token are expanded outward to token
    boundaries (with a logged warning). Tuples without spans are located by
    normalized surface match; failure to align raises UnalignableSpan, and
    two tuples claiming one token raise OverlappingAspects.
    """
    tags = [OUTSIDE] * len(tokens)
    claimed: list[SentimentTuple | None] = [None] * len(tokens)
    for t in tuples:
        span = t.span if t.span is not None else _locate_aspect(tokens, t.aspect)
        if span is None:
            raise UnalignableSpan(f"aspect {t.aspect!r} not found on token boundaries")
        start, end = span
        covered = [i for i, tok in enumerate(tokens) if tok.end > start and tok.start < end]
        if not covered:
            raise UnalignableSpan(f"span {span} of {t.aspect!r} covers no token")
        first, last = covered[0], covered[-1]
        if (tokens[first].start, tokens[last].end) != span:
            logger.warning(
                "span %s of %r snapped to token boundaries (%d, %d)",
                span, t.aspect, tokens[first].start, tokens[last].end,
            )
        for i in covered:
            if claimed[i] is not None:
                raise OverlappingAspects(
                    f"token {tokens[i].text!r} claimed by both {claimed[i].aspect!r} and {t.aspect!r}"
                )
            claimed[i] = t
        suffix = POLARITY_SUFFIX[t.polarity]
        tags[first] = f"B-{suffix}"
        for i in covered[1:]:
            tags[i] = f"I-{suffix}"
    return tags


def decode_bio(
    tokens: Sequence[Token], tags: Sequence[str], text: str | None = None
) -> set[SentimentTuple]:
    """Decode a tag sequence into span-anchored tuples.

    Ill-formed sequences are repaired first, so this never fails. When the
    source ``text`` is given, aspects are exact slices of it; otherwise they
    are reconstructed from token surfaces (single-space gaps).
    """
    if len(tags) != len(tokens):
        raise ValueError(f"{len(tags)} tags for {len(tokens)} tokens")
    repaired = repair_tags(tags)
    out: set[SentimentTuple] = set()
    i = 0
    while i < len(repaired):
        bi, pol = _tag_parts(repaired[i])
        if bi != "B":
            i += 1
            continue
        j = i
        while j + 1 < len(repaired):
            nbi, npol = _tag_parts(repaired[j + 1])
            if nbi == "I" and npol is pol:
                j += 1
            else:
                break
        span = (tokens[i].start, tokens[j].end)
        aspect = text[span[0] : span[1]] if text is not None else span_text(tokens, i, j)
        out.add(SentimentTuple(aspect, pol, span))
        i = j + 1
    return out
