"""Deterministic in-process mock backends for model-free testing.

The mock server speaks the same /v1 payloads as a real one; combined with
InProcessTransport, client calls exercise the full encode/decode path.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Collection, Mapping

from .backend import GENERATE_PATH, PREDICT_PATH, TRAIN_PATH, TransportError
from .corpus import Polarity, SentimentTuple, normalize_term, tuple_to_json
from .genformat import parse_tuples
from .tagging import span_text, tokenize

#: Per-language clause template and polarity-typical adjectives. Glue words
#: here must stay disjoint from any aspect lexicon used in tests.
_CLAUSES = {
    "en": ("the {aspect} was {adj}", " and "),
    "es": ("el {aspect} fue {adj}", " y "),
    "fr": ("le {aspect} était {adj}", " et "),
    "nl": ("de {aspect} was {adj}", " en "),
    "ru": ("{aspect} просто {adj}", " и "),
    "tr": ("{aspect} gerçekten {adj}", " ve "),
}
_ADJECTIVES = {
    "en": {
        Polarity.POSITIVE: ["excellent", "wonderful", "fantastic"],
        Polarity.NEGATIVE: ["terrible", "awful", "disappointing"],
        Polarity.NEUTRAL: ["okay", "unremarkable", "ordinary"],
    },
    "es": {
        Polarity.POSITIVE: ["excelente", "estupendo", "magnífico"],
        Polarity.NEGATIVE: ["terrible", "pésimo", "decepcionante"],
        Polarity.NEUTRAL: ["normal", "corriente", "aceptable"],
    },
    "fr": {
        Polarity.POSITIVE: ["excellent", "superbe", "formidable"],
        Polarity.NEGATIVE: ["terrible", "affreux", "décevant"],
        Polarity.NEUTRAL: ["correct", "moyen", "ordinaire"],
    },
    "nl": {
        Polarity.POSITIVE: ["uitstekend", "geweldig", "heerlijk"],
        Polarity.NEGATIVE: ["verschrikkelijk", "waardeloos", "teleurstellend"],
        Polarity.NEUTRAL: ["redelijk", "gemiddeld", "gewoontjes"],
    },
    "ru": {
        Polarity.POSITIVE: ["отличный", "прекрасный", "замечательный"],
        Polarity.NEGATIVE: ["ужасный", "отвратительный", "плохой"],
        Polarity.NEUTRAL: ["обычный", "средний", "нормальный"],
    },
    "tr": {
        Polarity.POSITIVE: ["harika", "mükemmel", "güzel"],
        Polarity.NEGATIVE: ["berbat", "kötü", "korkunç"],
        Polarity.NEUTRAL: ["normal", "vasat", "sıradan"],
    },
}


def _stable_index(seed: int | None, salt: str, size: int) -> int:
    if seed is None or size <= 1:
        return 0
    digest = hashlib.sha256(f"{seed}:{salt}".encode()).digest()
    return int.from_bytes(digest[:4], "big") % size


def mock_absa_predict(lexicon: Mapping[str, Polarity], text: str) -> set[SentimentTuple]:
    """Longest-match scan over tokens; lexicon keys must be normalized terms."""
    tokens = tokenize(text)
    if not tokens:
        return set()
    max_words = max((len(k.split()) for k in lexicon), default=1)
    found: set[SentimentTuple] = set()
    i = 0
    while i < len(tokens):
        best = None
        for j in range(i, min(i + max_words, len(tokens))):
            key = normalize_term(span_text(tokens, i, j))
            if key in lexicon:
                best = j
        if best is None:
            i += 1
            continue
        span = (tokens[i].start, tokens[best].end)
        aspect = text[span[0] : span[1]]
        found.add(SentimentTuple(aspect, lexicon[normalize_term(span_text(tokens, i, best))], span))
        i = best + 1
    return found


def mock_llm_generate(
    label: Collection[SentimentTuple], lang: str, seed: int | None = None
) -> str:
    """Deterministic sentence embedding every aspect verbatim with a
    polarity-typical adjective; never mentions terms beyond the label."""
    if not label:
        raise ValueError("mock_llm_generate requires a non-empty label")
    clause_tpl, joiner = _CLAUSES.get(lang, _CLAUSES["en"])
    adjectives = _ADJECTIVES.get(lang, _ADJECTIVES["en"])
    clauses = []
    for t in label:
        choices = adjectives[t.polarity]
        adj = choices[_stable_index(seed, t.aspect, len(choices))]
        clauses.append(clause_tpl.format(aspect=t.aspect, adj=adj))
    sentence = joiner.join(clauses) + "."
    return sentence[0].upper() + sentence[1:]


def _truncate(text: str, stop: list, max_tokens: int) -> str:
    for s in stop:
        idx = text.find(s)
        if idx >= 0:
            text = text[:idx]
    words = text.split(" ")
    if len(words) > max_tokens:
        text = " ".join(words[:max_tokens])
    return text


def _last_input_line(prompt: str) -> str:
    for line in reversed(prompt.splitlines()):
        if line.strip().startswith("Input:"):
            return line.split("Input:", 1)[1]
    return ""


class MockModelServer:
    """Serves /v1/predict, /v1/generate and /v1/train in process.

    Prediction is lexicon-driven; generation parses the terminal Input line
    of the prompt and verbalizes it; training returns a content-derived
    model id (stable across runs and working directories).
    """

    def __init__(self, lexicon: Mapping[str, Polarity] | None = None, lang: str = "en"):
        self.lexicon = {normalize_term(k): v for k, v in (lexicon or {}).items()}
        self.lang = lang
        self.train_requests: list[dict] = []

    def handle(self, path: str, payload: dict) -> dict:
        if path == PREDICT_PATH:
            return self._predict(payload)
        if path == GENERATE_PATH:
            return self._generate(payload)
        if path == TRAIN_PATH:
            return self._train(payload)
        raise TransportError(f"unknown path {path}")

    def _predict(self, payload: dict) -> dict:
        predictions = []
        for sent in payload["sentences"]:
            tuples = mock_absa_predict(self.lexicon, sent["text"])
            ordered = sorted(tuples, key=lambda t: t.span)
            predictions.append({"id": sent["id"], "tuples": [tuple_to_json(t) for t in ordered]})
        return {"predictions": predictions}

    def _generate(self, payload: dict) -> dict:
        label, _issues = parse_tuples(_last_input_line(payload["prompt"]))
        if not label:
            return {"text": ""}
        ordered = sorted(label, key=lambda t: (normalize_term(t.aspect), t.polarity.value))
        text = mock_llm_generate(ordered, self.lang, seed=payload.get("seed"))
        sampling = payload.get("sampling", {})
        return {"text": _truncate(text, payload.get("stop", []), sampling.get("max_tokens", 128))}

    def _train(self, payload: dict) -> dict:
        self.train_requests.append(payload)
        h = hashlib.sha256()
        uri = payload.get("dataset_uri", "")
        data_path = Path(uri[7:] if uri.startswith("file://") else uri)
        if data_path.is_file():
            h.update(data_path.read_bytes())
        else:
            h.update(uri.encode())
        h.update(
            json.dumps(
                {
                    "backbone": payload.get("backbone"),
                    "hyperparams": payload.get("hyperparams"),
                    "seed": payload.get("seed"),
                },
                sort_keys=True,
                ensure_ascii=False,
            ).encode()
        )
        return {"model": f"mock-{payload.get('backbone', 'model')}-{h.hexdigest()[:12]}"}


class FlakyServer:
    """Wraps a server handler with deterministic fault injection.

    The fail/pass decision is a pure function of the payload (seed, prompt,
    or whole body), so a failing request keeps failing across retries and
    the expected failure count over n jobs is fail_prob * n.
    """

    def __init__(self, inner: MockModelServer, fail_prob: float, seed: int = 0, paths: tuple = (GENERATE_PATH,)):
        self.inner = inner
        self.fail_prob = fail_prob
        self.seed = seed
        self.paths = paths

    def _unit(self, payload: dict) -> float:
        key = payload.get("seed")
        if key is None:
            key = payload.get("prompt", json.dumps(payload, sort_keys=True, default=repr))
        digest = hashlib.sha256(f"{self.seed}:{key}".encode()).digest()
        return int.from_bytes(digest[:8], "big") / 2**64

    def handle(self, path: str, payload: dict) -> dict:
        if path in self.paths and self.fail_prob > 0 and self._unit(payload) < self.fail_prob:
            raise TransportError("injected timeout")
        return self.inner.handle(path, payload)
