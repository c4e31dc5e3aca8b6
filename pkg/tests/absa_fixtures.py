"""Shared test data: the XML fixture, synthetic corpora, and mock clients."""

from __future__ import annotations

import random

from laca.backend import BackendClient, BackendConfig, InProcessTransport
from laca.corpus import LabeledExample, Polarity, SentimentTuple
from laca.mocks import MockModelServer

FIXTURE_XML = b"""<?xml version="1.0" encoding="UTF-8"?>
<Reviews>
  <Review rid="r1">
    <sentences>
      <sentence id="r1:0">
        <text>Great tea but terrible service</text>
        <Opinions>
          <Opinion target="tea" category="DRINKS#QUALITY" polarity="positive" from="6" to="9"/>
          <Opinion target="service" category="SERVICE#GENERAL" polarity="negative" from="23" to="30"/>
        </Opinions>
      </sentence>
      <sentence id="r1:1">
        <text>Nice place overall.</text>
        <Opinions>
          <Opinion target="NULL" category="RESTAURANT#GENERAL" polarity="positive" from="0" to="0"/>
        </Opinions>
      </sentence>
      <sentence id="r1:2">
        <text>The carta de vinos impressed us.</text>
        <Opinions>
          <Opinion target="carta de vinos" category="DRINKS#STYLE_OPTIONS" polarity="positive" from="4" to="18"/>
        </Opinions>
      </sentence>
    </sentences>
  </Review>
</Reviews>
"""

#: term -> polarity word; glue words used by sentence builders and by the
#: mock generator must never appear here.
LEXICON_WORDS = {
    "tea": "positive",
    "coffee": "negative",
    "paella": "positive",
    "wifi": "negative",
    "menu": "neutral",
    "staff": "positive",
    "terrace": "neutral",
    "dessert": "positive",
    "wine list": "positive",
    "parking": "negative",
    "soup": "neutral",
    "bread": "positive",
}

LEXICON = {term: Polarity.from_word(word) for term, word in LEXICON_WORDS.items()}


def ex(
    id: str,
    text: str,
    tuples=(),
    lang: str = "en",
    origin: str = "gold",
) -> LabeledExample:
    return LabeledExample(id, lang, text, tuple(tuples), origin)


def build_sentence(terms: list[str], polarity_map=None) -> LabeledExample | tuple:
    """Deterministic sentence embedding each term once, with exact spans."""
    polarity_map = polarity_map or LEXICON
    text = "we ordered"
    tuples = []
    for k, term in enumerate(terms):
        text += " the " if k == 0 else " and the "
        start = len(text)
        text += term
        tuples.append(SentimentTuple(term, polarity_map[term], (start, len(text))))
    text += " here" if terms else " nothing"
    return text, tuples


def synthetic_corpus(
    n: int, lang: str, rng: random.Random, prefix: str, labelled: bool = True,
    empty_rate: float = 0.0,
) -> list[LabeledExample]:
    """Corpus whose sentences embed lexicon terms the mock backend can find."""
    out = []
    terms_pool = sorted(LEXICON)
    for i in range(n):
        if rng.random() < empty_rate:
            text, tuples = "we ordered nothing special today", []
        else:
            terms = rng.sample(terms_pool, rng.randint(1, 3))
            text, tuples = build_sentence(terms)
        out.append(ex(f"{prefix}:{i}", text, tuples if labelled else (), lang=lang))
    return out


def mock_client(
    lexicon=None, lang: str = "en", handler=None, max_retries: int = 3, max_in_flight: int = 4
) -> tuple[BackendClient, MockModelServer]:
    server = MockModelServer(lexicon if lexicon is not None else LEXICON, lang=lang)
    config = BackendConfig(
        base_url="mock://test",
        max_retries=max_retries,
        max_in_flight=max_in_flight,
        backoff_base_s=0.0,
    )
    client = BackendClient(InProcessTransport(handler or server.handle), config)
    return client, server
