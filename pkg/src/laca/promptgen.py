"""Generation prompts: instruction, rotated few-shot demonstrations, target
label, plus the sentiment-rebalanced additional inputs.

All randomness is drawn from per-job streams seeded by
``stable_seed(run_seed, job_index)``, so prompts are byte-identical across
runs, platforms, and parallelism levels.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
from dataclasses import dataclass, replace
from importlib import resources
from typing import Iterable, Sequence

from .backend import SamplingParams
from .corpus import LabeledExample, Polarity, SentimentTuple
from .filtering import contains_all_aspects
from .genformat import serialize_tuples

logger = logging.getLogger(__name__)

LANGUAGE_NAMES = {
    "en": "English",
    "es": "Spanish",
    "fr": "French",
    "nl": "Dutch",
    "ru": "Russian",
    "tr": "Turkish",
}

DEFAULT_K_SHOT = 10
DEFAULT_STOP = ("\n\n",)
TEMPLATE_RESOURCE = "generation_prompt_v1.txt"


def stable_seed(*parts) -> int:
    """Platform-independent 63-bit seed from arbitrary string/int parts."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def job_rng(run_seed: int, job_index: int) -> random.Random:
    return random.Random(stable_seed(run_seed, "job", job_index))


def language_name(code: str) -> str:
    return LANGUAGE_NAMES.get(code, code)


def default_prompt_template() -> str:
    return (
        resources.files("laca.templates").joinpath(TEMPLATE_RESOURCE).read_text(encoding="utf-8")
    )


@dataclass(frozen=True)
class Demonstration:
    """An in-context input/output pair: rendered label plus source sentence."""

    label_text: str
    text: str


@dataclass(frozen=True)
class RebalanceConfig:
    """Additional-input policy: take 20 % of positive-containing labels and
    resample each positive tuple to neutral (60 %) or negative (40 %)."""

    select_ratio: float = 0.20
    neutral_prob: float = 0.60
    negative_prob: float = 0.40

    def __post_init__(self):
        if not (0.0 <= self.select_ratio <= 1.0):
            raise ValueError(f"select_ratio must be in [0, 1], got {self.select_ratio}")
        if not math.isclose(self.neutral_prob + self.negative_prob, 1.0, abs_tol=1e-9):
            raise ValueError("neutral_prob + negative_prob must equal 1")
        if not (0.0 <= self.neutral_prob <= 1.0):
            raise ValueError("neutral_prob must be in [0, 1]")


@dataclass(frozen=True)
class GenerationJob:
    id: str
    label: tuple[SentimentTuple, ...]
    lang: str
    demos: tuple[Demonstration, ...]
    prompt: str
    sampling: SamplingParams
    seed: int
    stop: tuple[str, ...] = DEFAULT_STOP

    def __post_init__(self):
        if not self.label:
            raise ValueError("generation job label must be non-empty")


def eligible_demo_pool(source_dataset: Iterable[LabeledExample]) -> list[LabeledExample]:
    """Source examples usable as demonstrations: non-empty labels whose text
    contains every aspect verbatim (gold data always qualifies)."""
    return [
        ex for ex in source_dataset if ex.tuples and contains_all_aspects(ex.text, ex.tuples)
    ]


def sample_demonstrations(
    source_dataset: Sequence[LabeledExample], k: int, rng: random.Random
) -> list[Demonstration]:
    """Draw k distinct demonstrations uniformly without replacement.

    When fewer than k examples are eligible, all of them are returned and a
    warning is logged.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pool = eligible_demo_pool(source_dataset)
    if len(pool) < k:
        logger.warning("only %d eligible demonstrations for k=%d; using all", len(pool), k)
        chosen = list(pool)
    else:
        chosen = rng.sample(pool, k)
    return [Demonstration(serialize_tuples(ex.tuples), ex.text) for ex in chosen]


def build_generation_prompt(
    label: Sequence[SentimentTuple],
    lang: str,
    demos: Sequence[Demonstration],
    template: str | None = None,
) -> str:
    """Render the prompt: instruction, demonstrations, then the target label.

    A pure function of its inputs; placeholder substitution is literal, so
    braces inside demonstrations are safe.
    """
    if not label:
        raise ValueError("label must be non-empty")
    template = template if template is not None else default_prompt_template()
    demo_block = "\n\n".join(f"Input: {d.label_text}\nOutput: {d.text}" for d in demos)
    return (
        template.replace("{TARGET_LANGUAGE}", language_name(lang))
        .replace("{DEMONSTRATIONS}", demo_block)
        .replace("{TARGET_INPUT}", serialize_tuples(list(label)))
    )


def rebalance(
    examples: Sequence[LabeledExample], cfg: RebalanceConfig, rng: random.Random
) -> list[LabeledExample]:
    """Emit additional generation inputs from positive-containing labels.

    Selects floor(select_ratio * n) of them uniformly; each copy has every
    positive tuple's polarity independently resampled to neutral or negative.
    Aspect terms, spans and non-positive tuples are untouched; the originals
    stay in the caller's dataset.
    """
    positives = [ex for ex in examples if any(t.polarity is Polarity.POSITIVE for t in ex.tuples)]
    n_selected = math.floor(cfg.select_ratio * len(positives))
    if n_selected == 0:
        return []
    selected_ids = {ex.id for ex in rng.sample(positives, n_selected)}
    additional: list[LabeledExample] = []
    for ex in examples:
        if ex.id not in selected_ids:
            continue
        new_tuples = []
        for t in ex.tuples:
            if t.polarity is Polarity.POSITIVE:
                pol = Polarity.NEUTRAL if rng.random() < cfg.neutral_prob else Polarity.NEGATIVE
                new_tuples.append(replace(t, polarity=pol))
            else:
                new_tuples.append(t)
        additional.append(replace(ex, id=f"{ex.id}::rb", tuples=tuple(new_tuples)))
    return additional


def build_generation_jobs(
    labels: Sequence[LabeledExample],
    source_dataset: Sequence[LabeledExample],
    lang: str,
    k_shot: int = DEFAULT_K_SHOT,
    sampling: SamplingParams = SamplingParams(),
    run_seed: int = 0,
    template: str | None = None,
) -> list[GenerationJob]:
    """One job per label record, each with its own demonstration draw and seed."""
    template = template if template is not None else default_prompt_template()
    jobs: list[GenerationJob] = []
    for index, ex in enumerate(labels):
        rng = job_rng(run_seed, index)
        demos = sample_demonstrations(source_dataset, k_shot, rng)
        prompt = build_generation_prompt(ex.tuples, lang, demos, template)
        jobs.append(
            GenerationJob(
                id=ex.id,
                label=ex.tuples,
                lang=lang,
                demos=tuple(demos),
                prompt=prompt,
                sampling=sampling,
                seed=stable_seed(run_seed, "sample", index),
            )
        )
    return jobs
