"""Text generation backends for /v1/generate.

The builtin sampler is a self-contained test model: at temperature 0 it
echoes the prompt (deterministic), otherwise it draws tokens from the
prompt's unigram distribution with temperature scaling and top-p (nucleus)
filtering. The proxy backend forwards requests to an upstream server that
speaks the same endpoint and surfaces upstream failures as 502s.
"""

from __future__ import annotations

import numpy as np
import requests

from .service_errors import ServiceError


def top_p_filter(probs: np.ndarray, top_p: float) -> np.ndarray:
    """Zero out everything outside the smallest prefix of probability mass
    >= top_p (tokens sorted by descending probability), then renormalize."""
    if not (0.0 < top_p <= 1.0):
        raise ValueError(f"top_p must be in (0, 1], got {top_p}")
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    cut = int(np.searchsorted(cumulative, top_p)) + 1
    kept = order[:cut]
    filtered = np.zeros_like(probs)
    filtered[kept] = probs[kept]
    return filtered / filtered.sum()


def apply_stop_and_budget(text: str, stop: list[str], max_tokens: int) -> str:
    for s in stop:
        if s:
            idx = text.find(s)
            if idx >= 0:
                text = text[:idx]
    words = text.split(" ")
    if len(words) > max_tokens:
        text = " ".join(words[:max_tokens])
    return text


class BuiltinSampler:
    """Prompt-conditioned unigram sampler; tokens are whitespace words."""

    def complete(self, prompt: str, sampling: dict, stop: list[str], seed: int | None) -> str:
        tokens = prompt.split()
        if not tokens:
            return ""
        temperature = float(sampling.get("temperature", 0.8))
        top_p = float(sampling.get("top_p", 0.8))
        max_tokens = int(sampling.get("max_tokens", 128))
        if temperature == 0.0:
            return apply_stop_and_budget(" ".join(tokens), stop, max_tokens)

        vocab, counts = np.unique(np.array(tokens, dtype=object), return_counts=True)
        logits = np.log(counts.astype(float)) / temperature
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        probs = top_p_filter(probs, top_p)
        rng = np.random.default_rng(0 if seed is None else seed)
        drawn = rng.choice(len(vocab), size=max_tokens, p=probs)
        return apply_stop_and_budget(" ".join(str(vocab[i]) for i in drawn), stop, max_tokens)


class UpstreamProxy:
    """Forwards generate requests verbatim to another /v1/generate server."""

    def __init__(self, upstream_url: str, timeout_s: float = 60.0):
        self.url = upstream_url.rstrip("/") + "/v1/generate"
        self.timeout_s = timeout_s

    def complete(self, prompt: str, sampling: dict, stop: list[str], seed: int | None) -> str:
        payload = {"prompt": prompt, "sampling": sampling, "stop": stop}
        if seed is not None:
            payload["seed"] = seed
        try:
            resp = requests.post(self.url, json=payload, timeout=self.timeout_s)
        except requests.RequestException as e:
            raise ServiceError(502, f"upstream generation failed: {e}") from e
        if resp.status_code != 200:
            raise ServiceError(502, f"upstream returned {resp.status_code}")
        body = resp.json()
        if not isinstance(body.get("text"), str):
            raise ServiceError(502, "upstream response missing 'text'")
        return body["text"]
