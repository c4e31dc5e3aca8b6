"""Wire protocol to ABSA-predictor and LLM-generator services.

HTTP, JSON bodies, UTF-8. Endpoints:

- POST /v1/predict  -> req {"model", "lang", "sentences": [{"id", "text"}]}
                       resp {"predictions": [{"id", "tuples": [{"aspect", "polarity", "from"?, "to"?}]}]}
- POST /v1/generate -> req {"prompt", "sampling": {"top_p", "temperature", "max_tokens"}, "stop", "seed"?}
                       resp {"text"}
- POST /v1/train    -> req {"dataset_uri", "backbone", "hyperparams", "seed"}
                       resp {"model"}

Auth token comes from config or the LACA_BACKEND_TOKEN env var. The same
client drives real HTTP servers and in-process mock servers; both paths go
through identical encode/validate/decode steps.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import requests

from .corpus import SentimentTuple, tuple_from_json
from .errors import BackendUnavailable, ProtocolViolation

logger = logging.getLogger(__name__)

PREDICT_PATH = "/v1/predict"
GENERATE_PATH = "/v1/generate"
TRAIN_PATH = "/v1/train"

AUTH_TOKEN_ENV = "LACA_BACKEND_TOKEN"


@dataclass(frozen=True)
class SamplingParams:
    """Nucleus-sampling parameters; defaults follow the generation setup
    (top_p=0.8, temperature=0.8) used throughout the pipeline."""

    top_p: float = 0.8
    temperature: float = 0.8
    max_tokens: int = 128

    def __post_init__(self):
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.temperature < 0.0:
            raise ValueError(f"temperature must be non-negative, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")

    def to_json(self) -> dict:
        return {"top_p": self.top_p, "temperature": self.temperature, "max_tokens": self.max_tokens}


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    timeout_s: float = 30.0
    max_retries: int = 3
    max_in_flight: int = 4
    auth_token: str | None = None
    backoff_base_s: float = 1.0
    backoff_jitter: float = 0.2

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class TransportError(Exception):
    """Retryable transport-level failure (timeout, connection, 5xx)."""


class Transport(Protocol):
    def call(self, path: str, payload: dict) -> dict: ...


# --- codecs and validators ---------------------------------------------------


def encode_predict_request(model: str, lang: str, sentences: Sequence[tuple[str, str]]) -> dict:
    return {
        "model": model,
        "lang": lang,
        "sentences": [{"id": sid, "text": text} for sid, text in sentences],
    }


def validate_predict_response(payload, expected_ids: Iterable[str] | None = None) -> dict[str, tuple[SentimentTuple, ...]]:
    """Validate a /v1/predict response body; returns tuples keyed by id.

    Response ids must be exactly a permutation of the request ids (when
    given), and every tuple must decode cleanly, spans included.
    """
    if not isinstance(payload, dict) or not isinstance(payload.get("predictions"), list):
        raise ProtocolViolation(f"predict response must carry a 'predictions' list: {_snippet(payload)}")
    out: dict[str, tuple[SentimentTuple, ...]] = {}
    for entry in payload["predictions"]:
        if not isinstance(entry, dict) or "id" not in entry or not isinstance(entry.get("tuples"), list):
            raise ProtocolViolation(f"bad prediction entry: {_snippet(entry)}")
        sid = entry["id"]
        if not isinstance(sid, str):
            raise ProtocolViolation(f"prediction id must be a string: {_snippet(entry)}")
        if sid in out:
            raise ProtocolViolation(f"duplicate prediction id {sid!r}")
        try:
            out[sid] = tuple(tuple_from_json(t) for t in entry["tuples"])
        except ValueError as e:
            raise ProtocolViolation(f"bad tuple for id {sid!r}: {e}") from e
    if expected_ids is not None:
        expected = set(expected_ids)
        got = set(out)
        if got != expected:
            raise ProtocolViolation(
                f"prediction ids are not a permutation of request ids "
                f"(missing={sorted(expected - got)}, extra={sorted(got - expected)})"
            )
    return out


def encode_generate_request(
    prompt: str, sampling: SamplingParams, stop: Sequence[str] = (), seed: int | None = None
) -> dict:
    req: dict = {"prompt": prompt, "sampling": sampling.to_json(), "stop": list(stop)}
    if seed is not None:
        req["seed"] = seed
    return req


def validate_generate_response(payload) -> str:
    if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
        raise ProtocolViolation(f"generate response must carry a string 'text': {_snippet(payload)}")
    return payload["text"]


def encode_train_request(dataset_uri: str, backbone: str, hyperparams: Mapping, seed: int) -> dict:
    return {
        "dataset_uri": dataset_uri,
        "backbone": backbone,
        "hyperparams": dict(hyperparams),
        "seed": seed,
    }


def validate_train_response(payload) -> str:
    if not isinstance(payload, dict) or not isinstance(payload.get("model"), str) or not payload["model"]:
        raise ProtocolViolation(f"train response must carry a non-empty 'model' id: {_snippet(payload)}")
    return payload["model"]


def _snippet(obj, limit: int = 200) -> str:
    try:
        s = json.dumps(obj, ensure_ascii=False, default=repr)
    except TypeError:
        s = repr(obj)
    return s if len(s) <= limit else s[:limit] + "..."


# --- transports ---------------------------------------------------------------


class HttpTransport:
    """requests-backed transport; one Session per thread."""

    def __init__(self, base_url: str, timeout_s: float = 30.0, auth_token: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.auth_token = auth_token if auth_token is not None else os.environ.get(AUTH_TOKEN_ENV)
        self._local = threading.local()

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def call(self, path: str, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        try:
            resp = self._session().post(
                self.base_url + path, json=payload, headers=headers, timeout=self.timeout_s
            )
        except requests.RequestException as e:
            raise TransportError(f"{path}: {e}") from e
        if resp.status_code >= 500:
            raise TransportError(f"{path}: server error {resp.status_code}")
        if resp.status_code != 200:
            raise ProtocolViolation(f"{path}: unexpected status {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as e:
            raise ProtocolViolation(f"{path}: response is not JSON: {resp.text[:200]}") from e


class InProcessTransport:
    """Routes calls straight into a handler; used by the mock servers.

    The payload passes through a JSON round-trip so that mock runs exercise
    the exact encode/decode path a real server would see.
    """

    def __init__(self, handler: Callable[[str, dict], dict]):
        self._handler = handler

    def call(self, path: str, payload: dict) -> dict:
        wire = json.loads(json.dumps(payload, ensure_ascii=False))
        return json.loads(json.dumps(self._handler(path, wire), ensure_ascii=False))


# --- client --------------------------------------------------------------------


@dataclass(frozen=True)
class GenerationFailure:
    job_id: str
    error: str
    attempts: int


class BackendClient:
    """Thread-safe client with bounded concurrency and per-call retries.

    Retries use exponential backoff (base 1 s doubling, +/-20 % jitter by
    default) on transport errors only; protocol violations fail fast.
    """

    def __init__(
        self,
        transport: Transport,
        config: BackendConfig,
        sleep: Callable[[float], None] = time.sleep,
        jitter_rng: random.Random | None = None,
    ):
        self.transport = transport
        self.config = config
        self._sleep = sleep
        self._jitter = jitter_rng or random.Random()

    @classmethod
    def for_http(cls, config: BackendConfig, **kwargs) -> "BackendClient":
        return cls(
            HttpTransport(config.base_url, config.timeout_s, config.auth_token), config, **kwargs
        )

    def call(self, path: str, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                return self.transport.call(path, payload)
            except TransportError as e:
                last_error = e
                if attempt < self.config.max_retries:
                    delay = self.config.backoff_base_s * (2**attempt)
                    delay *= 1.0 + self._jitter.uniform(
                        -self.config.backoff_jitter, self.config.backoff_jitter
                    )
                    if delay > 0:
                        self._sleep(delay)
        raise BackendUnavailable(
            f"{path} failed after {self.config.max_retries + 1} attempts: {last_error}"
        ) from last_error

    def predict(
        self, model: str, lang: str, sentences: Sequence[tuple[str, str]]
    ) -> dict[str, tuple[SentimentTuple, ...]]:
        payload = self.call(PREDICT_PATH, encode_predict_request(model, lang, sentences))
        return validate_predict_response(payload, expected_ids=[sid for sid, _ in sentences])

    def generate(
        self,
        prompt: str,
        sampling: SamplingParams,
        stop: Sequence[str] = (),
        seed: int | None = None,
    ) -> str:
        payload = self.call(GENERATE_PATH, encode_generate_request(prompt, sampling, stop, seed))
        return validate_generate_response(payload)

    def train(self, dataset_uri: str, backbone: str, hyperparams: Mapping, seed: int) -> str:
        payload = self.call(TRAIN_PATH, encode_train_request(dataset_uri, backbone, hyperparams, seed))
        return validate_train_response(payload)


def predict_batch(
    client: BackendClient,
    lang: str,
    examples: Sequence[tuple[str, str]],
    model: str,
    batch_size: int = 32,
) -> dict[str, tuple[SentimentTuple, ...]]:
    """Predict tuples for (id, text) pairs; wire batching is transparent."""
    if not examples:
        raise ValueError("predict_batch requires at least one example")
    out: dict[str, tuple[SentimentTuple, ...]] = {}
    for i in range(0, len(examples), batch_size):
        out.update(client.predict(model, lang, examples[i : i + batch_size]))
    return out


def generate_batch(client: BackendClient, jobs: Sequence) -> dict[str, str | GenerationFailure]:
    """Run generation jobs with bounded concurrency and per-job retries.

    Jobs need ``id``, ``prompt``, ``sampling``, ``seed`` and optionally
    ``stop`` attributes. A job that exhausts its retries becomes a
    GenerationFailure record; the batch itself never aborts.
    """
    if not jobs:
        return {}

    def one(job) -> tuple[str, str | GenerationFailure]:
        stop = getattr(job, "stop", ("\n\n",))
        try:
            return job.id, client.generate(job.prompt, job.sampling, stop=stop, seed=job.seed)
        except BackendUnavailable as e:
            logger.warning("generation job %s dropped: %s", job.id, e)
            return job.id, GenerationFailure(job.id, str(e), client.config.max_retries + 1)

    results: dict[str, str | GenerationFailure] = {}
    with ThreadPoolExecutor(max_workers=client.config.max_in_flight) as pool:
        for job_id, result in pool.map(one, jobs):
            results[job_id] = result
    return results
