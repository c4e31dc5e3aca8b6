"""Request handlers behind the /v1 endpoints.

Backbone families:

- ``tiny-tokenclf``: builtin linear token classifier (default; CPU, instant)
- ``tiny-seq2seq``: builtin conditional generator over the tuple-text format
- ``mbert`` / ``xlm-r`` / ``mt5``: HuggingFace-backed fine-tuning, available
  when torch + transformers and the pretrained weights are installed

Learning-rate defaults per family: 5e-5 (mbert), 2e-5 (xlm-r), 3e-4 (mt5);
builtin models use unit-scale rates suited to their one-hot features. Batch
size defaults to 16 everywhere. Hyperparams may carry ``epoch_grid`` plus a
``dev_uri`` to select the epoch count on a dev split (off by default).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from laca.corpus import (
    LabeledExample,
    canonical_tuple_order,
    read_jsonl,
    tuple_to_json,
)
from laca.errors import DataError
from laca.evaluation import micro_f1

from .sampling import BuiltinSampler
from .seq2seq import train_seq2seq
from .service_errors import ServiceError
from .store import ModelStore
from .tokenclf import train_token_classifier

logger = logging.getLogger(__name__)

TOKENCLF_FAMILY = ("tiny-tokenclf", "mbert", "xlm-r")
SEQ2SEQ_FAMILY = ("tiny-seq2seq", "mt5")
HF_BACKBONES = ("mbert", "xlm-r", "mt5")

DEFAULT_LEARNING_RATE = {
    "mbert": 5e-5,
    "xlm-r": 2e-5,
    "mt5": 3e-4,
    "tiny-tokenclf": 8.0,  # one-hot features tolerate unit-scale steps
    "tiny-seq2seq": 2.0,
}
DEFAULT_EPOCHS = {
    "mbert": 20,
    "xlm-r": 20,
    "mt5": 20,
    "tiny-tokenclf": 30,
    "tiny-seq2seq": 150,
}
DEFAULT_BATCH_SIZE = 16


@dataclass(frozen=True)
class TrainSpec:
    backbone: str
    learning_rate: float
    epochs: int
    batch_size: int
    seed: int
    init_from: str | None = None
    epoch_grid: tuple[int, ...] = ()
    dev_uri: str | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_request(cls, backbone: str, hyperparams: dict, seed: int) -> "TrainSpec":
        if backbone not in DEFAULT_LEARNING_RATE:
            raise ServiceError(400, f"unknown backbone {backbone!r}")
        hp = dict(hyperparams or {})
        known = {"learning_rate", "epochs", "batch_size", "init_from", "epoch_grid", "dev_uri"}
        extra = {k: hp[k] for k in hp if k not in known}
        return cls(
            backbone=backbone,
            learning_rate=float(hp.get("learning_rate", DEFAULT_LEARNING_RATE[backbone])),
            epochs=int(hp.get("epochs", DEFAULT_EPOCHS[backbone])),
            batch_size=int(hp.get("batch_size", DEFAULT_BATCH_SIZE)),
            seed=int(seed),
            init_from=hp.get("init_from"),
            epoch_grid=tuple(hp.get("epoch_grid", ())),
            dev_uri=hp.get("dev_uri"),
            extra=extra,
        )


def _resolve_dataset(uri: str) -> Path:
    path = Path(uri[7:]) if uri.startswith("file://") else Path(uri)
    if not path.is_file():
        raise ServiceError(400, f"dataset_uri does not resolve to a file: {uri!r}")
    return path


class ModelService:
    """Implements train/predict/generate; raises ServiceError on bad input."""

    def __init__(self, model_dir: str | Path, generator=None, epoch_search: bool = False):
        self.store = ModelStore(model_dir)
        self.generator = generator or BuiltinSampler()
        self.epoch_search = epoch_search
        self.last_history: list[float] = []

    # -- dispatch --

    def handle(self, path: str, payload: dict) -> dict:
        if path == "/v1/train":
            return self.handle_train(payload)
        if path == "/v1/predict":
            return self.handle_predict(payload)
        if path == "/v1/generate":
            return self.handle_generate(payload)
        raise ServiceError(404, f"unknown endpoint {path!r}")

    # -- train --

    def handle_train(self, payload: dict) -> dict:
        for key in ("dataset_uri", "backbone", "seed"):
            if key not in payload:
                raise ServiceError(400, f"train request missing {key!r}")
        spec = TrainSpec.from_request(payload["backbone"], payload.get("hyperparams"), payload["seed"])
        dataset_path = _resolve_dataset(payload["dataset_uri"])
        try:
            examples = list(read_jsonl(dataset_path))
        except DataError as e:
            raise ServiceError(400, f"bad dataset: {e}") from e
        if not examples:
            raise ServiceError(400, "training dataset is empty")
        model_id = self.train(examples, spec)
        return {"model": model_id}

    def train(self, examples: list[LabeledExample], spec: TrainSpec) -> str:
        if spec.epoch_grid and spec.dev_uri and self.epoch_search:
            return self._train_with_epoch_search(examples, spec)
        return self._train_once(examples, spec, spec.epochs)

    def _train_once(self, examples: list[LabeledExample], spec: TrainSpec, epochs: int) -> str:
        if spec.backbone == "tiny-tokenclf":
            init = self.store.load(spec.init_from) if spec.init_from else None
            model, history = train_token_classifier(
                examples, spec.learning_rate, epochs, spec.batch_size, spec.seed, init_from=init
            )
            self.last_history = history
            return self.store.save_token_classifier(model, spec.backbone)
        if spec.backbone == "tiny-seq2seq":
            init = self.store.load(spec.init_from) if spec.init_from else None
            model, history = train_seq2seq(
                examples, spec.learning_rate, epochs, spec.batch_size, spec.seed, init_from=init
            )
            self.last_history = history
            return self.store.save_seq2seq(model, spec.backbone)
        if spec.backbone in HF_BACKBONES:
            from . import hf

            return hf.train(self.store, examples, spec, epochs)
        raise ServiceError(400, f"unknown backbone {spec.backbone!r}")

    def _train_with_epoch_search(self, examples: list[LabeledExample], spec: TrainSpec) -> str:
        """Pick the epoch count with the best dev micro-F1 (ties: fewer epochs)."""
        dev = list(read_jsonl(_resolve_dataset(spec.dev_uri)))
        if not dev:
            raise ServiceError(400, "dev split for epoch search is empty")
        best: tuple[float, int, str] | None = None
        for epochs in spec.epoch_grid:
            model_id = self._train_once(examples, spec, int(epochs))
            preds = [
                LabeledExample(
                    e.id, e.lang, e.text,
                    canonical_tuple_order(self._predict_tuples(model_id, e.text)), "predicted",
                )
                for e in dev
            ]
            f1 = micro_f1(dev, preds).f1
            logger.info("epoch search: %s epochs -> dev F1 %.4f", epochs, f1)
            if best is None or f1 > best[0] or (f1 == best[0] and epochs < best[1]):
                best = (f1, int(epochs), model_id)
        return best[2]

    # -- predict --

    def _predict_tuples(self, model_id: str, text: str):
        model = self.store.load(model_id)
        return model.predict_tuples(text)

    def handle_predict(self, payload: dict) -> dict:
        if not isinstance(payload.get("sentences"), list) or "model" not in payload:
            raise ServiceError(400, "predict request needs 'model' and 'sentences'")
        model = self.store.load(payload["model"])
        predictions = []
        for sent in payload["sentences"]:
            if not isinstance(sent, dict) or "id" not in sent or "text" not in sent:
                raise ServiceError(400, f"bad sentence entry: {sent!r}")
            tuples = canonical_tuple_order(model.predict_tuples(sent["text"]))
            predictions.append({"id": sent["id"], "tuples": [tuple_to_json(t) for t in tuples]})
        return {"predictions": predictions}

    # -- generate --

    def handle_generate(self, payload: dict) -> dict:
        if not isinstance(payload.get("prompt"), str):
            raise ServiceError(400, "generate request needs a string 'prompt'")
        sampling = payload.get("sampling") or {}
        stop = payload.get("stop") or []
        text = self.generator.complete(payload["prompt"], sampling, list(stop), payload.get("seed"))
        return {"text": text}
