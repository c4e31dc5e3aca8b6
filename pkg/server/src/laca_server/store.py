"""Persistence for trained models: content-addressed ids, npz + json meta."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .seq2seq import Seq2Seq
from .service_errors import ServiceError
from .tokenclf import TokenClassifier


def _content_id(family: str, arrays: dict, meta: dict) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(meta, sort_keys=True, ensure_ascii=False).encode())
    for name in sorted(arrays):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arrays[name]).tobytes())
    return f"{family}-{h.hexdigest()[:12]}"


class ModelStore:
    def __init__(self, model_dir: str | Path):
        self.model_dir = Path(model_dir)
        self.model_dir.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, object] = {}

    def save_token_classifier(self, model: TokenClassifier, backbone: str) -> str:
        meta = {"family": "tokenclf", "backbone": backbone, "vocab": model.vocab}
        return self._save(model, model.to_arrays(), meta)

    def save_seq2seq(self, model: Seq2Seq, backbone: str) -> str:
        meta = {
            "family": "seq2seq",
            "backbone": backbone,
            "in_vocab": model.in_vocab,
            "out_vocab": model.out_vocab,
        }
        return self._save(model, model.to_arrays(), meta)

    def _save(self, model, arrays: dict, meta: dict) -> str:
        model_id = _content_id(meta["family"], arrays, meta)
        npz_path = self.model_dir / f"{model_id}.npz"
        if not npz_path.exists():
            np.savez(npz_path, **arrays)
            (self.model_dir / f"{model_id}.json").write_text(
                json.dumps(meta, ensure_ascii=False), encoding="utf-8"
            )
        self._cache[model_id] = model
        return model_id

    def load(self, model_id: str):
        if model_id in self._cache:
            return self._cache[model_id]
        meta_path = self.model_dir / f"{model_id}.json"
        npz_path = self.model_dir / f"{model_id}.npz"
        if not meta_path.exists() or not npz_path.exists():
            if (self.model_dir / model_id).is_dir():  # HF checkpoint directory
                from . import hf

                model = hf.load(self, model_id)
                self._cache[model_id] = model
                return model
            raise ServiceError(404, f"unknown model {model_id!r}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        arrays = np.load(npz_path)
        if meta["family"] == "tokenclf":
            model = TokenClassifier(meta["vocab"], arrays["weights"], arrays["bias"])
        elif meta["family"] == "seq2seq":
            model = Seq2Seq(
                meta["in_vocab"],
                meta["out_vocab"],
                arrays["embeddings"],
                arrays["proj"],
                arrays["copy_table"],
                arrays["transitions"],
                arrays["transitions2"],
                arrays["positions"],
                arrays["bias"],
            )
        else:
            raise ServiceError(500, f"corrupt model metadata for {model_id!r}")
        self._cache[model_id] = model
        return model
