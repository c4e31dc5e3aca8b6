"""The HuggingFace-backed path is optional: without pretrained weights it
must fail with a clean 501, never a crash. Forced offline so that running
this suite can never trigger a model download."""

import random

import pytest

from laca_server.service import ModelService, TrainSpec
from laca_server.service_errors import ServiceError

from toy_data import toy_corpus


def test_hf_backbone_unavailable_is_501(tmp_path, monkeypatch):
    monkeypatch.setenv("HF_HUB_OFFLINE", "1")
    monkeypatch.setenv("TRANSFORMERS_OFFLINE", "1")
    pytest.importorskip("transformers")
    from laca_server import hf

    service = ModelService(tmp_path / "models")
    spec = TrainSpec.from_request("mbert", {"epochs": 1}, 1)
    try:
        model_id = hf.train(service.store, toy_corpus(3, random.Random(0)), spec, 1)
    except ServiceError as e:
        assert e.status == 501
    else:
        pytest.skip(f"local pretrained weights available; trained {model_id}")
