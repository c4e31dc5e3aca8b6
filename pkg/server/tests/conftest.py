"""Pytest fixtures: toy corpus and a service over a tmp model dir."""

import random

import pytest

from laca_server.service import ModelService

from toy_data import toy_corpus


@pytest.fixture
def corpus10():
    return toy_corpus(10, random.Random(1))


@pytest.fixture
def service(tmp_path) -> ModelService:
    return ModelService(tmp_path / "models")


@pytest.fixture
def corpus_path(tmp_path, corpus10):
    from laca.corpus import write_jsonl

    path = tmp_path / "toy.jsonl"
    write_jsonl(corpus10, path)
    return path
