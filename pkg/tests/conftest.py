"""Pytest fixtures over the shared test data in absa_fixtures."""

import pytest

from absa_fixtures import FIXTURE_XML


@pytest.fixture
def fixture_xml() -> bytes:
    return FIXTURE_XML


@pytest.fixture
def fixture_dataset():
    from laca.corpus import parse_semeval_xml

    return parse_semeval_xml(FIXTURE_XML, "en").dataset
