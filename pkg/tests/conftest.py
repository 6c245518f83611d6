import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from attnphrase.corpus import StopwordList, document_from_text
from helpers import make_doc  # noqa: F401  (re-exported for fixtures)


@pytest.fixture
def stopwords():
    return StopwordList(["the", "of", "a", "an", "and", "is", "it", "we", "in", "to"])


@pytest.fixture
def heat_island_doc():
    text = (
        "The heat island effect raises urban temperatures. "
        "Researchers measured the heat island effect in several cities."
    )
    return document_from_text("heat1", text)
