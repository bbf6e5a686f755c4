import pytest

from text2sign.corpus import default_corpus_path, load_corpus


@pytest.fixture(scope="session")
def shipped_corpus():
    return load_corpus(default_corpus_path())
