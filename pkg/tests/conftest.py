import pytest

from labloop.config import Config
from labloop.gateway import Gateway, MockChatProvider, MockEmbeddingProvider, MockScript
from labloop.session import create_session


@pytest.fixture
def config(tmp_path):
    root = tmp_path / "out"
    root.mkdir()
    return Config(output_directory_root=str(root))


@pytest.fixture
def session(config):
    return create_session(config)


@pytest.fixture
def gateway(session):
    return Gateway(chat=MockChatProvider(), embedder=MockEmbeddingProvider(), session=session)


@pytest.fixture
def bare_gateway():
    """Gateway with no session attached (no logging side effects)."""
    return Gateway(chat=MockChatProvider(), embedder=MockEmbeddingProvider())


def script_gateway(session=None, entries=()):
    """Gateway whose mock chat replays the given (matcher, response) entries."""
    return Gateway(chat=MockChatProvider(script=MockScript(list(entries))),
                   embedder=MockEmbeddingProvider(), session=session)
