import pytest

from factify.embedding import fresh_registry


@pytest.fixture
def registry():
    """Isolated backend registry so encoder call counters start at zero."""
    return fresh_registry()
