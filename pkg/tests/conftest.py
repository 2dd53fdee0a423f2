from __future__ import annotations

import pytest

from vlm_harness.mockserver import parse_fixtures, serve_mock


@pytest.fixture
def mock_server():
    """Start mock backends from fixture text; stops them all afterwards."""
    handles = []

    def start(fixtures: str):
        handle = serve_mock(parse_fixtures(fixtures), port=0)
        handles.append(handle)
        return handle

    yield start
    for handle in handles:
        handle.stop()
