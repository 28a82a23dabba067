from __future__ import annotations

import pytest

from helpers import build_example_tree


@pytest.fixture
def example_tree():
    return build_example_tree()
