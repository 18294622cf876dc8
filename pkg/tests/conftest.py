from pathlib import Path

import pytest

PRESETS = Path(__file__).resolve().parents[1] / "src" / "decoybench" / "presets"


@pytest.fixture
def presets() -> Path:
    return PRESETS
