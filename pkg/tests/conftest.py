import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA_DIR = Path(__file__).parent.parent / "src" / "instrumentkg" / "data"
FIXTURES_DIR = DATA_DIR / "fixtures"
QUERIES_DIR = DATA_DIR / "queries"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def queries_dir() -> Path:
    return QUERIES_DIR


@pytest.fixture()
def demo_config(tmp_path):
    from instrumentkg.pipeline import load_config

    return load_config(DATA_DIR / "demo_config.json", tmp_path / "out")
