import pytest

from qdtune.datasets import gen_records
from qdtune.training import TASKS, train_models

QUICK_COUNT = 300
QUICK_SEED = 11


@pytest.fixture(scope="session")
def quick_corpora():
    """Small corpora for tests that need trained models but not their accuracy."""
    return {t: gen_records(t, QUICK_COUNT, QUICK_SEED) for t in TASKS}


@pytest.fixture(scope="session")
def quick_models(quick_corpora):
    return train_models(quick_corpora, evaluate=False)["models"]
