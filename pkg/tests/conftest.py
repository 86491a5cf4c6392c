import hypothesis
import numpy as np
import pytest

from msbls.datasets import desk_dataset

hypothesis.settings.register_profile(
    "default", max_examples=40, deadline=None
)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def desk_data():
    """Desk-scale train/test pair shared by the experiment-level tests.

    Real IDX files are used when MSBLS_DATA_DIR points at them; otherwise the
    deterministic synthetic stand-in is generated once per session.
    """
    return desk_dataset(train_n=10000, test_n=2000)


@pytest.fixture(scope="session")
def small_desk_data():
    """A lighter pair for tests that only need realistic shapes."""
    return desk_dataset(train_n=1500, test_n=400)


def pytest_report_header(config):
    train, _ = desk_dataset(train_n=10, test_n=2)
    return f"desk dataset source: {train.name}"
