import os

import pytest

from sts21td.assembler import run_pipeline
from sts21td.catalog import Sts9Family, enumerate_td36_main_classes

EXTENDED = os.environ.get("STS21TD_EXTENDED") == "1"


def pytest_collection_modifyitems(config, items):
    if EXTENDED:
        return
    skip = pytest.mark.skip(reason="extended run; set STS21TD_EXTENDED=1")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def td36():
    return enumerate_td36_main_classes()


@pytest.fixture(scope="session")
def sts9_family():
    return Sts9Family.build(range(9))


@pytest.fixture(scope="session")
def tau7_run(td36):
    return run_pipeline("tau_eq_7", check_lemmas=True, catalog=td36)


@pytest.fixture(scope="session")
def tau3_run(td36):
    return run_pipeline("tau_ge_3", check_lemmas=True, catalog=td36)


@pytest.fixture(scope="session")
def full_run(td36):
    ck = os.environ.get("STS21TD_CHECKPOINT")
    return run_pipeline("full", thread_count=os.cpu_count() or 1, checkpoint_dir=ck, catalog=td36,
                        progress=lambda m: print(m, flush=True))
