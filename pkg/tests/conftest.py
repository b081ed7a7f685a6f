import numpy as np
import pytest

from sbf.core import COCO17, Resolution, single_person


@pytest.fixture
def res64():
    return Resolution(256, 256)


@pytest.fixture
def coco_frame():
    """One in-bounds COCO-17 person on a 256x256 source frame."""
    rng = np.random.default_rng(11)
    kps = np.column_stack([rng.uniform(60, 200, 17), rng.uniform(60, 200, 17), np.ones(17)])
    return single_person(kps)


@pytest.fixture
def coco_graph():
    return COCO17


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
