import numpy as np
import pytest

from gvfsim.field import SpatialField
from gvfsim.geometry import builtin_path, lift_to_surfaces


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def circle_field():
    return SpatialField(lift_to_surfaces(builtin_path("circle")), 1.0, 1.0)


@pytest.fixture
def lemniscate_field():
    return SpatialField(lift_to_surfaces(builtin_path("lemniscate")), 1.0, 1.0)


_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    failed = call.excinfo is not None and call.when in ("setup", "call")
    if call.when == "call" or failed:
        prev = _CRITERIA.get(number, (title, True))[1]
        _CRITERIA[number] = (title, prev and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}")
