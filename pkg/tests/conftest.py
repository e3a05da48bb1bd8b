import sys
import zlib
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        details = "; ".join(str(v) for k, v in item.user_properties if k == "measured")
        _CRITERIA.setdefault(marker.args[0], (marker.args[1], []))[1].append((rep.outcome, details))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_CRITERIA):
        title, runs = _CRITERIA[num]
        tag = "PASS" if all(outcome == "passed" for outcome, _ in runs) else "FAIL"
        line = f"[{tag}] criterion {num}: {title}"
        details = " | ".join(d for _, d in runs if d)
        if details:
            line += f" -- {details}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng(request):
    return np.random.default_rng(zlib.crc32(request.node.name.encode()))
