import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def write_csv(path, text):
    path.write_text(text)
    return path


_VERDICTS = {}


@pytest.fixture
def note(request):
    """Attach a measured detail to the criterion line of the running test."""
    def add(text):
        request.node.user_properties.append(("detail", text))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    n, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    _VERDICTS[n] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_VERDICTS):
        title, status, detail = _VERDICTS[n]
        line = f"{status} criterion {n:2d}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
