import pytest

from negcon.synthetic import make_suite
from negcon.text import Vocabulary

EXAMPLE_PIECES = ["▁deco", "ding", "▁de", "co", "▁be", "am", "▁search", "▁útvar", "ového", "▁ú", "t", "var", "▁„"]


@pytest.fixture(scope="session")
def example_vocab():
    return Vocabulary(EXAMPLE_PIECES)


@pytest.fixture(scope="session")
def small_suite():
    return make_suite(n_sentences=40, n_concepts=20, seed=3)


_criteria: dict[int, tuple[str, bool, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.failed:
        detail = (detail + "; " if detail else "") + str(call.excinfo.value).splitlines()[0][:200]
    _criteria[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_criteria):
        title, passed, detail = _criteria[number]
        line = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
