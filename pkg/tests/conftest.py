import contextlib
import re
import time

import pytest

_CRITERIA = {}


class CriterionRecorder:
    """Records a pass/fail line per acceptance criterion for the terminal summary."""

    @contextlib.contextmanager
    def check(self, number, title):
        t0 = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            detail = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
            _CRITERIA[number] = ("FAIL", title, time.perf_counter() - t0, detail)
            raise
        _CRITERIA[number] = ("PASS", title, time.perf_counter() - t0, "")


@pytest.fixture(scope="session")
def criterion():
    return CriterionRecorder()


def _order(key):
    num, rest = re.fullmatch(r"(\d+)(.*)", key).groups()
    return int(num), rest


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA, key=_order):
        status, title, elapsed, detail = _CRITERIA[number]
        line = f"criterion {number:>3}: {status}  {title}  ({elapsed:.2f} s)"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
