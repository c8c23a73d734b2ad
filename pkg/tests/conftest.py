import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from almosttwin.prime_sets import cached_factor_table  # noqa: E402

TABLE_LIMIT = 6 * 10**6 + 64
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return os.environ.get("ALMOSTTWIN_CACHE") or str(tmp_path_factory.mktemp("spf_cache"))


@pytest.fixture(scope="session")
def table(cache_dir):
    return cached_factor_table(TABLE_LIMIT, cache_dir)


@pytest.fixture(scope="session")
def small_table():
    return cached_factor_table(2 * 10**5)


@pytest.fixture
def report():
    """Record one acceptance line: report(number, passed, detail)."""

    def add(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
