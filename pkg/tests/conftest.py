import pytest

from expander_lab.grpenum import enumerate_group, standard_sl2


@pytest.fixture(scope="session")
def S():
    return standard_sl2()


@pytest.fixture(scope="session")
def sl2_table(S):
    cache = {}

    def get(q):
        if q not in cache:
            cache[q] = enumerate_group(S, q)
        return cache[q]

    return get


# one pass/fail line per acceptance criterion, printed at the end of the run
ACCEPTANCE_RESULTS: dict = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
