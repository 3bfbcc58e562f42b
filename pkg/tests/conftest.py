import pytest

# (criterion number, verdict, detail) recorded by the acceptance tests
ACCEPTANCE = []


def record(number, ok, detail):
    ACCEPTANCE.append((number, bool(ok), detail))
    print(f"[#{number}] {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture
def report():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"#{number:<2} {'PASS' if ok else 'FAIL'}  {detail}")
