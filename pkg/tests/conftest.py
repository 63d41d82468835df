"""Collects one pass/fail line per acceptance criterion and prints them at the end."""
import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records the verdict for criterion ``n``."""
    def record(n: int, ok, detail: str = ""):
        verdict = ok if isinstance(ok, str) else "PASS" if ok else "FAIL"
        ACCEPTANCE[n] = (verdict, detail)
        line = f"criterion {n:2d}: {ACCEPTANCE[n][0]}  {detail}"
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        verdict, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {verdict:4s}  {detail}")
