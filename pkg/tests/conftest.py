import re

import pytest

from taxledger.crypto import setup_group


@pytest.fixture(scope="session")
def params():
    return setup_group()


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" and outcome != "error":
                continue
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", rep.nodeid)
            if m:
                status = "PASS" if outcome == "passed" else "FAIL"
                lines.append((int(m.group(1)), f"criterion {int(m.group(1)):2d} {status}  {m.group(2)}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
