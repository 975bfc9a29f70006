from __future__ import annotations


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: one of the twelve acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number])
