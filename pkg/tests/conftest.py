"""Shared pytest plumbing.

The acceptance tests register one verdict per numbered criterion through
record_criterion; the terminal summary then prints a PASS/FAIL line for each,
whether or not the owning test raised."""

_criteria: dict[int, tuple[str, bool]] = {}


def record_criterion(number: int, description: str, passed: bool) -> None:
    _criteria[number] = (description, bool(passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        description, passed = _criteria[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} [{verdict}] {description}")
