ACCEPTANCE: dict = {}


def record(number: int, ok: bool, detail: str) -> None:
    """Store a criterion outcome and echo it immediately."""
    ACCEPTANCE[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
