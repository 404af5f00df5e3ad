REPORT = []


def record(number, passed, detail=""):
    status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
    line = f"criterion {number:>2}: {status}  {detail}".rstrip()
    REPORT.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
