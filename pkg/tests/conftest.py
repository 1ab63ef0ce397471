import re

CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = CRITERION.search(getattr(rep, "nodeid", ""))
            if m is None:
                continue
            if outcome == "skipped":
                reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else ""
                verdict = f"SKIP ({reason.removeprefix('Skipped: ')})"
            else:
                verdict = "PASS" if outcome == "passed" else "FAIL"
            lines.append((int(m.group(1)), m.group(2).replace("_", " "), verdict))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, verdict in sorted(lines):
        terminalreporter.write_line(f"criterion {num} ({name}): {verdict}")
