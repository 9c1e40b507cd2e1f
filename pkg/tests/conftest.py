import sys


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion, label, ok, detail in results:
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {criterion} ({label}): {detail}")
    tr.write_line("")
    verdict = {}
    for criterion, _, ok, _ in results:
        verdict[criterion] = verdict.get(criterion, True) and ok
    for criterion in sorted(verdict):
        tr.write_line(f"{'PASS' if verdict[criterion] else 'FAIL'} criterion {criterion}")
