import os
import re

from hypothesis import settings

import helpers

settings.register_profile("default", deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" or "test_acceptance.py::" not in rep.nodeid:
                continue
            name = rep.nodeid.split("::")[-1]
            m = re.match(r"test_criterion_(\d+)_", name)
            if m:
                detail = helpers.ACCEPTANCE.get(int(m.group(1)), "")
                lines.append((int(m.group(1)), outcome, name, detail))
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, outcome, name, detail in sorted(lines):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} {verdict}  {name}  {detail}")
