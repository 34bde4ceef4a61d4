import pytest

_RESULTS = pytest.StashKey[dict]()


class CriterionLog:
    """Collects named checks for one acceptance criterion and records a pass/fail line."""

    def __init__(self, store, number, title):
        self.store, self.number, self.title = store, number, title
        self.checks = []

    def check(self, label, ok, detail=""):
        self.checks.append((label, bool(ok), detail))
        return bool(ok)

    def finish(self):
        failed = [c for c in self.checks if not c[1]]
        detail = "; ".join(f"{lab}: {d}" if d else lab for lab, _, d in self.checks)
        self.store[self.number] = (self.title, not failed, detail)
        print(f"criterion {self.number} {'PASS' if not failed else 'FAIL'} {self.title} | {detail}")
        assert not failed, "failed checks: " + ", ".join(c[0] for c in failed)


@pytest.fixture
def criterion(request):
    store = request.config.stash.setdefault(_RESULTS, {})
    return lambda number, title: CriterionLog(store, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        title, ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {title} ({detail})")
