import pytest

from lobatto_dae.tableau import lobatto_pair

_CRITERIA: dict[int, dict] = {}


class CriterionRecorder:
    """Collects sub-check outcomes for one acceptance criterion."""

    def __init__(self, number: int, title: str):
        self.entry = _CRITERIA.setdefault(number, {"title": title, "checks": []})

    def check(self, label: str, ok: bool, detail: str = "") -> bool:
        self.entry["checks"].append((label, bool(ok), detail))
        return bool(ok)


@pytest.fixture
def criterion():
    return CriterionRecorder


@pytest.fixture(scope="session", params=[2, 3, 4, 5], ids=lambda s: f"s{s}")
def pair(request):
    return lobatto_pair(request.param)


@pytest.fixture(scope="session")
def pairs():
    return {s: lobatto_pair(s) for s in range(2, 6)}


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        checks = entry["checks"]
        ok = bool(checks) and all(c[1] for c in checks)
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {entry['title']}")
        for label, passed, detail in checks:
            if not passed:
                tr.write_line(f"    FAIL {label}" + (f": {detail}" if detail else ""))
