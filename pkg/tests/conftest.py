"""Suite-wide pytest wiring: the acceptance tests (test_acceptance.py) are
grouped into numbered criteria; after the run, one PASS/FAIL line is printed
per criterion that executed."""

import re
from collections import defaultdict

_LABELS = {
    "c01": "move generation matches reference node counts",
    "c02": "miniature games replay to their recorded mates",
    "c03": "FEN decode/encode round-trips byte-exactly on random positions",
    "c04": "ingest, position dedup, and book filtering match brute force",
    "c05": "evaluation runs are exactly-once across pools, reruns, and kills",
    "c06": "evaluation records rebuild exactly from their own transcripts",
    "c07": "cost arithmetic matches the anchor scenario",
    "c08": "statistics operations equal naive tallies on a synthetic corpus",
    "c09": "corpus trends hold at desk scale within the time budget",
    "c10": "pipeline reruns produce byte-identical outputs",
}
_PATTERN = re.compile(r"test_acceptance\.py::test_(c\d{2})_")
_outcomes: dict[str, set[str]] = defaultdict(set)


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    key = m.group(1)
    if report.failed:
        _outcomes[key].add("failed")
    elif report.skipped:
        _outcomes[key].add("skipped")
    elif report.when == "call":
        _outcomes[key].add("passed")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_outcomes):
        states = _outcomes[key]
        if "failed" in states:
            verdict = "FAIL"
        elif "passed" in states:
            verdict = "PASS"
        else:
            verdict = "SKIP"
        label = _LABELS.get(key, "")
        terminalreporter.write_line(f"{key.upper()} {verdict}  {label}")
