"""Acceptance criteria 1-8, one PASS/FAIL line each.

Each criterion runs its own independent oracles (closed forms, contour
integrals, direct enumeration) inside ``quasiloc.suites`` and enforces its
runtime limit. Lines are printed as they complete and again in the summary.
"""

import pytest

from quasiloc.suites import CRITERIA, run_criterion

LINES = {}


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    r = run_criterion(number)
    LINES[number] = r.line()
    with capsys.disabled():
        print("\n" + r.line(), flush=True)
    assert r.passed, r.line()
