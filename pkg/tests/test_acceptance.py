"""Acceptance battery: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (lines are printed
even under capture) or as a script: ``python tests/test_acceptance.py``.
"""
import sys

import pytest

from degenlab.suite import CRITERIA, format_line

UNATTAINABLE = {
    2: "x1^2 - x2^2 is an exact discrete solution of the five-point scheme, so both "
       "errors are round-off and their ratio cannot be 4; see the control field in the detail line",
}


def _params():
    for crit in CRITERIA:
        marks = []
        if crit.number in UNATTAINABLE:
            marks.append(pytest.mark.xfail(reason=UNATTAINABLE[crit.number], strict=True))
        yield pytest.param(crit, id=f"criterion_{crit.number:02d}_{crit.__name__[10:]}", marks=marks)


@pytest.mark.parametrize("criterion", list(_params()))
def test_criterion(criterion, capsys):
    res = criterion()
    with capsys.disabled():
        print("\n" + format_line(res))
    assert res.passed, res.detail


if __name__ == "__main__":
    from degenlab.suite import run_suite

    results = run_suite()
    expected = all(r.passed or r.number in UNATTAINABLE for r in results)
    sys.exit(0 if expected else 1)
