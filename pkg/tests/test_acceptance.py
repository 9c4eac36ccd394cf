"""The eleven acceptance criteria at their stated tolerances.

Each test prints (and records) a single PASS/FAIL line; the lines are
repeated together at the end of the pytest run.
"""

import pytest

from kinetic_fp.acceptance import CRITERIA, run_criterion


@pytest.mark.slow
@pytest.mark.parametrize("key", list(CRITERIA), ids=[f"criterion_{k}" for k in CRITERIA])
def test_acceptance_criterion(key, record_property):
    res = run_criterion(key)
    line = res.line()
    print(line)
    record_property("acceptance", line)
    failed = {k: v for k, v in res.checks.items() if not v}
    assert res.passed, f"{line}\nfailed checks: {failed}\ndetails: {res.details}"
