"""The ten acceptance criteria, one test each.

Each test prints a ``[PASS]``/``[FAIL]`` line with its wall time and limit.
The same lines come from ``python tests/test_acceptance.py`` or
``qotlab suite run``.
"""
from __future__ import annotations

import sys

import pytest

from qotlab.suite import CRITERIA, run_criterion

ROOT_SEED = 42
LINES: list = []


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    res = run_criterion(number, ROOT_SEED)
    line = res.line()
    LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    failed = [c.as_dict() for c in res.checks if not c.passed]
    assert res.within_time, f"{res.elapsed:.1f}s exceeds the {res.limit}s limit"
    assert not failed, failed


def main() -> int:
    ok = True
    for k in sorted(CRITERIA):
        res = run_criterion(k, ROOT_SEED)
        print(res.line(), flush=True)
        ok &= res.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
