"""Acceptance gate: the ten numbered criteria, one test and one line each."""

from __future__ import annotations

import pytest

from mcfs.acceptance import CRITERIA


@pytest.mark.parametrize(
    "number,title,check",
    CRITERIA,
    ids=[f"criterion_{number:02d}" for number, _, _ in CRITERIA],
)
def test_criterion(number, title, check):
    try:
        detail = check()
    except Exception as exc:
        print(f"FAIL criterion {number}: {title} -- {exc}")
        raise
    print(f"PASS criterion {number}: {title} -- {detail}")
