"""Acceptance suite: runs every criterion once (plus a repeat for determinism)."""
from __future__ import annotations

import json

import pytest

from gpe_norm.verify import _jsonable, verify_all

CRITERIA = list(range(1, 11))


@pytest.fixture(scope="module")
def results():
    return {r.id: r for r in verify_all(seed=0)}


@pytest.mark.parametrize("cid", CRITERIA)
def test_criterion(results, cid, capsys):
    r = results[cid]
    with capsys.disabled():
        print(f"\n{r.line()}")
    assert r.passed, json.dumps(_jsonable(r.details), sort_keys=True)[:4000]
