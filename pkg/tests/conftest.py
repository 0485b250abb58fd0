from __future__ import annotations

import pytest

from cskb_distill.core import parse_triple_file
from cskb_distill.data import mini_cskb_path


@pytest.fixture(scope="session")
def mini_cskb_entries():
    with open(mini_cskb_path(), "rb") as fh:
        entries, errors = parse_triple_file(fh, "tsv")
    assert not errors
    return entries


@pytest.fixture(scope="session")
def mini_cskb_seeds(mini_cskb_entries):
    seeds = [(triple, marked) for triple, marked in mini_cskb_entries if marked is not None]
    assert len(seeds) == len(mini_cskb_entries)
    return seeds
