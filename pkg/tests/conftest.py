from __future__ import annotations

import json
from pathlib import Path

import pytest

from rankaudit.domain import CohortDataset

from .helpers import make_item

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def pair():
    a = make_item("h1", (("q1", "yes"), ("q2", "none")), th="low")
    b = make_item("h2", (("q1", "no"), ("q2", "two")), th="high")
    return a, b


@pytest.fixture
def small_cohort():
    items = [make_item(f"h{k}", (("q1", "yes" if k % 2 else "no"),), th=("low", "medium", "high")[k % 3]) for k in range(6)]
    return CohortDataset("c", tuple(items), ("q1",))


@pytest.fixture(scope="session")
def transcript_cases():
    with (FIXTURES / "transcripts.jsonl").open() as fh:
        return [json.loads(line) for line in fh if line.strip()]
