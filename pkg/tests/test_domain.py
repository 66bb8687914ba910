from __future__ import annotations

import json

import pytest

from rankaudit.domain import (
    NO_ANSWER,
    CohortDataset,
    CohortError,
    InfoCondition,
    ItemProfile,
    RiskLabel,
    dump_cohort,
    load_cohort,
    render_profile_block,
)

from .helpers import make_item


def _write(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def _row(item_id, answers, **kw):
    return {
        "item_id": item_id,
        "cohort": "family",
        "answers": [{"question_id": q, "question_text": q.upper(), "answer": a} for q, a in answers],
        **kw,
    }


def test_load_keeps_file_order_and_skips_blank_lines(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text(json.dumps(_row("b", [("q", "1")])) + "\n\n" + json.dumps(_row("a", [("q", "2")])) + "\n")
    d = load_cohort(p)
    assert d.item_ids == ("b", "a")
    assert d.cohort_id == "c"


def test_missing_answer_becomes_no_answer(tmp_path):
    p = _write(tmp_path / "c.jsonl", [_row("a", [("q", "x")]), _row("b", [("q", "")])])
    d = load_cohort(p)
    assert d.item("b").answers[0].answer == NO_ANSWER
    row = _row("c", [("q", "x")])
    row["answers"][0]["answer"] = None
    assert ItemProfile.from_dict(row).answers[0].answer == NO_ANSWER


def test_schema_mismatch_names_line_and_question(tmp_path):
    p = _write(tmp_path / "c.jsonl", [_row("a", [("q1", "x"), ("q2", "y")]), _row("b", [("q1", "x")])])
    with pytest.raises(CohortError, match=r"line 2.*'q2'"):
        load_cohort(p)


def test_duplicate_ids_and_single_item_rejected(tmp_path):
    with pytest.raises(CohortError, match="duplicate"):
        load_cohort(_write(tmp_path / "d.jsonl", [_row("a", [("q", "x")]), _row("a", [("q", "y")])]))
    with pytest.raises(CohortError, match="at least 2"):
        load_cohort(_write(tmp_path / "s.jsonl", [_row("a", [("q", "x")])]))


def test_malformed_line_reported(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text(json.dumps(_row("a", [("q", "x")])) + "\n{not json\n")
    with pytest.raises(CohortError, match="line 2"):
        load_cohort(p)


def test_nonfinite_baseline_rejected():
    with pytest.raises(CohortError, match="finite"):
        make_item("a", baseline_scores={"vi": float("nan")})


def test_round_trip(tmp_path):
    items = (make_item("a", baseline_scores={"vi": 3.0}), make_item("b", received_intensive_service=True))
    d = CohortDataset("c", items, ("q1",))
    dump_cohort(d, tmp_path / "out.jsonl")
    back = load_cohort(tmp_path / "out.jsonl", cohort_id="c")
    assert back == d


def test_risk_labels_order():
    assert [r.severity for r in RiskLabel] == [0, 1, 2]
    assert RiskLabel("high") is RiskLabel.HIGH


def test_render_conditions():
    item = make_item("a", (("q1", "yes"), ("q2", "no")), th="low", es="high")
    plain = render_profile_block(item, InfoCondition.NO_PREDICTION)
    assert plain == "Question q1: yes\nQuestion q2: no"
    only = render_profile_block(item, "only-prediction")
    assert "Question" not in only
    assert only.splitlines() == [
        "Risk of returning to homelessness within two years if given ES: high",
        "Risk of returning to homelessness within two years if given TH: low",
    ]
    shared = render_profile_block(item, InfoCondition.SHARED_PREDICTION)
    assert shared.startswith(plain) and shared.endswith(only)
    assert render_profile_block(item, InfoCondition.PREDICTION_FIRST) == plain


def test_render_requires_risk_when_shown():
    item = ItemProfile("a", "youth", ())
    with pytest.raises(CohortError, match="risk"):
        render_profile_block(item, InfoCondition.ONLY_PREDICTION)
    assert render_profile_block(item, InfoCondition.NO_PREDICTION) == ""


def test_bundled_vignettes_load():
    from importlib import resources

    d = load_cohort(resources.files("rankaudit") / "data" / "vignettes.jsonl")
    assert len(d.items) == 20
    assert all(it.risk and set(it.risk) == {"TH", "ES"} for it in d.items)
