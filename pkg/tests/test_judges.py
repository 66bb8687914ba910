from __future__ import annotations

import logging

import httpx
import pytest

from rankaudit.domain import InfoCondition
from rankaudit.judges import (
    LEFT_LABEL,
    BtlJudge,
    ChatCompletionJudge,
    ComparisonTask,
    DistillerUnavailableError,
    EndpointError,
    JudgeEndpointConfig,
    JudgeRequest,
    JudgeVerdict,
    Orientation,
    PromptSpec,
    ScriptedJudge,
    UnresolvedComparisonError,
    classify_orientation,
    coin_flip,
    distill_verdict,
    elicit_comparison,
    elicit_many,
    final_sentence,
    load_prompt_spec,
    parse_verdict,
    prefer_lower_risk,
)
from rankaudit.synthetic import BtlOracle

from .helpers import make_item

IDS = ("x1", "x2")


def _expected_id(case):
    return {"A": IDS[0], "B": IDS[1], None: None}[case["expected"]]


@pytest.fixture
def spec():
    return load_prompt_spec()


@pytest.fixture
def xpair():
    return make_item("x1", th="low"), make_item("x2", th="high")


# ---- parsing -------------------------------------------------------------


def test_corpus_shape(transcript_cases):
    cats = {c["category"] for c in transcript_cases}
    assert len(transcript_cases) >= 30
    assert cats == {"clean", "verbose", "ambiguous", "refusal"}


def test_no_wrong_winner_on_corpus(transcript_cases):
    for case in transcript_cases:
        got = parse_verdict(case["text"], *IDS)
        if case["category"] == "clean":
            assert got == _expected_id(case), case["id"]
        else:
            # anything but a clean answer may only fail to parse, never pick the wrong item
            assert got in (None, _expected_id(case)), case["id"]


def test_non_clean_cases_need_help(transcript_cases):
    for case in transcript_cases:
        if case["category"] != "clean":
            assert parse_verdict(case["text"], *IDS) is None, case["id"]


def test_raw_item_ids_are_recognized():
    assert parse_verdict("I would prioritize x2.", *IDS) == "x2"
    assert parse_verdict("x2", *IDS) == "x2"
    assert parse_verdict("My final answer: Household x1", *IDS) == "x1"
    assert parse_verdict("My final answer: x1", *IDS) == "x1"


@pytest.mark.parametrize(
    "text",
    ["", "I cannot choose.", "Household A or Household B, it is hard to say.",
     "I would not prioritize Household A.", "If forced, I would choose Household B."],
)
def test_unparseable(text):
    assert parse_verdict(text, *IDS) is None


def test_final_sentence_policy_matches_distiller_replies(transcript_cases):
    policy = final_sentence()
    for case in transcript_cases:
        if case["category"] != "clean":
            req = JudgeRequest("distill", PromptSpec("{{HOUSEHOLDS}}"), source_text=case["text"])
            assert policy(req) == case["distiller_reply"], case["id"]


def test_distill_verdict_requires_distiller():
    with pytest.raises(DistillerUnavailableError):
        distill_verdict("long text", *IDS, None)
    assert distill_verdict("x", *IDS, ScriptedJudge("Household B")) == "x2"


# ---- retry loop ------------------------------------------------------------


def test_verbose_fixtures_route_through_distiller_once(transcript_cases, xpair, spec):
    for case in transcript_cases:
        if case["category"] != "verbose":
            continue
        judge = ScriptedJudge(case["text"])
        distiller = ScriptedJudge(final_sentence())
        records = []
        v = elicit_comparison(judge, xpair, "no-prediction", spec, 0, distiller=distiller, sink=records.append)
        assert distiller.calls == 1, case["id"]
        assert judge.calls == 1
        assert v.winner_id == _expected_id(case) and v.distilled and v.retries == 0
        assert len(records) == 1 and records[0]["distill"]["response"] == case["distiller_reply"]


def test_clean_answers_skip_distiller(transcript_cases, xpair, spec):
    for case in transcript_cases:
        if case["category"] == "clean":
            distiller = ScriptedJudge(final_sentence())
            v = elicit_comparison(ScriptedJudge(case["text"]), xpair, "no-prediction", spec, 0, distiller=distiller)
            assert distiller.calls == 0 and v.winner_id == _expected_id(case)


@pytest.mark.parametrize("max_retries", [1, 3, 5])
def test_retry_loop_terminates(transcript_cases, xpair, spec, max_retries):
    refusals = [c["text"] for c in transcript_cases if c["category"] == "refusal"]
    for text in refusals:
        judge = ScriptedJudge(text)
        distiller = ScriptedJudge(final_sentence())
        records = []
        with pytest.raises(UnresolvedComparisonError) as info:
            elicit_comparison(judge, xpair, "no-prediction", spec, 0, max_retries=max_retries,
                              distiller=distiller, sink=records.append)
        assert judge.calls == max_retries
        assert len(records) == max_retries == len(info.value.transcripts)


def test_reprompt_recovers(xpair, spec):
    judge = ScriptedJudge(["I cannot decide.", "Household B"])
    v = elicit_comparison(judge, xpair, "no-prediction", spec, 3)
    assert (v.winner_id, v.retries, v.run_index) == ("x2", 1, 3)


def test_prediction_first_has_two_turns(xpair, spec):
    seen = []

    def script(req):
        seen.append(req)
        return "Noted." if req.turn == "prediction" else "Household A"

    records = []
    v = elicit_comparison(ScriptedJudge(script), xpair, "prediction-first", spec, 0, sink=records.append)
    assert [r.turn for r in seen] == ["prediction", "decision"]
    msgs = seen[1].messages
    assert [m["role"] for m in msgs[-3:]] == ["user", "assistant", "user"]
    assert msgs[-2]["content"] == "Noted."
    assert len(records[0]["exchanges"]) == 2 and v.winner_id == "x1"


def test_conditions_change_prompt_content(xpair, spec):
    no_pred = JudgeRequest("decision", spec.with_condition("no-prediction"), *xpair).messages[-1]["content"]
    with_pred = JudgeRequest("decision", spec.with_condition("only-prediction"), *xpair).messages[-1]["content"]
    assert no_pred != with_pred


def test_cross_cohort_pairs_rejected(spec):
    a, b = make_item("x1"), make_item("x2", cohort="family")
    with pytest.raises(ValueError):
        elicit_comparison(ScriptedJudge("Household A"), (a, b), "no-prediction", spec, 0)


def test_prompt_placeholder_validation(tmp_path):
    with pytest.raises(ValueError):
        PromptSpec("no marker here")
    with pytest.raises(ValueError):
        PromptSpec("{{HOUSEHOLDS}} twice {{HOUSEHOLDS}}")
    f = tmp_path / "p.txt"
    f.write_text("[system]\nbe brief\n[user]\nPick one.\n{{HOUSEHOLDS}}\n")
    s = load_prompt_spec(f)
    assert s.system_preamble == "be brief" and s.fill("X") == "Pick one.\nX"


def test_verdict_validation():
    with pytest.raises(ValueError):
        JudgeVerdict("a", "b", "c", InfoCondition.NO_PREDICTION, 0, "ref")
    v = JudgeVerdict("a", "b", "b", "shared-prediction", 2, "ref", 1, True)
    assert v.loser_id == "a" and JudgeVerdict.from_dict(v.to_dict()) == v


def test_classify_orientation():
    v = JudgeVerdict("a", "b", "a", "no-prediction", 0, "r")
    assert classify_orientation(v, "low", "high") is Orientation.OUTCOME
    assert classify_orientation(v, "high", "low") is Orientation.VULNERABILITY
    assert classify_orientation(v, "medium", "medium") is Orientation.INDETERMINATE
    with pytest.raises(ValueError):
        classify_orientation(v, None, "low")


# ---- batch ------------------------------------------------------------------


def _tasks(small_cohort, n=12):
    items = small_cohort.items
    return [ComparisonTask(f"t{k}", items[k % 6], items[(k + 1) % 6], InfoCondition.NO_PREDICTION, 0, k) for k in range(n)]


@pytest.mark.parametrize("workers", [1, 4])
def test_elicit_many_delivers_in_task_order(small_cohort, spec, workers):
    tasks = _tasks(small_cohort)
    seen = []
    outs = elicit_many(ScriptedJudge(coin_flip()), tasks, spec, max_workers=workers, on_outcome=lambda o: seen.append(o.task.key))
    assert seen == [t.key for t in tasks]
    assert [o.verdict.winner_id for o in outs] == [
        o.verdict.winner_id for o in elicit_many(ScriptedJudge(coin_flip()), tasks, spec)
    ]


def test_elicit_many_reports_unresolved(small_cohort, spec):
    outs = elicit_many(ScriptedJudge("no idea"), _tasks(small_cohort, 3), spec, max_retries=2)
    assert all(o.verdict is None and o.error is not None and len(o.records) == 2 for o in outs)


def test_lower_risk_policy(small_cohort, spec):
    a, b = small_cohort.items[0], small_cohort.items[2]  # low vs high TH risk
    v = elicit_comparison(ScriptedJudge(prefer_lower_risk()), (b, a), "no-prediction", spec, 0)
    assert v.winner_id == a.item_id


def test_btl_judge_frequencies(xpair, spec):
    judge = BtlJudge(BtlOracle({"x1": 3.0, "x2": 1.0}))
    wins = sum(
        elicit_comparison(judge, xpair, "no-prediction", spec, 0, seed=s).winner_id == "x1" for s in range(2000)
    )
    assert abs(wins / 2000 - 0.75) < 0.04
    clipped = BtlJudge(BtlOracle({"x1": 100.0, "x2": 1.0}), clip=(0.45, 0.55))
    wins = sum(
        elicit_comparison(clipped, xpair, "no-prediction", spec, 0, seed=s).winner_id == "x1" for s in range(2000)
    )
    assert abs(wins / 2000 - 0.55) < 0.04


# ---- HTTP endpoint ---------------------------------------------------------------


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def _ok(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def test_endpoint_request_shape(monkeypatch, xpair, spec):
    monkeypatch.setenv("RANKAUDIT_API_KEY", "sk-secret-123")
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = httpx.Response(200, content=request.content).json()
        return _ok("Household B")

    cfg = JudgeEndpointConfig(base_url="http://judge.test/", model_name="m1", temperature=0.7)
    judge = ChatCompletionJudge(cfg, client=_client(handler))
    v = elicit_comparison(judge, xpair, "no-prediction", spec, 0)
    assert v.winner_id == "x2"
    assert seen["url"] == "http://judge.test/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-secret-123"
    assert seen["body"]["model"] == "m1" and seen["body"]["temperature"] == 0.7
    assert seen["body"]["messages"][-1]["role"] == "user"


def test_endpoint_omits_unset_temperature():
    cfg = JudgeEndpointConfig(base_url="http://x", model_name="m")
    assert "temperature" not in ChatCompletionJudge(cfg, client=_client(lambda r: _ok(""))).payload([])


@pytest.mark.parametrize("status", [400, 429, 500, 503])
def test_non_2xx_raises(status, xpair, spec):
    judge = ChatCompletionJudge(JudgeEndpointConfig("http://x", "m"), client=_client(lambda r: httpx.Response(status)))
    with pytest.raises(EndpointError):
        elicit_comparison(judge, xpair, "no-prediction", spec, 0)


def test_timeout_raises(xpair, spec):
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    judge = ChatCompletionJudge(JudgeEndpointConfig("http://x", "m"), client=_client(handler))
    with pytest.raises(EndpointError):
        elicit_comparison(judge, xpair, "no-prediction", spec, 0)


def test_malformed_body_raises(xpair, spec):
    judge = ChatCompletionJudge(JudgeEndpointConfig("http://x", "m"), client=_client(lambda r: httpx.Response(200, json={})))
    with pytest.raises(EndpointError):
        elicit_comparison(judge, xpair, "no-prediction", spec, 0)


def test_token_never_logged_or_in_errors(monkeypatch, caplog, xpair, spec):
    monkeypatch.setenv("RANKAUDIT_API_KEY", "sk-do-not-print")
    caplog.set_level(logging.DEBUG)
    judge = ChatCompletionJudge(JudgeEndpointConfig("http://x", "m"), client=_client(lambda r: httpx.Response(401)))
    with pytest.raises(EndpointError) as info:
        elicit_comparison(judge, xpair, "no-prediction", spec, 0)
    assert "sk-do-not-print" not in str(info.value)
    assert "sk-do-not-print" not in caplog.text


def test_endpoint_config_validation():
    with pytest.raises(ValueError):
        JudgeEndpointConfig("http://x", "m", max_retries=0)
    with pytest.raises(ValueError):
        JudgeEndpointConfig("http://x", "m", temperature=-1)
    cfg = JudgeEndpointConfig.from_dict({"base_url": "http://x", "model_name": "m", "distiller": {"base_url": "http://y", "model_name": "d"}})
    assert cfg.distiller.model_name == "d"
