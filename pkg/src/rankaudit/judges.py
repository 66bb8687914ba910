"""Pairwise judges: prompting, verdict parsing, distillation, and the retry loop.

A judge is any object with a ``judge_id`` and a ``respond(request) -> str``
method. Three families are provided: :class:`ChatCompletionJudge` for remote
chat-completion endpoints, :class:`BtlJudge` for synthetic Bradley-Terry-Luce
oracles, and :class:`ScriptedJudge` for deterministic replays.
"""

from __future__ import annotations

import logging
import os
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import httpx

from .domain import InfoCondition, ItemProfile, RiskLabel, render_profile_block
from .seeding import coin, derive_seed

logger = logging.getLogger(__name__)

PLACEHOLDER = "{{HOUSEHOLDS}}"
LEFT_LABEL = "Household A"
RIGHT_LABEL = "Household B"
API_KEY_ENV = "RANKAUDIT_API_KEY"
DEFAULT_MAX_RETRIES = 5


class JudgeError(Exception):
    """Base class for judge failures."""


class EndpointError(JudgeError):
    """Transport failure talking to a judge (timeout, non-2xx, bad payload)."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class UnresolvedComparisonError(JudgeError):
    """No usable verdict within the retry budget."""

    def __init__(self, message: str, transcripts: list[dict[str, Any]]):
        super().__init__(message)
        self.transcripts = transcripts


class DistillerUnavailableError(JudgeError):
    pass


class Orientation(str, Enum):
    OUTCOME = "outcome"
    VULNERABILITY = "vulnerability"
    INDETERMINATE = "indeterminate"


def _read_prompt_file(text: str) -> tuple[str, str]:
    sections: dict[str, list[str]] = {}
    current = "user"
    for line in text.splitlines():
        if line.startswith("#"):
            continue
        tag = line.strip().lower()
        if tag in ("[system]", "[user]"):
            current = tag[1:-1]
            continue
        sections.setdefault(current, []).append(line)
    system = "\n".join(sections.get("system", [])).strip()
    user = "\n".join(sections.get("user", [])).strip()
    return system, user


@dataclass(frozen=True)
class PromptSpec:
    template: str
    system_preamble: str = ""
    condition: InfoCondition = InfoCondition.NO_PREDICTION

    def __post_init__(self) -> None:
        object.__setattr__(self, "condition", InfoCondition(self.condition))
        count = self.template.count(PLACEHOLDER)
        if count != 1:
            raise ValueError(f"prompt template must contain exactly one {PLACEHOLDER} marker, found {count}")

    def fill(self, body: str) -> str:
        return self.template.replace(PLACEHOLDER, body)

    def with_condition(self, condition: InfoCondition | str) -> "PromptSpec":
        return PromptSpec(self.template, self.system_preamble, InfoCondition(condition))


def load_prompt_spec(
    path: str | Path | None = None, condition: InfoCondition | str = InfoCondition.NO_PREDICTION
) -> PromptSpec:
    """Load a prompt file; ``None`` selects the bundled reconstructed default."""
    if path is None:
        text = resources.files("rankaudit").joinpath("prompts/base_prompt.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    system, user = _read_prompt_file(text)
    return PromptSpec(template=user, system_preamble=system, condition=InfoCondition(condition))


def _distill_spec() -> PromptSpec:
    text = resources.files("rankaudit").joinpath("prompts/distill_prompt.txt").read_text(encoding="utf-8")
    system, user = _read_prompt_file(text)
    return PromptSpec(template=user, system_preamble=system)


PREDICTION_TURN = (
    "Before deciding, estimate for each household the risk (low, medium, or high) that it returns "
    "to homelessness within two years if it receives TH and if it receives ES. "
    "Answer in the form 'Household A: TH <risk>, ES <risk>' and likewise for Household B."
)


@dataclass
class JudgeRequest:
    """One prompt turn sent to a judge.

    ``turn`` is ``"decision"`` (the allocation question), ``"prediction"`` (the
    first turn of a prediction-first exchange) or ``"distill"``. ``seed`` is a
    per-attempt integer that stochastic judges must use so runs replay exactly.
    """

    turn: str
    spec: PromptSpec
    left: ItemProfile | None = None
    right: ItemProfile | None = None
    attempt: int = 0
    seed: int = 0
    history: tuple[dict[str, str], ...] = ()
    source_text: str = ""

    @property
    def condition(self) -> InfoCondition:
        return self.spec.condition

    @cached_property
    def messages(self) -> list[dict[str, str]]:
        if self.history:
            msgs = list(self.history)
        else:
            msgs = [{"role": "system", "content": self.spec.system_preamble}] if self.spec.system_preamble else []
        if self.turn == "distill":
            msgs.append({"role": "user", "content": self.spec.fill(self.source_text)})
            return msgs
        if self.turn == "decision" and self.history:
            msgs.append({"role": "user", "content": "Now make the allocation decision. " + _CHOICE_HINT})
            return msgs
        body = (
            f"{LEFT_LABEL}:\n{render_profile_block(self.left, self.spec.condition)}\n\n"
            f"{RIGHT_LABEL}:\n{render_profile_block(self.right, self.spec.condition)}"
        )
        content = self.spec.fill(body)
        if self.turn == "prediction":
            content = content + "\n\n" + PREDICTION_TURN
        msgs.append({"role": "user", "content": content})
        return msgs


_CHOICE_HINT = 'Which household should receive Transitional Housing? State your choice as "Household A" or "Household B".'


class Judge(Protocol):
    judge_id: str

    def respond(self, request: JudgeRequest) -> str: ...


@dataclass(frozen=True)
class JudgeVerdict:
    left_id: str
    right_id: str
    winner_id: str
    condition: InfoCondition
    run_index: int
    transcript_ref: str
    retries: int = 0
    distilled: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "condition", InfoCondition(self.condition))
        if self.winner_id not in (self.left_id, self.right_id):
            raise ValueError(f"winner {self.winner_id!r} is not one of the compared items")
        if self.run_index < 0 or self.retries < 0:
            raise ValueError("run_index and retries must be nonnegative")

    @property
    def loser_id(self) -> str:
        return self.right_id if self.winner_id == self.left_id else self.left_id

    def to_dict(self) -> dict[str, Any]:
        return {
            "left_id": self.left_id,
            "right_id": self.right_id,
            "winner_id": self.winner_id,
            "condition": self.condition.value,
            "run_index": self.run_index,
            "transcript_ref": self.transcript_ref,
            "retries": self.retries,
            "distilled": self.distilled,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "JudgeVerdict":
        return cls(
            left_id=data["left_id"],
            right_id=data["right_id"],
            winner_id=data["winner_id"],
            condition=InfoCondition(data["condition"]),
            run_index=int(data["run_index"]),
            transcript_ref=data["transcript_ref"],
            retries=int(data.get("retries", 0)),
            distilled=bool(data.get("distilled", False)),
        )


# ---------------------------------------------------------------------------
# parsing

_REF = r"(?:household|family|option)\s+(?P<ref>[AB])\b"
_BARE = r"(?-i:(?P<bare>[AB]))\b"
_INTERVENTION = (
    r"(?:(?:the\s+)?(?:TH|transitional\s+housing|(?:more\s+)?intensive\s+(?:intervention|support|option|service)"
    r"|housing|spot|placement|it)\s+)?"
)
_SELECTION_PATTERNS = [
    # verb before the household
    re.compile(
        r"\b(?:prioriti[sz](?:e|ing)|choos(?:e|ing)|chose|select(?:ing)?|pick(?:ing)?|recommend(?:ing)?"
        r"|favou?r(?:ing)?|go(?:ing)?\s+with|(?:allocat|assign|giv|award|offer)(?:e|ing)\s+" + _INTERVENTION + r"to)"
        r"\s+(?:the\s+)?" + _REF,
        re.IGNORECASE,
    ),
    # household before a receiving verb
    re.compile(
        _REF + r"\s+(?:should|would|must|ought\s+to|deserves\s+to|needs\s+to)\s+(?:be\s+)?"
        r"(?:receive|get|given|prioriti[sz]ed|selected|chosen|allocated|offered)\b",
        re.IGNORECASE,
    ),
    # household is the choice
    re.compile(
        _REF + r"\s+is\s+(?:the\s+|my\s+)?(?:better\s+|best\s+|clear\s+|final\s+|right\s+|stronger\s+)?"
        r"(?:choice|pick|selection|recommendation|priority|candidate)\b",
        re.IGNORECASE,
    ),
    # labelled answer
    re.compile(
        r"\b(?:final\s+)?(?:answer|choice|decision|selection|recommendation|verdict)\s*(?:is|:|-|=)\s*[\*\"'`]*\s*"
        r"(?:" + _REF + r"|" + _BARE + r")",
        re.IGNORECASE,
    ),
]
_WHOLE_LABEL = re.compile(r"^\W*(?:(?:household|family|option)\s+)?(?P<ref>[AB])\W*$", re.IGNORECASE)
_HEDGE = re.compile(
    r"\b(?:not|never|no|neither|nor|cannot|can't|won't|wouldn't|shouldn't|don't|couldn't|isn't"
    r"|if|whether|might|could|perhaps|maybe|possibly|unless|rather\s+than|instead\s+of|refuse|unable)\b",
    re.IGNORECASE,
)
# a second household offered as an alternative later in the same sentence
_ALTERNATIVE = re.compile(
    r"\b(?:or|perhaps|maybe|possibly|alternatively|otherwise|unless)\b.*?\b(?:household|family|option)\s+[AB]\b",
    re.IGNORECASE,
)
_SENTENCE_BREAK = re.compile(r"[.!?;\n]")


def _sentence_prefix(text: str, start: int) -> str:
    prefix = text[max(0, start - 120):start]
    cut = None
    for m in _SENTENCE_BREAK.finditer(prefix):
        cut = m.end()
    return prefix[cut:] if cut is not None else prefix


def _sentence_suffix(text: str, end: int) -> str:
    suffix = text[end:end + 160]
    m = _SENTENCE_BREAK.search(suffix)
    return suffix[:m.start()] if m else suffix


def _alias_ids(text: str, left_id: str, right_id: str) -> str:
    for item_id, label in ((left_id, LEFT_LABEL), (right_id, RIGHT_LABEL)):
        if item_id and item_id in text:
            pattern = r"(?:\b(?:household|family|option)\s+)?(?<![\w-])" + re.escape(item_id) + r"(?![\w-])"
            text = re.sub(pattern, label, text, flags=re.IGNORECASE)
    return text


def parse_verdict(response_text: str, left_id: str, right_id: str) -> str | None:
    """Return the selected item id, or ``None`` unless exactly one item is selected.

    Recognizes "Household A/B" labels (A is the left item) and the raw item
    ids. A selection preceded by a negation or hedge in the same sentence makes
    the whole response ambiguous, so it never guesses.
    """
    if not response_text:
        return None
    text = _alias_ids(response_text, left_id, right_id)
    whole = _WHOLE_LABEL.match(text)
    if whole:
        return left_id if whole.group("ref").upper() == "A" else right_id
    chosen: set[str] = set()
    for pattern in _SELECTION_PATTERNS:
        for m in pattern.finditer(text):
            ref = m.groupdict().get("ref") or m.groupdict().get("bare")
            if ref is None:
                continue
            if _HEDGE.search(_sentence_prefix(text, m.start()) + m.group(0)):
                return None
            if _ALTERNATIVE.search(_sentence_suffix(text, m.end())):
                return None
            chosen.add(ref.upper())
    if len(chosen) != 1:
        return None
    return left_id if chosen.pop() == "A" else right_id


def _distill(
    response_text: str, left_id: str, right_id: str, distiller: Judge, seed: int = 0
) -> tuple[str | None, dict[str, Any]]:
    request = JudgeRequest(turn="distill", spec=_distill_spec(), source_text=response_text, seed=seed)
    reply = distiller.respond(request)
    winner = parse_verdict(reply, left_id, right_id)
    return winner, {"judge_id": distiller.judge_id, "messages": request.messages, "response": reply}


def distill_verdict(response_text: str, left_id: str, right_id: str, distiller: Judge | None) -> str | None:
    """Ask a secondary judge to reduce ``response_text`` to one choice, then re-parse it."""
    if distiller is None:
        raise DistillerUnavailableError("no distiller configured")
    return _distill(response_text, left_id, right_id, distiller)[0]


# ---------------------------------------------------------------------------
# retry loop


def _respond(judge: Judge, request: JudgeRequest, attempt: int) -> str:
    try:
        return judge.respond(request)
    except EndpointError as exc:
        raise EndpointError(f"{judge.judge_id}: {exc} (attempt {attempt + 1})", attempts=attempt + 1) from exc


@dataclass
class _TranscriptRecord:
    transcript_ref: str
    attempt: int
    judge_id: str
    left_id: str
    right_id: str
    condition: InfoCondition
    exchanges: list[tuple[JudgeRequest, str]]
    distill: dict[str, Any] | None
    winner_id: str | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "transcript_ref": self.transcript_ref,
            "attempt": self.attempt,
            "judge_id": self.judge_id,
            "left_id": self.left_id,
            "right_id": self.right_id,
            "condition": self.condition.value,
            "exchanges": [{"messages": req.messages, "response": text} for req, text in self.exchanges],
            "distill": self.distill,
            "winner_id": self.winner_id,
        }


def elicit_comparison(
    judge: Judge,
    pair: tuple[ItemProfile, ItemProfile],
    condition: InfoCondition | str,
    spec: PromptSpec,
    run_index: int,
    *,
    max_retries: int = DEFAULT_MAX_RETRIES,
    distiller: Judge | None = None,
    sink: Callable[[dict[str, Any]], None] | None = None,
    transcript_ref: str | None = None,
    seed: int = 0,
) -> JudgeVerdict:
    """Elicit one verdict: strict parse, then distiller, then re-prompt.

    Every attempt produces one transcript record passed to ``sink`` before
    this returns or raises.
    """
    left, right = pair
    condition = InfoCondition(condition)
    if left.cohort != right.cohort:
        raise ValueError("compared items must belong to the same cohort")
    if max_retries < 1:
        raise ValueError("max_retries must be at least 1")
    spec = spec.with_condition(condition)
    ref = transcript_ref or f"{judge.judge_id}/{left.item_id}~{right.item_id}/r{run_index}"
    transcripts: list[dict[str, Any]] = []
    for attempt in range(max_retries):
        attempt_seed = seed if attempt == 0 else derive_seed(seed, "attempt", attempt)
        exchanges: list[tuple[JudgeRequest, str]] = []
        history: tuple[dict[str, str], ...] = ()
        if condition is InfoCondition.PREDICTION_FIRST:
            first = JudgeRequest("prediction", spec, left, right, attempt, attempt_seed)
            prediction = _respond(judge, first, attempt)
            exchanges.append((first, prediction))
            history = tuple(first.messages) + ({"role": "assistant", "content": prediction},)
        request = JudgeRequest("decision", spec, left, right, attempt, attempt_seed, history)
        text = _respond(judge, request, attempt)
        exchanges.append((request, text))
        winner = parse_verdict(text, left.item_id, right.item_id)
        distill_record = None
        distilled = False
        if winner is None and distiller is not None:
            winner, distill_record = _distill(text, left.item_id, right.item_id, distiller, attempt_seed)
            distilled = winner is not None
        record = _TranscriptRecord(
            ref, attempt, judge.judge_id, left.item_id, right.item_id, condition, exchanges, distill_record, winner
        )
        transcripts.append(record)
        if sink is not None:
            sink(record.to_dict())
        if winner is not None:
            return JudgeVerdict(
                left_id=left.item_id,
                right_id=right.item_id,
                winner_id=winner,
                condition=condition,
                run_index=run_index,
                transcript_ref=ref,
                retries=attempt,
                distilled=distilled,
            )
    raise UnresolvedComparisonError(
        f"{judge.judge_id}: no unambiguous choice for {left.item_id} vs {right.item_id} "
        f"after {max_retries} attempts",
        [t.to_dict() for t in transcripts],
    )


@dataclass(frozen=True)
class ComparisonTask:
    key: str
    left: ItemProfile
    right: ItemProfile
    condition: InfoCondition
    run_index: int
    seed: int


@dataclass
class ElicitationOutcome:
    task: ComparisonTask
    verdict: JudgeVerdict | None
    records: list[dict[str, Any]] = field(default_factory=list)
    error: UnresolvedComparisonError | None = None


def elicit_many(
    judge: Judge,
    tasks: Sequence[ComparisonTask],
    spec: PromptSpec,
    *,
    max_retries: int = DEFAULT_MAX_RETRIES,
    distiller: Judge | None = None,
    max_workers: int = 1,
    on_outcome: Callable[[ElicitationOutcome], None] | None = None,
    keep_transcripts: bool = True,
) -> list[ElicitationOutcome]:
    """Run independent comparisons with bounded concurrency.

    Outcomes are delivered to ``on_outcome`` strictly in task order, so
    ledgers are identical whatever the completion order. Unresolved
    comparisons are returned as outcomes; transport errors propagate after the
    outcomes that precede the failing task have been delivered.
    """

    def one(task: ComparisonTask) -> ElicitationOutcome:
        records: list[dict[str, Any]] = []
        try:
            verdict = elicit_comparison(
                judge,
                (task.left, task.right),
                task.condition,
                spec,
                task.run_index,
                max_retries=max_retries,
                distiller=distiller,
                sink=records.append if keep_transcripts else None,
                transcript_ref=task.key,
                seed=task.seed,
            )
        except UnresolvedComparisonError as exc:
            return ElicitationOutcome(task, None, records, exc)
        return ElicitationOutcome(task, verdict, records)

    outcomes: list[ElicitationOutcome] = []
    if max_workers <= 1:
        for task in tasks:
            out = one(task)
            outcomes.append(out)
            if on_outcome is not None:
                on_outcome(out)
        return outcomes
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(one, task) for task in tasks]
        try:
            for fut in futures:
                out = fut.result()
                outcomes.append(out)
                if on_outcome is not None:
                    on_outcome(out)
        except BaseException:
            for fut in futures:
                fut.cancel()
            raise
    return outcomes


# ---------------------------------------------------------------------------
# orientation


def classify_orientation(
    verdict: JudgeVerdict, left_risk: RiskLabel | str | None, right_risk: RiskLabel | str | None
) -> Orientation:
    """Outcome-oriented when the winner carries the lower risk under the intensive option."""
    if left_risk is None or right_risk is None:
        raise ValueError("both items need a risk label for the intensive intervention")
    left_risk, right_risk = RiskLabel(left_risk), RiskLabel(right_risk)
    if verdict.winner_id == verdict.left_id:
        win, lose = left_risk, right_risk
    else:
        win, lose = right_risk, left_risk
    if win.severity < lose.severity:
        return Orientation.OUTCOME
    if win.severity > lose.severity:
        return Orientation.VULNERABILITY
    return Orientation.INDETERMINATE


# ---------------------------------------------------------------------------
# judges


def btl_win_probability(oracle, i: str, j: str, clip: tuple[float, float] | None = None) -> float:
    try:
        ti, tj = oracle.strengths[i], oracle.strengths[j]
    except KeyError as exc:
        raise KeyError(f"unknown item {exc.args[0]!r} for this oracle") from None
    p = ti / (ti + tj)
    if clip is not None:
        p = min(max(p, clip[0]), clip[1])
    return p


def btl_compare(oracle, i: str, j: str, rng, clip: tuple[float, float] | None = None) -> str:
    """One Bernoulli draw: ``i`` wins with probability theta_i / (theta_i + theta_j).

    ``rng`` is anything with a ``random()`` method returning a uniform float.
    """
    p = btl_win_probability(oracle, i, j, clip)
    return i if rng.random() < p else j


class BtlJudge:
    """Synthetic judge answering from a BTL oracle.

    ``clip`` bounds every win probability, which turns a faithful oracle into a
    high-noise one.
    """

    def __init__(self, oracle, judge_id: str = "btl", clip: tuple[float, float] | None = None):
        self.oracle = oracle
        self.judge_id = judge_id
        self.clip = clip

    def respond(self, request: JudgeRequest) -> str:
        if request.turn == "prediction":
            return f"{LEFT_LABEL}: TH medium, ES medium. {RIGHT_LABEL}: TH medium, ES medium."
        winner = btl_compare(self.oracle, request.left.item_id, request.right.item_id, coin(request.seed), self.clip)
        return LEFT_LABEL if winner == request.left.item_id else RIGHT_LABEL


class ScriptedJudge:
    """Deterministic judge for tests and replays.

    ``script`` is either a callable ``request -> str`` or a sequence of
    responses indexed by attempt number (the last one repeats).
    """

    def __init__(self, script: Callable[[JudgeRequest], str] | Sequence[str] | str, judge_id: str = "scripted"):
        if isinstance(script, str):
            script = [script]
        self.script = script
        self.judge_id = judge_id
        self.calls = 0
        self._lock = threading.Lock()

    def respond(self, request: JudgeRequest) -> str:
        with self._lock:
            self.calls += 1
        if callable(self.script):
            return self.script(request)
        return self.script[min(request.attempt, len(self.script) - 1)]


def _risk_of(item: ItemProfile, intervention: str) -> int:
    if not item.risk or intervention not in item.risk:
        raise ValueError(f"item {item.item_id} has no risk label for {intervention}")
    return item.risk[intervention].severity


def prefer_lower_risk(intervention: str = "TH") -> Callable[[JudgeRequest], str]:
    def script(request: JudgeRequest) -> str:
        if request.turn == "prediction":
            return "Noted."
        left = _risk_of(request.left, intervention) <= _risk_of(request.right, intervention)
        return f"I would prioritize {LEFT_LABEL if left else RIGHT_LABEL}."

    return script


def prefer_higher_risk(intervention: str = "TH") -> Callable[[JudgeRequest], str]:
    def script(request: JudgeRequest) -> str:
        if request.turn == "prediction":
            return "Noted."
        left = _risk_of(request.left, intervention) >= _risk_of(request.right, intervention)
        return f"I would prioritize {LEFT_LABEL if left else RIGHT_LABEL}."

    return script


def coin_flip() -> Callable[[JudgeRequest], str]:
    def script(request: JudgeRequest) -> str:
        if request.turn == "prediction":
            return "Noted."
        heads = coin(request.seed).random() < 0.5
        return LEFT_LABEL if heads else RIGHT_LABEL

    return script


def replay(responses: Mapping[str, Sequence[str]], default: str = "") -> Callable[[JudgeRequest], str]:
    """Replay recorded responses keyed by ``"<left_id>|<right_id>"`` and attempt."""

    def script(request: JudgeRequest) -> str:
        if request.turn == "distill":
            return default
        seq = responses.get(f"{request.left.item_id}|{request.right.item_id}")
        if not seq:
            return default
        return seq[min(request.attempt, len(seq) - 1)]

    return script


_LABEL_MENTION = re.compile(r"\bhousehold\s+([AB])\b", re.IGNORECASE)
_REJECTED = re.compile(r"\b(?:rather\s+than|instead\s+of|over|versus|vs\.?)\s+household\s+[AB]\b", re.IGNORECASE)
_REFUSAL = re.compile(r"\b(?:cannot|can't|won't|unable|refuse|neither)\b", re.IGNORECASE)
_UNDECIDED = re.compile(r"\b(?:both|either|equally|also|coin\s+toss)\b", re.IGNORECASE)


def final_sentence() -> Callable[[JudgeRequest], str]:
    """Distiller policy: the household named last in the final sentence that names one."""

    def script(request: JudgeRequest) -> str:
        text = _REJECTED.sub(" ", request.source_text)
        sentences = [s for s in re.split(r"(?<=[.!?])\s+|\n+", text) if s.strip()]
        for sentence in reversed(sentences):
            refs = _LABEL_MENTION.findall(sentence)
            if refs:
                if _REFUSAL.search(sentence) or _HEDGE.search(sentence) or _UNDECIDED.search(sentence):
                    return "None"
                return LEFT_LABEL if refs[-1].upper() == "A" else RIGHT_LABEL
        return "None"

    return script


POLICIES: dict[str, Callable[..., Callable[[JudgeRequest], str]]] = {
    "prefer-lower-risk": prefer_lower_risk,
    "prefer-higher-risk": prefer_higher_risk,
    "coin-flip": coin_flip,
    "final-sentence": final_sentence,
}


@dataclass(frozen=True)
class JudgeEndpointConfig:
    base_url: str
    model_name: str
    temperature: float | None = None
    max_retries: int = DEFAULT_MAX_RETRIES
    request_timeout: float = 120.0
    max_concurrent_requests: int = 4
    distiller: "JudgeEndpointConfig | None" = None
    api_key_env: str = API_KEY_ENV

    def __post_init__(self) -> None:
        if self.max_retries < 1 or self.max_concurrent_requests < 1:
            raise ValueError("max_retries and max_concurrent_requests must be positive")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be nonnegative")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "JudgeEndpointConfig":
        data = dict(data)
        distiller = data.pop("distiller", None)
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in data.items() if k in known}
        if distiller is not None:
            kwargs["distiller"] = cls.from_dict(distiller)
        return cls(**kwargs)


class ChatCompletionJudge:
    """Judge backed by an OpenAI-compatible ``/v1/chat/completions`` endpoint.

    The bearer token is read from the environment variable named in the
    config and is never logged.
    """

    def __init__(self, config: JudgeEndpointConfig, judge_id: str | None = None, client: httpx.Client | None = None):
        self.config = config
        self.judge_id = judge_id or config.model_name
        headers = {"content-type": "application/json"}
        token = os.environ.get(config.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = client or httpx.Client(timeout=config.request_timeout)
        self._headers = headers
        self.url = config.base_url.rstrip("/") + "/v1/chat/completions"

    def payload(self, messages: Iterable[Mapping[str, str]]) -> dict[str, Any]:
        body: dict[str, Any] = {"model": self.config.model_name, "messages": [dict(m) for m in messages]}
        if self.config.temperature is not None:
            body["temperature"] = self.config.temperature
        return body

    def respond(self, request: JudgeRequest) -> str:
        try:
            resp = self._client.post(self.url, json=self.payload(request.messages), headers=self._headers)
        except httpx.HTTPError as exc:
            raise EndpointError(f"request to {self.url} failed: {exc.__class__.__name__}") from exc
        if resp.status_code // 100 != 2:
            raise EndpointError(f"{self.url} returned HTTP {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise EndpointError(f"unexpected response shape from {self.url}") from exc

    def close(self) -> None:
        self._client.close()
