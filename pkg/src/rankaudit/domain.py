"""Rankable items, cohort ingestion, and profile rendering."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

NO_ANSWER = "No answer"
COHORT_KINDS = ("single-adult", "family", "youth", "synthetic")


class CohortError(ValueError):
    """Raised when a cohort file or item violates the data model."""


class RiskLabel(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def severity(self) -> int:
        return _SEVERITY[self]


_SEVERITY = {RiskLabel.LOW: 0, RiskLabel.MEDIUM: 1, RiskLabel.HIGH: 2}


class InfoCondition(str, Enum):
    """What the judge is shown about each household."""

    NO_PREDICTION = "no-prediction"
    ONLY_PREDICTION = "only-prediction"
    PREDICTION_FIRST = "prediction-first"
    SHARED_PREDICTION = "shared-prediction"

    @property
    def needs_risk(self) -> bool:
        return self in (InfoCondition.ONLY_PREDICTION, InfoCondition.SHARED_PREDICTION)


@dataclass(frozen=True)
class QuestionAnswer:
    question_id: str
    question_text: str
    answer: str

    def __post_init__(self) -> None:
        if not self.question_id:
            raise CohortError("question_id must be nonempty")
        if not self.answer:
            # absent responses are a category of their own
            object.__setattr__(self, "answer", NO_ANSWER)


@dataclass(frozen=True)
class ItemProfile:
    item_id: str
    cohort: str
    answers: tuple[QuestionAnswer, ...] = ()
    baseline_scores: Mapping[str, float] = field(default_factory=dict)
    risk: Mapping[str, RiskLabel] | None = None
    received_intensive_service: bool | None = None

    def __post_init__(self) -> None:
        if not self.item_id:
            raise CohortError("item_id must be nonempty")
        if self.cohort not in COHORT_KINDS:
            raise CohortError(f"item {self.item_id}: unknown cohort kind {self.cohort!r}")
        object.__setattr__(self, "answers", tuple(self.answers))
        seen = set()
        for qa in self.answers:
            if qa.question_id in seen:
                raise CohortError(f"item {self.item_id}: duplicate question_id {qa.question_id!r}")
            seen.add(qa.question_id)
        for name, value in self.baseline_scores.items():
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                raise CohortError(f"item {self.item_id}: baseline score {name!r} must be a finite real")
        if self.risk is not None:
            object.__setattr__(
                self, "risk", {k: RiskLabel(v) for k, v in self.risk.items()}
            )

    @property
    def question_ids(self) -> tuple[str, ...]:
        return tuple(qa.question_id for qa in self.answers)

    def to_dict(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "cohort": self.cohort,
            "answers": [
                {"question_id": qa.question_id, "question_text": qa.question_text, "answer": qa.answer}
                for qa in self.answers
            ],
            "baseline_scores": {k: float(v) for k, v in self.baseline_scores.items()},
            "risk": None if self.risk is None else {k: v.value for k, v in self.risk.items()},
            "received_intensive_service": self.received_intensive_service,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ItemProfile":
        answers = []
        for raw in data.get("answers") or []:
            answer = raw.get("answer")
            answers.append(
                QuestionAnswer(
                    question_id=str(raw["question_id"]),
                    question_text=str(raw.get("question_text") or raw["question_id"]),
                    answer=NO_ANSWER if answer is None or answer == "" else str(answer),
                )
            )
        risk = data.get("risk")
        try:
            return cls(
                item_id=str(data["item_id"]),
                cohort=str(data["cohort"]),
                answers=tuple(answers),
                baseline_scores=dict(data.get("baseline_scores") or {}),
                risk=None if risk is None else {str(k): RiskLabel(v) for k, v in risk.items()},
                received_intensive_service=data.get("received_intensive_service"),
            )
        except ValueError as exc:
            if isinstance(exc, CohortError):
                raise
            raise CohortError(str(exc)) from exc


@dataclass(frozen=True)
class CohortDataset:
    cohort_id: str
    items: tuple[ItemProfile, ...]
    schema: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "schema", tuple(self.schema))
        if len(self.items) < 2:
            raise CohortError("cohort must contain at least 2 items")
        ids = set()
        for pos, item in enumerate(self.items):
            if item.item_id in ids:
                raise CohortError(f"duplicate item_id {item.item_id!r}")
            ids.add(item.item_id)
            _check_schema(item, self.schema, f"item {pos + 1}")

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.item_id for item in self.items)

    def item(self, item_id: str) -> ItemProfile:
        for it in self.items:
            if it.item_id == item_id:
                return it
        raise KeyError(item_id)

    def baseline_names(self) -> list[str]:
        """Score names present on every item."""
        names = set(self.items[0].baseline_scores)
        for it in self.items[1:]:
            names &= set(it.baseline_scores)
        return sorted(names)

    def to_records(self) -> list[dict[str, Any]]:
        return [item.to_dict() for item in self.items]


def _check_schema(item: ItemProfile, schema: tuple[str, ...], where: str) -> None:
    got = item.question_ids
    if got == schema:
        return
    missing = [q for q in schema if q not in got]
    extra = [q for q in got if q not in schema]
    parts = []
    if missing:
        parts.append("missing question(s) " + ", ".join(repr(q) for q in missing))
    if extra:
        parts.append("unexpected question(s) " + ", ".join(repr(q) for q in extra))
    if not parts:
        parts.append("questions out of schema order")
    raise CohortError(f"{where} ({item.item_id}): schema mismatch: " + "; ".join(parts))


def cohort_from_items(cohort_id: str, items: Iterable[ItemProfile]) -> CohortDataset:
    items = tuple(items)
    schema = items[0].question_ids if items else ()
    return CohortDataset(cohort_id=cohort_id, items=items, schema=schema)


def load_cohort(path: str | Path, cohort_id: str | None = None) -> CohortDataset:
    """Read a line-delimited JSON cohort file; items keep file order.

    Blank lines are skipped. Errors name the offending (1-based) line.
    """
    path = Path(path)
    items: list[ItemProfile] = []
    schema: tuple[str, ...] | None = None
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                if not isinstance(raw, dict):
                    raise ValueError("expected a JSON object")
                item = ItemProfile.from_dict(raw)
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                raise CohortError(f"line {lineno}: malformed item: {exc}") from exc
            if item.item_id in seen:
                raise CohortError(f"line {lineno}: duplicate item_id {item.item_id!r}")
            seen.add(item.item_id)
            if schema is None:
                schema = item.question_ids
            else:
                _check_schema(item, schema, f"line {lineno}")
            items.append(item)
    if len(items) < 2:
        raise CohortError("cohort must contain at least 2 items")
    return CohortDataset(cohort_id=cohort_id or path.stem, items=tuple(items), schema=schema or ())


def dump_cohort(dataset: CohortDataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in dataset.to_records():
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _risk_lines(item: ItemProfile) -> list[str]:
    return [
        f"Risk of returning to homelessness within two years if given {name}: {label.value}"
        for name, label in sorted(item.risk.items())
    ]


def render_profile_block(item: ItemProfile, condition: InfoCondition | str) -> str:
    """Render one household's data for the prompt placeholder.

    Answer lines follow schema order. Risk lines are included only for the
    conditions that show precomputed predictions.
    """
    condition = InfoCondition(condition)
    if condition.needs_risk and not item.risk:
        raise CohortError(f"item {item.item_id}: condition {condition.value} requires risk labels")
    lines: list[str] = []
    if condition is not InfoCondition.ONLY_PREDICTION:
        lines.extend(f"{qa.question_text}: {qa.answer}" for qa in item.answers)
    if condition.needs_risk:
        lines.extend(_risk_lines(item))
    return "\n".join(lines)
