from __future__ import annotations

from rankaudit.domain import ItemProfile, QuestionAnswer


def make_item(item_id, answers=(("q1", "yes"),), th="low", es="medium", cohort="single-adult", **kw):
    return ItemProfile(
        item_id=item_id,
        cohort=cohort,
        answers=tuple(QuestionAnswer(q, f"Question {q}", a) for q, a in answers),
        risk={"TH": th, "ES": es},
        **kw,
    )
