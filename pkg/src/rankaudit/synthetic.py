"""Synthetic cohorts with known ground truth: BTL strengths, baselines, labels."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .domain import CohortDataset, ItemProfile, QuestionAnswer, RiskLabel, dump_cohort

BASELINE_NAME = "synthetic"


@dataclass(frozen=True)
class BtlOracle:
    strengths: Mapping[str, float]
    seed: int = 0

    def __post_init__(self) -> None:
        for item, theta in self.strengths.items():
            if not (math.isfinite(theta) and theta > 0):
                raise ValueError(f"strength of {item!r} must be positive and finite, got {theta}")

    def win_probability(self, i: str, j: str) -> float:
        ti, tj = self.strengths[i], self.strengths[j]
        return ti / (ti + tj)

    def to_dict(self) -> dict[str, Any]:
        return {"strengths": dict(self.strengths), "seed": self.seed}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BtlOracle":
        return cls({str(k): float(v) for k, v in data["strengths"].items()}, int(data.get("seed", 0)))

    @classmethod
    def load(cls, path: str | Path) -> "BtlOracle":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class StrengthDistribution:
    """``log-uniform`` on [lo, hi], ``geometric-ladder`` with ``ratio``, or ``constant``."""

    kind: str = "log-uniform"
    lo: float = 1.0
    hi: float = 10.0
    ratio: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("log-uniform", "geometric-ladder", "constant"):
            raise ValueError(f"unknown strength distribution {self.kind!r}")
        if self.kind == "log-uniform" and not 0 < self.lo <= self.hi:
            raise ValueError("log-uniform needs 0 < lo <= hi")
        if self.kind == "geometric-ladder" and self.ratio <= 0:
            raise ValueError("ladder ratio must be positive")

    def log_strengths(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "log-uniform":
            return rng.uniform(math.log(self.lo), math.log(self.hi), size=n)
        if self.kind == "geometric-ladder":
            return np.arange(n) * math.log(self.ratio)
        return np.zeros(n)


@dataclass(frozen=True)
class PlantedFeature:
    question_id: str
    answer: str
    weight: float


@dataclass(frozen=True)
class SyntheticCohortSpec:
    n_items: int = 50
    n_questions: int = 5
    answers_per_question: int = 3
    strength_distribution: StrengthDistribution = field(default_factory=StrengthDistribution)
    planted_features: tuple[PlantedFeature, ...] = ()
    label_noise: float = 0.0
    seed: int = 0
    strength_noise: float = 0.0
    baseline_tie_mass: float = 0.0
    max_tie_size: int = 8
    label_quantile: float = 0.75
    label_slope: float = math.inf
    cohort_id: str = "synthetic"

    def __post_init__(self) -> None:
        if self.n_items < 2:
            raise ValueError("n_items must be at least 2")
        if self.answers_per_question < 2:
            raise ValueError("answers_per_question must be at least 2")
        for name in ("label_noise", "baseline_tie_mass", "label_quantile"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.max_tie_size < 2:
            raise ValueError("max_tie_size must be at least 2")
        object.__setattr__(
            self, "planted_features", tuple(f if isinstance(f, PlantedFeature) else PlantedFeature(*f)
                                            for f in self.planted_features)
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SyntheticCohortSpec":
        data = dict(data)
        if "strength_distribution" in data:
            data["strength_distribution"] = StrengthDistribution(**data["strength_distribution"])
        if "planted_features" in data:
            data["planted_features"] = tuple(
                PlantedFeature(**f) if isinstance(f, Mapping) else PlantedFeature(*f) for f in data["planted_features"]
            )
        if data.get("label_slope") in (None, "inf"):
            data["label_slope"] = math.inf
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        if math.isinf(self.label_slope):
            d["label_slope"] = "inf"
        return d


@dataclass(frozen=True)
class SyntheticCohort:
    dataset: CohortDataset
    oracle: BtlOracle
    baseline: np.ndarray
    labels: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.oracle.strengths[i] for i in self.dataset.item_ids])

    def write(self, directory: str | Path) -> None:
        directory = Path(directory)
        dump_cohort(self.dataset, directory / "cohort.jsonl")
        (directory / "oracle.json").write_text(json.dumps(self.oracle.to_dict(), sort_keys=True, indent=2) + "\n")


def question_id(k: int) -> str:
    return f"q{k + 1:02d}"


def answer_label(k: int) -> str:
    return f"a{k + 1}"


def _tied_baseline(log_theta: np.ndarray, tie_mass: float, max_size: int, rng: np.random.Generator) -> np.ndarray:
    """Monotone in theta; contiguous runs (by theta) covering ``tie_mass`` of items share one value."""
    n = log_theta.shape[0]
    order = np.argsort(log_theta, kind="mergesort")
    base = log_theta.copy()
    sizes = random_tie_groups(n, tie_mass, max_size, rng)
    if not sizes:
        return base
    # spread the runs over the ordering without overlap
    free = n - sum(sizes)
    gaps = np.sort(rng.integers(0, free + 1, size=len(sizes)))
    pos = 0
    prev_gap = 0
    for g, gap in zip(sizes, gaps):
        pos += gap - prev_gap
        prev_gap = gap
        run = order[pos:pos + g]
        base[run] = base[run[0]]
        pos += g
    return base


def gen_cohort(spec: SyntheticCohortSpec) -> SyntheticCohort:
    rng = np.random.default_rng(spec.seed)
    n, q, k = spec.n_items, spec.n_questions, spec.answers_per_question
    answer_idx = rng.integers(0, k, size=(n, q))
    log_theta = spec.strength_distribution.log_strengths(n, rng)
    qpos = {question_id(j): j for j in range(q)}
    for feat in spec.planted_features:
        if feat.question_id not in qpos:
            raise ValueError(f"planted feature on unknown question {feat.question_id!r}")
        hits = np.array([answer_label(a) == feat.answer for a in answer_idx[:, qpos[feat.question_id]]])
        log_theta = log_theta + feat.weight * hits
    if spec.strength_noise > 0:
        log_theta = log_theta + rng.normal(0.0, spec.strength_noise, size=n)
    # centre so strengths stay in a comfortable floating range
    log_theta = log_theta - log_theta.mean()
    theta = np.exp(log_theta)

    baseline = _tied_baseline(log_theta, spec.baseline_tie_mass, spec.max_tie_size, rng)

    # normalized rank in (0, 1]; top item is 1
    rank01 = (np.argsort(np.argsort(log_theta, kind="mergesort"), kind="mergesort") + 1) / n
    if math.isinf(spec.label_slope):
        labels = rank01 > spec.label_quantile
    else:
        prob = 1.0 / (1.0 + np.exp(-spec.label_slope * (rank01 - spec.label_quantile)))
        labels = rng.random(n) < prob
    flips = rng.random(n) < spec.label_noise
    labels = np.where(flips, ~labels, labels)

    levels = list(RiskLabel)
    risk_idx = rng.integers(0, 3, size=(n, 2))
    width = max(3, len(str(n)))
    items = []
    for i in range(n):
        answers = tuple(
            QuestionAnswer(question_id(j), f"Question {j + 1}", answer_label(int(answer_idx[i, j]))) for j in range(q)
        )
        items.append(
            ItemProfile(
                item_id=f"s{i:0{width}d}",
                cohort="synthetic",
                answers=answers,
                baseline_scores={BASELINE_NAME: float(baseline[i])},
                risk={"TH": levels[risk_idx[i, 0]], "ES": levels[risk_idx[i, 1]]},
                received_intensive_service=bool(labels[i]),
            )
        )
    dataset = CohortDataset(spec.cohort_id, tuple(items), tuple(question_id(j) for j in range(q)))
    oracle = BtlOracle({it.item_id: float(t) for it, t in zip(items, theta)}, spec.seed)
    return SyntheticCohort(dataset, oracle, baseline, labels.astype(bool))


def gen_tied_scores(n: int, tie_groups: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Vector of ``n`` values with exactly the requested tie groups; other values distinct."""
    if any(g < 2 for g in tie_groups) or sum(tie_groups) > n:
        raise ValueError(f"infeasible tie groups {list(tie_groups)} for n={n}")
    values = rng.permutation(n).astype(float)
    members = rng.permutation(n)
    c = 0
    for g in tie_groups:
        grp = members[c:c + g]
        values[grp] = values[grp[0]]
        c += g
    return values


def random_tie_groups(n: int, fraction: float, max_size: int, rng: np.random.Generator) -> list[int]:
    """Group sizes in [2, max_size] covering about ``fraction`` of ``n`` items."""
    budget = int(round(fraction * n))
    sizes = []
    while budget >= 2:
        g = int(rng.integers(2, min(max_size, budget) + 1))
        sizes.append(g)
        budget -= g
    return sizes
