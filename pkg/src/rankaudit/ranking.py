"""Rank Centrality: comparison graph, transition matrix, stationary scores."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .domain import CohortDataset, InfoCondition
from .seeding import coin, derive_seed
from .judges import (
    DEFAULT_MAX_RETRIES,
    ComparisonTask,
    ElicitationOutcome,
    Judge,
    JudgeError,
    JudgeVerdict,
    PromptSpec,
    elicit_many,
    load_prompt_spec,
)

DEFAULT_EPSILON = 1e-3
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITERATIONS = 100_000
TIE_POLICY = "item_id ascending"
NORMALIZATIONS = ("outgoing", "max-degree")
_TIE_DECIMALS = 12


class FailureBudgetExceeded(JudgeError):
    """Too many comparisons stayed unresolved for the ranking to be trusted."""


@dataclass(frozen=True)
class ComparisonGraph:
    """``wins[i, j]`` counts comparisons of items i and j that j won."""

    items: tuple[str, ...]
    wins: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        w = np.asarray(self.wins, dtype=np.int64)
        if w.shape != (len(self.items), len(self.items)):
            raise ValueError("wins must be N x N")
        if (w < 0).any() or np.diag(w).any():
            raise ValueError("win counts must be nonnegative and off-diagonal")
        w.flags.writeable = False
        object.__setattr__(self, "wins", w)

    @property
    def index(self) -> dict[str, int]:
        return {item: k for k, item in enumerate(self.items)}

    @property
    def totals(self) -> np.ndarray:
        """Symmetric matrix of comparison counts per pair."""
        return self.wins + self.wins.T

    def win_count(self, i: str, j: str) -> int:
        idx = self.index
        return int(self.wins[idx[i], idx[j]])

    def comparisons(self) -> dict[frozenset, int]:
        t = self.totals
        a, b = np.nonzero(np.triu(t))
        return {frozenset((self.items[x], self.items[y])): int(t[x, y]) for x, y in zip(a, b)}


@dataclass(frozen=True)
class TransitionMatrix:
    matrix: np.ndarray
    epsilon: float

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("transition matrix must be square")
        if (m < 0).any() or np.abs(m.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("transition matrix must be row-stochastic")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class RankingResult:
    items: tuple[str, ...]
    scores: np.ndarray
    order: tuple[str, ...]
    seed: int = 0
    judge_id: str = ""
    pipeline_run_index: int = 0
    converged: bool = True
    iterations: int = 0
    epsilon: float = DEFAULT_EPSILON
    tie_policy: str = TIE_POLICY

    def score_map(self) -> dict[str, float]:
        return {item: float(s) for item, s in zip(self.items, self.scores)}

    def positions(self) -> np.ndarray:
        """Rank position (1 = top) of each item, aligned with ``items``."""
        pos = {item: k + 1 for k, item in enumerate(self.order)}
        return np.array([pos[item] for item in self.items], dtype=float)

    def to_dict(self) -> dict[str, Any]:
        return {
            "items": list(self.items),
            "scores": self.score_map(),
            "order": list(self.order),
            "provenance": {
                "seed": self.seed,
                "judge_id": self.judge_id,
                "pipeline_run_index": self.pipeline_run_index,
                "converged": self.converged,
                "iterations": self.iterations,
                "epsilon": self.epsilon,
                "tie_policy": self.tie_policy,
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RankingResult":
        prov = data["provenance"]
        items = tuple(data["items"])
        return cls(
            items=items,
            scores=np.array([data["scores"][i] for i in items]),
            order=tuple(data["order"]),
            seed=prov["seed"],
            judge_id=prov["judge_id"],
            pipeline_run_index=prov["pipeline_run_index"],
            converged=prov["converged"],
            iterations=prov["iterations"],
            epsilon=prov["epsilon"],
            tie_policy=prov.get("tie_policy", TIE_POLICY),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["item_id", "rank"])
        for k, item in enumerate(self.order, start=1):
            writer.writerow([item, k])
        return buf.getvalue()


def sample_pairs(items: Sequence[str], p: float, rng: np.random.Generator) -> list[tuple[str, str]]:
    """Keep each unordered pair independently with probability ``p``."""
    if not 0 < p <= 1:
        raise ValueError("p must be in (0, 1]")
    n = len(items)
    if n < 2:
        raise ValueError("need at least 2 items")
    a, b = np.triu_indices(n, k=1)
    keep = rng.random(a.shape[0]) < p
    return [(items[i], items[j]) for i, j in zip(a[keep], b[keep])]


def build_graph(items: Sequence[str], verdicts: Iterable[JudgeVerdict]) -> ComparisonGraph:
    items = tuple(items)
    idx = {item: k for k, item in enumerate(items)}
    wins = np.zeros((len(items), len(items)), dtype=np.int64)
    for v in verdicts:
        for ref in (v.left_id, v.right_id):
            if ref not in idx:
                raise KeyError(f"verdict references unknown item {ref!r}")
        wins[idx[v.loser_id], idx[v.winner_id]] += 1
    return ComparisonGraph(items, wins)


def to_transition_matrix(
    graph: ComparisonGraph, epsilon: float = DEFAULT_EPSILON, normalization: str = "outgoing"
) -> TransitionMatrix:
    """Turn win fractions into a row-stochastic matrix.

    ``epsilon`` is added to every off-diagonal raw weight first. With the
    default ``"outgoing"`` normalization each row is divided by its own total,
    and a row with no outgoing mass (only possible with ``epsilon == 0``)
    becomes a self-loop. ``"max-degree"`` divides every row by the largest
    possible row mass (max comparison degree plus smoothing) and puts the
    remainder on the diagonal.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    totals = graph.totals
    raw = np.where(totals > 0, graph.wins / np.maximum(totals, 1), 0.0)
    n = raw.shape[0]
    raw = raw + epsilon * (1.0 - np.eye(n))
    if normalization == "max-degree":
        d_max = (totals > 0).sum(axis=1).max() + epsilon * (n - 1)
        if d_max <= 0:
            return TransitionMatrix(np.eye(n), float(epsilon))
        P = raw / d_max
        P[np.diag_indices(n)] = 1.0 - P.sum(axis=1)
        return TransitionMatrix(P, float(epsilon))
    out = raw.sum(axis=1)
    dangling = out <= 0
    raw[dangling, :] = 0.0
    raw[dangling, dangling] = 1.0
    out[dangling] = 1.0
    return TransitionMatrix(raw / out[:, None], float(epsilon))


def stationary_distribution(
    matrix: TransitionMatrix | np.ndarray, tol: float = DEFAULT_TOL, max_iterations: int = DEFAULT_MAX_ITERATIONS
) -> tuple[np.ndarray, bool, int]:
    """Power iteration from the uniform vector.

    Stops once successive iterates differ by less than ``tol`` in L1. On
    non-convergence the last iterate comes back with ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    P = matrix.matrix if isinstance(matrix, TransitionMatrix) else np.asarray(matrix, dtype=float)
    return kernels.power_iteration(P, tol, max_iterations)


def dense_stationary(P: np.ndarray) -> np.ndarray:
    """Left eigenvector for eigenvalue 1 via a dense eigensolve (test oracle)."""
    vals, vecs = np.linalg.eig(np.asarray(P, dtype=float).T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    v = np.real(vecs[:, k])
    return v / v.sum()


def rank_items(items: Sequence[str], scores: np.ndarray) -> tuple[str, ...]:
    """Descending score; scores equal to 12 decimals are ordered by item id."""
    rounded = np.round(np.asarray(scores, dtype=float), _TIE_DECIMALS)
    return tuple(sorted(items, key=lambda it, _m=dict(zip(items, rounded)): (-_m[it], it)))


def comparison_key(judge_id: str, run_index: int, pair_index: int, rep: int) -> str:
    return f"{judge_id}/run{run_index}/pair{pair_index:06d}/rep{rep}"


def _task_seed(seed: int, pair_index: int, rep: int) -> tuple[bool, int]:
    swap = coin(derive_seed(seed, "order", pair_index, rep)).random() < 0.5
    return swap, derive_seed(seed, "pair", pair_index, rep)


@dataclass
class PipelineState:
    """Ledger view of one (judge, run) pipeline."""

    pairs: list[tuple[str, str]] | None = None
    verdicts: dict[str, JudgeVerdict] = field(default_factory=dict)
    unresolved: set[str] = field(default_factory=set)
    ranking: RankingResult | None = None

    @classmethod
    def from_ledger(cls, ledger, judge_id: str, run_index: int) -> "PipelineState":
        state = cls()
        if ledger is None:
            return state
        for rec in ledger.records():
            if rec.get("judge_id") != judge_id or rec.get("run_index") != run_index:
                continue
            if rec.get("experiment", "ranking") != "ranking":
                continue
            if rec["kind"] == "pairs":
                state.pairs = [tuple(p) for p in rec["pairs"]]
            elif rec["kind"] == "verdict":
                state.verdicts[rec["key"]] = JudgeVerdict.from_dict(rec["verdict"])
            elif rec["kind"] == "unresolved":
                state.unresolved.add(rec["key"])
            elif rec["kind"] == "ranking":
                state.ranking = RankingResult.from_dict(rec["ranking"])
        return state


def run_ranking_pipeline(
    dataset: CohortDataset,
    judge: Judge,
    p: float = 0.4,
    epsilon: float = DEFAULT_EPSILON,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    pipeline_run_index: int = 0,
    *,
    condition: InfoCondition | str = InfoCondition.NO_PREDICTION,
    spec: PromptSpec | None = None,
    comparisons_per_pair: int = 1,
    max_retries: int = DEFAULT_MAX_RETRIES,
    distiller: Judge | None = None,
    max_workers: int = 1,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    failure_budget: float = 0.01,
    normalization: str = "outgoing",
    ledger=None,
) -> RankingResult:
    """One pipeline run: sample pairs, elicit verdicts, build graph, solve, rank.

    With a ledger, everything is persisted as it happens, and a second call
    with the same ledger resumes: recorded pairs are replayed, recorded
    verdicts are not re-elicited, and a recorded ranking is returned as is.
    Comparisons recorded as unresolved are attempted again on resume.
    """
    judge_id = judge.judge_id
    run_index = pipeline_run_index
    spec = (spec or load_prompt_spec()).with_condition(condition)
    state = PipelineState.from_ledger(ledger, judge_id, run_index)
    if state.ranking is not None:
        return state.ranking

    items = dataset.item_ids
    if state.pairs is None:
        pairs = sample_pairs(items, p, np.random.default_rng(derive_seed(seed, "pairs")))
        if ledger is not None:
            ledger.append(
                "pairs",
                {"experiment": "ranking", "judge_id": judge_id, "run_index": run_index, "p": p,
                 "pairs": [list(x) for x in pairs]},
                seed=seed,
            )
    else:
        pairs = state.pairs

    by_id = {it.item_id: it for it in dataset.items}
    tasks = []
    for k, (a, b) in enumerate(pairs):
        for rep in range(comparisons_per_pair):
            key = comparison_key(judge_id, run_index, k, rep)
            # comparisons left unresolved by an aborted run get another chance
            if key in state.verdicts:
                continue
            swap, task_seed = _task_seed(seed, k, rep)
            left, right = (b, a) if swap else (a, b)
            tasks.append(ComparisonTask(key, by_id[left], by_id[right], InfoCondition(condition), run_index, task_seed))

    verdicts = dict(state.verdicts)
    unresolved = 0

    def record(out: ElicitationOutcome) -> None:
        nonlocal unresolved
        if ledger is not None:
            for tr in out.records:
                ledger.append("transcript", {"experiment": "ranking", "run_index": run_index, **tr})
        if out.verdict is None:
            unresolved += 1
            if ledger is not None:
                ledger.append(
                    "unresolved",
                    {"experiment": "ranking", "judge_id": judge_id, "run_index": run_index, "key": out.task.key,
                     "attempts": len(out.records)},
                )
            return
        verdicts[out.task.key] = out.verdict
        if ledger is not None:
            ledger.append(
                "verdict",
                {"experiment": "ranking", "judge_id": judge_id, "run_index": run_index, "key": out.task.key,
                 "verdict": out.verdict.to_dict()},
                seed=out.task.seed,
            )

    elicit_many(
        judge,
        tasks,
        spec,
        max_retries=max_retries,
        distiller=distiller,
        max_workers=max_workers,
        on_outcome=record,
        keep_transcripts=ledger is not None,
    )
    n_expected = len(pairs) * comparisons_per_pair
    if unresolved > failure_budget * max(n_expected, 1):
        raise FailureBudgetExceeded(
            f"{judge_id} run {run_index}: {unresolved} of {n_expected} comparisons unresolved "
            f"(budget {failure_budget:.1%})"
        )

    graph = build_graph(items, (verdicts[k] for k in sorted(verdicts)))
    matrix = to_transition_matrix(graph, epsilon, normalization)
    scores, converged, iterations = stationary_distribution(matrix, tol, max_iterations)
    result = RankingResult(
        items=items,
        scores=scores,
        order=rank_items(items, scores),
        seed=seed,
        judge_id=judge_id,
        pipeline_run_index=run_index,
        converged=converged,
        iterations=iterations,
        epsilon=epsilon,
    )
    if ledger is not None:
        ledger.append(
            "ranking",
            {"experiment": "ranking", "judge_id": judge_id, "run_index": run_index, "ranking": result.to_dict(),
             "n_pairs": len(pairs), "n_verdicts": len(verdicts), "n_unresolved": unresolved},
            seed=seed,
        )
    return result
