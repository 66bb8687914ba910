"""Experiment orchestration: config, ledger-backed elicitation, resumption, reports.

A run directory holds ``ledger/records.jsonl`` and ``reports/``. The ledger's
first records snapshot the config, the cohort, the prompt and any BTL oracles,
so resuming and re-analysing need nothing but the ledger directory.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import attribution, stats
from .domain import CohortDataset, InfoCondition, ItemProfile, load_cohort
from .judges import (
    DEFAULT_MAX_RETRIES,
    POLICIES,
    BtlJudge,
    ChatCompletionJudge,
    ComparisonTask,
    ElicitationOutcome,
    Judge,
    JudgeEndpointConfig,
    JudgeVerdict,
    Orientation,
    PromptSpec,
    ScriptedJudge,
    classify_orientation,
    elicit_many,
    load_prompt_spec,
    replay,
)
from .ledger import LedgerError, RunLedger, config_hash
from .ranking import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOL,
    NORMALIZATIONS,
    FailureBudgetExceeded,
    RankingResult,
    run_ranking_pipeline,
)
from .seeding import coin, derive_seed
from .synthetic import BtlOracle

log = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("pairwise", "ranking")
JUDGE_KINDS = ("endpoint", "btl", "scripted")
LEDGER_DIR = "ledger"
REPORTS_DIR = "reports"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_kind: str
    cohort_path: str
    judges: tuple[Mapping[str, Any], ...]
    conditions: tuple[str, ...] = tuple(c.value for c in InfoCondition)
    runs_per_pair: int = 10
    p: float = 0.4
    pipeline_runs_per_judge: int = 2
    epsilon: float = DEFAULT_EPSILON
    tol: float = DEFAULT_TOL
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    seed: int = 0
    output_dir: str = "run"
    prompt_template_path: str | None = None
    # knobs beyond the core field list
    pairs: tuple[tuple[str, str], ...] | None = None
    ranking_condition: str = InfoCondition.NO_PREDICTION.value
    comparisons_per_pair: int = 1
    failure_budget: float = 0.01
    intensive_intervention: str = "TH"
    normalization: str = "outgoing"
    l2: float = 1.0
    attribution_top_k: int = 5
    attribution_bins: int | None = None
    tie_break_variants: int = 10

    def __post_init__(self) -> None:
        if self.experiment_kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"experiment_kind must be one of {EXPERIMENT_KINDS}")
        if not self.judges:
            raise ConfigError("at least one judge is required")
        object.__setattr__(self, "judges", tuple(dict(j) for j in self.judges))
        ids = [judge_id_of(j) for j in self.judges]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"judge ids must be unique, got {ids}")
        for j in self.judges:
            if j.get("kind", "endpoint") not in JUDGE_KINDS:
                raise ConfigError(f"judge kind must be one of {JUDGE_KINDS}")
        try:
            object.__setattr__(self, "conditions", tuple(InfoCondition(c).value for c in self.conditions))
            InfoCondition(self.ranking_condition)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.conditions:
            raise ConfigError("conditions must not be empty")
        if self.runs_per_pair < 1:
            raise ConfigError("runs_per_pair must be at least 1")
        if not 0 < self.p <= 1:
            raise ConfigError("p must be in (0, 1]")
        if self.pipeline_runs_per_judge < 1:
            raise ConfigError("pipeline_runs_per_judge must be at least 1")
        if self.comparisons_per_pair < 1:
            raise ConfigError("comparisons_per_pair must be at least 1")
        if not 0 <= self.failure_budget <= 1:
            raise ConfigError("failure_budget must be in [0, 1]")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        if self.pairs is not None:
            object.__setattr__(self, "pairs", tuple((str(a), str(b)) for a, b in self.pairs))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["judges"] = [dict(j) for j in self.judges]
        d["conditions"] = list(self.conditions)
        d["pairs"] = None if self.pairs is None else [list(p) for p in self.pairs]
        return d

    def hash(self) -> str:
        """Content hash over everything that shapes results (not the output location)."""
        d = self.to_dict()
        del d["output_dir"]
        return config_hash(d)


def judge_id_of(spec: Mapping[str, Any]) -> str:
    if "judge_id" in spec:
        return str(spec["judge_id"])
    if spec.get("kind", "endpoint") == "endpoint" and "model_name" in spec:
        return str(spec["model_name"])
    return str(spec.get("kind", "endpoint"))


# ---------------------------------------------------------------------------
# resources and judges


@dataclass
class Resources:
    cohort: CohortDataset
    prompt: PromptSpec
    oracles: dict[str, BtlOracle] = field(default_factory=dict)


def _resolve(base: Path, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


def _snapshot(config: ExperimentConfig, base_dir: Path) -> dict[str, Any]:
    cohort = load_cohort(_resolve(base_dir, config.cohort_path))
    prompt_path = None if config.prompt_template_path is None else _resolve(base_dir, config.prompt_template_path)
    prompt = load_prompt_spec(prompt_path)
    oracles = {}
    for spec in config.judges:
        if spec.get("kind") != "btl":
            continue
        if "oracle" in spec:
            oracles[judge_id_of(spec)] = BtlOracle.from_dict(spec["oracle"]).to_dict()
        elif "oracle_path" in spec:
            oracles[judge_id_of(spec)] = BtlOracle.load(_resolve(base_dir, spec["oracle_path"])).to_dict()
        else:
            raise ConfigError(f"btl judge {judge_id_of(spec)!r} needs 'oracle' or 'oracle_path'")
    return {
        "cohort": {"cohort_id": cohort.cohort_id, "schema": list(cohort.schema), "items": cohort.to_records()},
        "prompt": {"template": prompt.template, "system_preamble": prompt.system_preamble},
        "oracles": oracles,
    }


def _resources_from(snapshot: Mapping[str, Any]) -> Resources:
    c = snapshot["cohort"]
    cohort = CohortDataset(c["cohort_id"], tuple(ItemProfile.from_dict(r) for r in c["items"]), tuple(c["schema"]))
    prompt = PromptSpec(snapshot["prompt"]["template"], snapshot["prompt"]["system_preamble"])
    oracles = {k: BtlOracle.from_dict(v) for k, v in snapshot["oracles"].items()}
    return Resources(cohort, prompt, oracles)


def build_judge(spec: Mapping[str, Any], resources: Resources, intervention: str = "TH") -> Judge:
    kind = spec.get("kind", "endpoint")
    judge_id = judge_id_of(spec)
    if kind == "endpoint":
        return ChatCompletionJudge(JudgeEndpointConfig.from_dict(spec), judge_id=judge_id)
    if kind == "btl":
        clip = spec.get("clip")
        return BtlJudge(resources.oracles[judge_id], judge_id=judge_id, clip=None if clip is None else tuple(clip))
    if "responses" in spec:
        return ScriptedJudge(replay(spec["responses"], spec.get("default", "")), judge_id)
    if "response" in spec:
        return ScriptedJudge(str(spec["response"]), judge_id)
    policy = spec.get("policy")
    if policy not in POLICIES:
        raise ConfigError(f"scripted judge {judge_id!r}: policy must be one of {sorted(POLICIES)}")
    factory = POLICIES[policy]
    script = factory(intervention) if policy.startswith("prefer-") else factory()
    return ScriptedJudge(script, judge_id)


def _distiller_for(spec: Mapping[str, Any], resources: Resources, intervention: str) -> Judge | None:
    d = spec.get("distiller")
    if d is None:
        return None
    d = dict(d)
    d.setdefault("judge_id", f"{judge_id_of(spec)}-distiller")
    return build_judge(d, resources, intervention)


def _max_workers(spec: Mapping[str, Any]) -> int:
    if spec.get("kind", "endpoint") == "endpoint":
        return int(spec.get("max_concurrent_requests", 4))
    return int(spec.get("max_workers", 1))


# ---------------------------------------------------------------------------
# ledger setup


def _open_ledger(ledger_dir: Path, config: ExperimentConfig, base_dir: Path) -> tuple[RunLedger, Resources]:
    ledger = RunLedger(ledger_dir, config.hash())
    if not ledger.records("config"):
        # the output location is not part of the experiment, so ledgers from two locations stay identical
        recorded = config.to_dict()
        del recorded["output_dir"]
        ledger.append("config", {"config": recorded})
    snaps = ledger.records("snapshot")
    if not snaps:
        snaps = [ledger.append("snapshot", _snapshot(config, base_dir))]
    return ledger, _resources_from(snaps[0])


def stored_config(ledger_dir: str | Path) -> ExperimentConfig:
    from .ledger import LEDGER_FILE, read_records

    path = Path(ledger_dir) / LEDGER_FILE
    if not path.exists():
        raise LedgerError(f"no ledger at {path}")
    for rec in read_records(path):
        if rec["kind"] == "config":
            return ExperimentConfig.from_dict(rec["config"])
    raise LedgerError(f"{path} has no config record")


# ---------------------------------------------------------------------------
# elicitation stages


def designated_pairs(config: ExperimentConfig, cohort: CohortDataset) -> list[tuple[str, str]]:
    """Configured pairs, or consecutive items (1st with 2nd, 3rd with 4th, ...)."""
    if config.pairs is not None:
        known = set(cohort.item_ids)
        for a, b in config.pairs:
            if a not in known or b not in known or a == b:
                raise ConfigError(f"pair ({a}, {b}) is not a pair of distinct cohort items")
        return list(config.pairs)
    ids = cohort.item_ids
    return [(ids[k], ids[k + 1]) for k in range(0, len(ids) - 1, 2)]


def pair_id(a: str, b: str) -> str:
    return f"{a}~{b}"


def _pairwise_stage(
    config: ExperimentConfig, ledger: RunLedger, resources: Resources, judges: Mapping[str, Judge]
) -> None:
    pairs = designated_pairs(config, resources.cohort)
    by_id = {it.item_id: it for it in resources.cohort.items}
    done = {r["key"] for r in ledger.records("verdict") if r.get("experiment") == "pairwise"}
    complete = {r["judge_id"] for r in ledger.records("complete") if r.get("experiment") == "pairwise"}
    for spec in config.judges:
        judge_id = judge_id_of(spec)
        if judge_id in complete:
            continue
        judge = judges[judge_id]
        tasks = []
        meta = {}
        for cond in config.conditions:
            for idx, (a, b) in enumerate(pairs):
                for r in range(config.runs_per_pair):
                    key = f"{judge_id}/{cond}/pair{idx:03d}/run{r}"
                    if key in done:
                        continue
                    seed = derive_seed(config.seed, judge_id, "pairwise", cond, idx, r)
                    swap = coin(derive_seed(seed, "order")).random() < 0.5
                    left, right = (b, a) if swap else (a, b)
                    tasks.append(ComparisonTask(key, by_id[left], by_id[right], InfoCondition(cond), r, seed))
                    meta[key] = {"condition": cond, "pair_id": pair_id(a, b), "run_index": r}
        unresolved = 0

        def record(out: ElicitationOutcome) -> None:
            nonlocal unresolved
            base = {"experiment": "pairwise", "judge_id": judge_id, "key": out.task.key, **meta[out.task.key]}
            for tr in out.records:
                ledger.append("transcript", {"experiment": "pairwise", **tr})
            if out.verdict is None:
                unresolved += 1
                ledger.append("unresolved", {**base, "attempts": len(out.records)})
            else:
                ledger.append("verdict", {**base, "verdict": out.verdict.to_dict()}, seed=out.task.seed)

        elicit_many(
            judge,
            tasks,
            resources.prompt,
            max_retries=int(spec.get("max_retries", DEFAULT_MAX_RETRIES)),
            distiller=_distiller_for(spec, resources, config.intensive_intervention),
            max_workers=_max_workers(spec),
            on_outcome=record,
        )
        expected = len(config.conditions) * len(pairs) * config.runs_per_pair
        if unresolved > config.failure_budget * max(expected, 1):
            raise FailureBudgetExceeded(
                f"{judge_id}: {unresolved} of {expected} pairwise comparisons unresolved; resume to retry them"
            )
        ledger.append("complete", {"experiment": "pairwise", "judge_id": judge_id})


def _ranking_stage(
    config: ExperimentConfig, ledger: RunLedger, resources: Resources, judges: Mapping[str, Judge]
) -> None:
    for spec in config.judges:
        judge_id = judge_id_of(spec)
        for r in range(config.pipeline_runs_per_judge):
            run_ranking_pipeline(
                resources.cohort,
                judges[judge_id],
                p=config.p,
                epsilon=config.epsilon,
                tol=config.tol,
                seed=derive_seed(config.seed, judge_id, "run", r),
                pipeline_run_index=r,
                condition=config.ranking_condition,
                spec=resources.prompt,
                comparisons_per_pair=config.comparisons_per_pair,
                max_retries=int(spec.get("max_retries", DEFAULT_MAX_RETRIES)),
                distiller=_distiller_for(spec, resources, config.intensive_intervention),
                max_workers=_max_workers(spec),
                max_iterations=config.max_iterations,
                failure_budget=config.failure_budget,
                normalization=config.normalization,
                ledger=ledger,
            )


JudgeOverrides = Mapping[str, Judge]


def _execute(
    config: ExperimentConfig, run_dir: Path, base_dir: Path, judges: JudgeOverrides | None
) -> dict[str, Any]:
    ledger, resources = _open_ledger(run_dir / LEDGER_DIR, config, base_dir)
    built: dict[str, Judge] = {}
    for spec in config.judges:
        jid = judge_id_of(spec)
        built[jid] = judges[jid] if judges and jid in judges else build_judge(
            spec, resources, config.intensive_intervention
        )
    log.info("experiment %s, config %s, %d judge(s)", config.experiment_kind, ledger.config_hash, len(built))
    if config.experiment_kind == "pairwise":
        _pairwise_stage(config, ledger, resources, built)
    else:
        _ranking_stage(config, ledger, resources, built)
    return write_reports(ledger, run_dir / REPORTS_DIR)


def run_pairwise_experiment(
    config: ExperimentConfig, base_dir: str | Path = ".", judges: JudgeOverrides | None = None
) -> dict[str, Any]:
    """Elicit ``runs_per_pair`` verdicts per pair, condition and judge, then report.

    ``judges`` optionally replaces configured judges by id (tests, custom judges).
    """
    if config.experiment_kind != "pairwise":
        raise ConfigError("config is not a pairwise experiment")
    base_dir = Path(base_dir)
    return _execute(config, _resolve(base_dir, config.output_dir), base_dir, judges)


def run_ranking_experiment(
    config: ExperimentConfig, base_dir: str | Path = ".", judges: JudgeOverrides | None = None
) -> dict[str, Any]:
    if config.experiment_kind != "ranking":
        raise ConfigError("config is not a ranking experiment")
    base_dir = Path(base_dir)
    return _execute(config, _resolve(base_dir, config.output_dir), base_dir, judges)


def resume(
    ledger_dir: str | Path, config: ExperimentConfig | None = None, judges: JudgeOverrides | None = None
) -> dict[str, Any]:
    """Continue an interrupted experiment from its ledger.

    The stored config is used unless ``config`` is given, in which case its
    hash must match the ledger's. Recorded verdicts are kept, recorded pair
    samples are replayed, and reports are regenerated.
    """
    ledger_dir = Path(ledger_dir)
    stored = stored_config(ledger_dir)
    if config is not None and config.hash() != stored.hash():
        raise LedgerError(f"config hash {config.hash()} does not match ledger config {stored.hash()}; refusing to resume")
    return _execute(stored, ledger_dir.parent, ledger_dir.parent, judges)


def analyze(ledger_dir: str | Path, reports_dir: str | Path | None = None) -> dict[str, Any]:
    """Regenerate reports from the ledger alone."""
    ledger_dir = Path(ledger_dir)
    stored = stored_config(ledger_dir)
    ledger = RunLedger(ledger_dir, stored.hash())
    return write_reports(ledger, Path(reports_dir) if reports_dir else ledger_dir.parent / REPORTS_DIR)


# ---------------------------------------------------------------------------
# reports (pure views of the ledger)


def _absent(reason: str) -> dict[str, Any]:
    return {"status": "absent", "reason": reason}


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def pairwise_report(records: Sequence[Mapping[str, Any]]) -> tuple[dict[str, Any], dict[str, str]]:
    config = ExperimentConfig.from_dict(next(r for r in records if r["kind"] == "config")["config"])
    resources = _resources_from(next(r for r in records if r["kind"] == "snapshot"))
    by_id = {it.item_id: it for it in resources.cohort.items}
    pairs = designated_pairs(config, resources.cohort)
    interv = config.intensive_intervention

    verdicts: dict[str, Mapping[str, Any]] = {}
    unresolved: dict[str, Mapping[str, Any]] = {}
    retries = distilled = 0
    for r in records:
        if r.get("experiment") != "pairwise":
            continue
        if r["kind"] == "verdict":
            verdicts[r["key"]] = r
        elif r["kind"] == "unresolved":
            unresolved[r["key"]] = r
    counts: dict[tuple[str, str, str], list[int]] = {}
    for spec in config.judges:
        for cond in config.conditions:
            for a, b in pairs:
                counts[(judge_id_of(spec), cond, pair_id(a, b))] = [0, 0, 0, 0]
    for key, r in verdicts.items():
        v = JudgeVerdict.from_dict(r["verdict"])
        retries += v.retries
        distilled += int(v.distilled)
        left, right = by_id[v.left_id], by_id[v.right_id]
        o = classify_orientation(
            v, (left.risk or {}).get(interv), (right.risk or {}).get(interv)
        )
        slot = {Orientation.OUTCOME: 0, Orientation.VULNERABILITY: 1, Orientation.INDETERMINATE: 2}[o]
        counts[(r["judge_id"], r["condition"], r["pair_id"])][slot] += 1
    for key, r in unresolved.items():
        if key not in verdicts:
            counts[(r["judge_id"], r["condition"], r["pair_id"])][3] += 1

    score_rows = []
    scores = []
    for (jid, cond, pid), (n_out, n_vul, n_ind, n_unres) in counts.items():
        rec = stats.OutcomeScoreRecord.from_counts(pid, cond, n_out, n_vul, n_ind)
        d = rec.to_dict()
        d.update(judge_id=jid, n_unresolved=n_unres)
        scores.append(d)
        a, b = pid.split("~")
        score_rows.append([jid, cond, pid, a, b, n_out, n_vul, n_ind, n_unres, rec.score])
    means = []
    for spec in config.judges:
        jid = judge_id_of(spec)
        for cond in config.conditions:
            vals = [s["score"] for s in scores if s["judge_id"] == jid and s["condition"] == cond and s["score"] is not None]
            means.append(
                {"judge_id": jid, "condition": cond, "n_pairs": len(vals),
                 "mean_score": float(np.mean(vals)) if vals else None}
            )
    report = {
        "experiment": "pairwise",
        "config_hash": config.hash(),
        "runs_per_pair": config.runs_per_pair,
        "scores": scores,
        "condition_means": means,
        "elicitation": {
            "verdicts": len(verdicts),
            "unresolved": sum(1 for k in unresolved if k not in verdicts),
            "retries": retries,
            "distilled": distilled,
        },
    }
    files = {
        "pairwise_scores.csv": _csv(
            ["judge_id", "condition", "pair_id", "item_a", "item_b", "n_outcome", "n_vulnerability",
             "n_indeterminate", "n_unresolved", "score"],
            score_rows,
        ),
        "pairwise_condition_means.csv": _csv(
            ["judge_id", "condition", "n_pairs", "mean_score"],
            [[m["judge_id"], m["condition"], m["n_pairs"], m["mean_score"]] for m in means],
        ),
        "pairwise_report.json": _json(report),
    }
    return report, files


def _label(r: RankingResult) -> str:
    return f"{r.judge_id}/run{r.pipeline_run_index}"


def ranking_report(records: Sequence[Mapping[str, Any]]) -> tuple[dict[str, Any], dict[str, str]]:
    config = ExperimentConfig.from_dict(next(r for r in records if r["kind"] == "config")["config"])
    cohort = _resources_from(next(r for r in records if r["kind"] == "snapshot")).cohort
    rankings: dict[tuple[str, int], RankingResult] = {}
    counts: dict[tuple[str, int], dict[str, int]] = {}
    for r in records:
        if r["kind"] == "ranking" and r.get("experiment") == "ranking":
            res = RankingResult.from_dict(r["ranking"])
            rankings[(res.judge_id, res.pipeline_run_index)] = res
            counts[(res.judge_id, res.pipeline_run_index)] = {
                k: r[k] for k in ("n_pairs", "n_verdicts", "n_unresolved")
            }
    ordered = [rankings[k] for k in sorted(rankings)]
    # higher value = ranked higher; aligned with cohort order
    strength = {_label(r): -r.positions() for r in ordered}

    def corr(x, y) -> dict[str, Any]:
        try:
            return stats.spearman_report(x, y).to_dict()
        except stats.StatsError as exc:
            return _absent(str(exc))

    run_to_run = []
    for spec in config.judges:
        jid = judge_id_of(spec)
        runs = [r for r in ordered if r.judge_id == jid]
        for a, b in combinations(runs, 2):
            run_to_run.append({"judge_id": jid, "a": _label(a), "b": _label(b), **corr(strength[_label(a)], strength[_label(b)])})

    baselines: dict[str, np.ndarray] = {}
    missing_baselines = []
    for name in cohort.baseline_names():
        vals = [it.baseline_scores.get(name) for it in cohort.items]
        if any(v is None for v in vals):
            missing_baselines.append(name)
        else:
            baselines[name] = np.array(vals, dtype=float)

    if baselines:
        agreement: Any = [
            {"ranking": _label(r), "baseline": name, **corr(strength[_label(r)], vals)}
            for r in ordered
            for name, vals in sorted(baselines.items())
        ]
        tie_break: Any = {}
        for name, vals in sorted(baselines.items()):
            rep = stats.tie_break_stability(
                vals, config.tie_break_variants, np.random.default_rng(derive_seed(config.seed, "tie-break", name))
            )
            _, group_sizes = np.unique(vals, return_counts=True)
            tie_break[name] = {
                "variants": rep.variants,
                "min_pairwise_rho": rep.min_pairwise_rho,
                "lower_bound": stats.tie_break_lower_bound(vals),
                "tied_items": int(group_sizes[group_sizes > 1].sum()),
                "largest_tie": int(group_sizes.max()),
            }
    else:
        agreement = _absent("no baseline score is present for every item")
        tie_break = _absent("no baseline score is present for every item")

    labels = [it.received_intensive_service for it in cohort.items]
    if any(lab is None for lab in labels):
        validity: Any = _absent("received_intensive_service is missing for some items")
    elif len(set(labels)) < 2:
        validity = _absent("received_intensive_service has a single class")
    else:
        lab = np.array(labels, dtype=bool)
        validity = [{"scores": name, **stats.roc_auc(v, lab).to_dict()} for name, v in strength.items()]
        validity += [{"scores": f"baseline:{name}", **stats.roc_auc(v, lab).to_dict()} for name, v in sorted(baselines.items())]

    attr_rows = []
    if not cohort.schema:
        attrib: Any = _absent("cohort has no questionnaire features")
    elif not ordered:
        attrib = _absent("no rankings recorded")
    else:
        X = attribution.encode_features(cohort)
        models = {}
        for r in ordered:
            m = attribution.fit_ordinal(X, r.order, config.l2, bins=config.attribution_bins)
            models[_label(r)] = m
            for name, c, nc in zip(m.feature_names, m.coefficients, m.normalized_coefficients):
                attr_rows.append([r.judge_id, r.pipeline_run_index, name, float(c), float(nc)])
        k = min(config.attribution_top_k, len(X.feature_names))
        attrib = {
            "models": {
                lab: {
                    "converged": m.converged,
                    "iterations": m.iterations,
                    "gradient_norm": m.gradient_norm,
                    "top_features": [{"feature": f, "normalized_coefficient": c} for f, c in attribution.top_features(m, k)],
                }
                for lab, m in models.items()
            },
            "overlaps": [
                {"a": a, "b": b, **attribution.compare_attributions(models[a], models[b], k).to_dict()}
                for a, b in combinations(sorted(models), 2)
            ],
        }

    report = {
        "experiment": "ranking",
        "config_hash": config.hash(),
        "rankings": {
            _label(r): {"converged": r.converged, "iterations": r.iterations, **counts[(r.judge_id, r.pipeline_run_index)]}
            for r in ordered
        },
        "run_to_run": run_to_run if run_to_run else _absent("fewer than two runs per judge"),
        "baseline_agreement": agreement,
        "predictive_validity": validity,
        "tie_break_stability": tie_break,
        "attribution": attrib,
        "missing_baselines": missing_baselines,
    }
    rank_rows = []
    for r in ordered:
        smap = r.score_map()
        for pos, item in enumerate(r.order, start=1):
            rank_rows.append([r.judge_id, r.pipeline_run_index, item, pos, smap[item]])
    files = {
        "rankings.csv": _csv(["judge_id", "run_index", "item_id", "rank", "score"], rank_rows),
        "attribution.csv": _csv(["judge_id", "run_index", "feature", "coefficient", "normalized_coefficient"], attr_rows),
        "ranking_report.json": _json(report),
    }
    if run_to_run:
        files["run_to_run.csv"] = _csv(
            ["judge_id", "a", "b", "rho", "n", "ci_low", "ci_high"],
            [[x["judge_id"], x["a"], x["b"], x.get("rho"), x.get("n"), x.get("ci_low"), x.get("ci_high")] for x in run_to_run],
        )
    return report, files


_SAFE = re.compile(r"[^A-Za-z0-9_.-]+")


def write_reports(ledger: RunLedger, reports_dir: str | Path) -> dict[str, Any]:
    """Compute reports from ledger records, write them, and log their digests in the ledger."""
    records = ledger.records()
    config = ExperimentConfig.from_dict(next(r for r in records if r["kind"] == "config")["config"])
    if config.experiment_kind == "pairwise":
        report, files = pairwise_report(records)
    else:
        report, files = ranking_report(records)
    reports_dir = Path(reports_dir)
    reports_dir.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name, text in sorted(files.items()):
        (reports_dir / _SAFE.sub("_", name)).write_text(text, encoding="utf-8")
        digests[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    last = ledger.records("report")
    if not last or last[-1]["digests"] != digests:
        ledger.append("report", {"experiment": config.experiment_kind, "digests": digests})
    return report

