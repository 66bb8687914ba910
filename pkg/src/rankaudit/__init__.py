"""Auditing pairwise and ranking judgments over household profiles."""

from .domain import CohortDataset, InfoCondition, ItemProfile, QuestionAnswer, RiskLabel, load_cohort
from .harness import ExperimentConfig, analyze, resume, run_pairwise_experiment, run_ranking_experiment
from .judges import BtlJudge, ChatCompletionJudge, JudgeEndpointConfig, JudgeVerdict, ScriptedJudge, parse_verdict
from .kernels import BACKEND
from .ranking import RankingResult, run_ranking_pipeline
from .synthetic import SyntheticCohortSpec, gen_cohort

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BtlJudge",
    "ChatCompletionJudge",
    "CohortDataset",
    "ExperimentConfig",
    "InfoCondition",
    "ItemProfile",
    "JudgeEndpointConfig",
    "JudgeVerdict",
    "QuestionAnswer",
    "RankingResult",
    "RiskLabel",
    "ScriptedJudge",
    "SyntheticCohortSpec",
    "analyze",
    "gen_cohort",
    "load_cohort",
    "parse_verdict",
    "resume",
    "run_pairwise_experiment",
    "run_ranking_experiment",
    "run_ranking_pipeline",
]
