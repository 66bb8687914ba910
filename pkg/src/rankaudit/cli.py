"""Command line entry point: ``rankaudit <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    ExperimentConfig,
    analyze,
    resume,
    run_pairwise_experiment,
    run_ranking_experiment,
    stored_config,
)
from .judges import API_KEY_ENV, JudgeError
from .ledger import LedgerError
from .synthetic import SyntheticCohortSpec, gen_cohort


def _read_json(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _load_config(path: str, kind: str | None = None) -> ExperimentConfig:
    data = _read_json(path)
    if kind is not None:
        data.setdefault("experiment_kind", kind)
    config = ExperimentConfig.from_dict(data)
    if kind is not None and config.experiment_kind != kind:
        raise ConfigError(f"{path} describes a {config.experiment_kind} experiment, not {kind}")
    return config


def _summary(report: dict) -> str:
    return json.dumps({k: report[k] for k in ("experiment", "config_hash")}, sort_keys=True)


def cmd_run_pairwise(args: argparse.Namespace) -> int:
    config = _load_config(args.config, "pairwise")
    print(_summary(run_pairwise_experiment(config, base_dir=Path(args.config).parent)))
    return 0


def cmd_run_ranking(args: argparse.Namespace) -> int:
    config = _load_config(args.config, "ranking")
    print(_summary(run_ranking_experiment(config, base_dir=Path(args.config).parent)))
    return 0


def cmd_resume(args: argparse.Namespace) -> int:
    config = _load_config(args.config, stored_config(args.ledger).experiment_kind) if args.config else None
    print(_summary(resume(args.ledger, config)))
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    print(_summary(analyze(args.ledger, args.reports)))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cohort = gen_cohort(SyntheticCohortSpec.from_dict(_read_json(args.spec)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cohort.write(out)
    print(json.dumps({"items": len(cohort.dataset.items), "cohort": str(out / "cohort.jsonl"),
                      "oracle": str(out / "oracle.json")}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankaudit",
        description="Run and analyse pairwise and ranking audits of household prioritization judges.",
        epilog=f"Endpoint judges read their bearer token from ${API_KEY_ENV} (or the variable named by "
        "'api_key_env' in the judge config). The token is never logged.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-pairwise", help="four-condition pairwise experiment")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.set_defaults(func=cmd_run_pairwise)

    p = sub.add_parser("run-ranking", help="repeated ranking pipeline experiment")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.set_defaults(func=cmd_run_ranking)

    p = sub.add_parser("resume", help="continue an interrupted run from its ledger")
    p.add_argument("--ledger", required=True, help="ledger directory of the run")
    p.add_argument("--config", help="optional config; refused unless it matches the ledger")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("analyze", help="regenerate reports from a ledger")
    p.add_argument("--ledger", required=True, help="ledger directory of the run")
    p.add_argument("--reports", help="output directory (default: <run>/reports)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate a synthetic cohort and BTL oracle")
    p.add_argument("--spec", required=True, help="JSON synthetic cohort spec")
    p.add_argument("--out", default="synthetic", help="output directory (default: ./synthetic)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (ConfigError, LedgerError, JudgeError, FileNotFoundError, ValueError) as exc:
        print(f"rankaudit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
