"""Append-only JSONL run ledger."""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Any, Iterator, Mapping

LEDGER_FILE = "records.jsonl"


class LedgerError(RuntimeError):
    pass


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(config: Mapping[str, Any]) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:16]


class RunLedger:
    """Sequence-numbered records, appended through a single lock-guarded writer.

    Records are never rewritten. Every record carries the config hash and a
    strictly increasing ``seq``.
    """

    def __init__(self, directory: str | Path, config_hash: str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / LEDGER_FILE
        self.config_hash = config_hash
        self._lock = threading.Lock()
        self._records: list[dict[str, Any]] = []
        if self.path.exists():
            _drop_torn_tail(self.path)
            self._records = list(read_records(self.path))
            for rec in self._records:
                if rec.get("config_hash") != config_hash:
                    raise LedgerError(
                        f"ledger {self.path} was written under config {rec.get('config_hash')}, not {config_hash}"
                    )
        self._seq = self._records[-1]["seq"] if self._records else -1

    def append(self, kind: str, payload: Mapping[str, Any], seed: int | None = None) -> dict[str, Any]:
        with self._lock:
            self._seq += 1
            record = {"seq": self._seq, "kind": kind, "config_hash": self.config_hash, "seed": seed, **payload}
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(canonical_json(record) + "\n")
            self._records.append(record)
            return record

    def records(self, kind: str | None = None) -> list[dict[str, Any]]:
        with self._lock:
            recs = list(self._records)
        return recs if kind is None else [r for r in recs if r["kind"] == kind]

    def __len__(self) -> int:
        return len(self._records)


def _drop_torn_tail(path: Path) -> None:
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        with path.open("r+b") as fh:
            fh.truncate(data.rfind(b"\n") + 1)


def read_records(path: str | Path) -> Iterator[dict[str, Any]]:
    path = Path(path)
    last = -1
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                # a torn final write from an interrupted run
                rest = fh.read()
                if rest.strip():
                    raise LedgerError(f"{path}:{lineno}: corrupt record")
                return
            if rec["seq"] <= last:
                raise LedgerError(f"{path}:{lineno}: sequence numbers must increase")
            last = rec["seq"]
            yield rec
