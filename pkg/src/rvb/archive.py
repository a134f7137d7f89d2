"""Append-only run archives with byte-level determinism.

A run archive is a JSONL file: one header record (schema version, the
full run configuration including the inlined scenario, the seed), one
record per epoch in strictly increasing order from 1, a stop record, and
a metrics snapshot.  Every line carries a sha256 checksum over its own
canonical form, so a damaged record is detected — and named — on load.

All serialization goes through one canonical JSON form (sorted keys,
compact separators), which gives the core durability property: saving a
loaded archive reproduces the original bytes exactly.  Wall-clock timing
lives in a separate side file precisely so it cannot perturb that
guarantee.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .agents import AttackLogEntry
from .errors import (
    ArchiveIOError,
    ArchiveOrderError,
    CodecError,
    SchemaError,
)

SCHEMA = "rvb-archive/1"

ARCHIVE_FILENAME = "archive.jsonl"
TIMING_FILENAME = "timing.jsonl"
RAW_LLM_DIRNAME = "raw_llm"


def canonical_json(obj: Any) -> str:
    """The one true serialization: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _checksum(record: Mapping[str, Any]) -> str:
    body = {k: v for k, v in record.items() if k != "checksum"}
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


class StopKind(Enum):
    NULL_PRODUCTION = "NullProduction"
    EXECUTION_FAILURE = "ExecutionFailure"
    METRIC_CONVERGENCE = "MetricConvergence"
    MAX_EPOCHS = "MaxEpochs"


@dataclass(frozen=True)
class StopReason:
    """Why a run ended, and at which epoch the criterion fired."""

    kind: StopKind
    epoch: int
    detail: str = ""

    def as_dict(self) -> dict[str, Any]:
        return {"detail": self.detail, "epoch": self.epoch, "kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StopReason":
        return cls(kind=StopKind(d["kind"]), epoch=int(d["epoch"]), detail=str(d.get("detail", "")))


@dataclass(frozen=True)
class EpochRecord:
    """Everything one epoch produced, in archive-ready form.

    ``red_findings``/``blue_actions`` hold the structured outputs of the
    two teams (attack logs or successful episodes; patches or added
    rules).  ``outcomes`` is the verification pass.  The state digests
    chain: ``digest_before`` of epoch k+1 equals ``digest_after`` of
    epoch k, and ``digest_after`` covers the mutating actions through
    this epoch.
    """

    epoch: int
    digest_before: str
    digest_after: str
    red_findings: tuple[dict[str, Any], ...]
    blue_actions: tuple[dict[str, Any], ...]
    outcomes: tuple[dict[str, Any], ...]
    c_before: int
    c_after: int
    token_usage: dict[str, Any] = field(default_factory=dict)
    remediation_failed: bool = False
    blue_failures: tuple[dict[str, Any], ...] = ()
    probe_trace: tuple[dict[str, Any], ...] = ()
    guard_version: int | None = None
    guard_rules: tuple[dict[str, Any], ...] | None = None
    attack_set: tuple[dict[str, Any], ...] | None = None
    benign_set: tuple[dict[str, Any], ...] | None = None
    episodes: tuple[dict[str, Any], ...] | None = None

    def __post_init__(self) -> None:
        if self.epoch < 1:
            raise ValueError(f"epoch index must be >= 1, got {self.epoch}")

    def mutating_actions(self) -> list[dict[str, Any]]:
        """The state transitions this epoch applied (digest input)."""
        return [dict(a) for a in self.blue_actions]

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "blue_actions": [dict(a) for a in self.blue_actions],
            "blue_failures": [dict(a) for a in self.blue_failures],
            "c_after": self.c_after,
            "c_before": self.c_before,
            "digest_after": self.digest_after,
            "digest_before": self.digest_before,
            "epoch": self.epoch,
            "outcomes": [dict(o) for o in self.outcomes],
            "probe_trace": [dict(p) for p in self.probe_trace],
            "red_findings": [dict(f) for f in self.red_findings],
            "remediation_failed": self.remediation_failed,
            "token_usage": dict(self.token_usage),
            "type": "epoch",
        }
        if self.guard_version is not None:
            rec["guard_version"] = self.guard_version
        if self.guard_rules is not None:
            rec["guard_rules"] = [dict(r) for r in self.guard_rules]
        if self.attack_set is not None:
            rec["attack_set"] = [dict(p) for p in self.attack_set]
        if self.benign_set is not None:
            rec["benign_set"] = [dict(p) for p in self.benign_set]
        if self.episodes is not None:
            rec["episodes"] = [dict(e) for e in self.episodes]
        return rec

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "EpochRecord":
        return cls(
            epoch=int(rec["epoch"]),
            digest_before=str(rec["digest_before"]),
            digest_after=str(rec["digest_after"]),
            red_findings=tuple(dict(f) for f in rec.get("red_findings", ())),
            blue_actions=tuple(dict(a) for a in rec.get("blue_actions", ())),
            outcomes=tuple(dict(o) for o in rec.get("outcomes", ())),
            c_before=int(rec["c_before"]),
            c_after=int(rec["c_after"]),
            token_usage=dict(rec.get("token_usage", {})),
            remediation_failed=bool(rec.get("remediation_failed", False)),
            blue_failures=tuple(dict(a) for a in rec.get("blue_failures", ())),
            probe_trace=tuple(dict(p) for p in rec.get("probe_trace", ())),
            guard_version=(
                int(rec["guard_version"]) if "guard_version" in rec else None
            ),
            guard_rules=(
                tuple(dict(r) for r in rec["guard_rules"]) if "guard_rules" in rec else None
            ),
            attack_set=(
                tuple(dict(p) for p in rec["attack_set"]) if "attack_set" in rec else None
            ),
            benign_set=(
                tuple(dict(p) for p in rec["benign_set"]) if "benign_set" in rec else None
            ),
            episodes=(
                tuple(dict(e) for e in rec["episodes"]) if "episodes" in rec else None
            ),
        )


@dataclass
class RunArchive:
    """In-memory image of one run's archive."""

    header: dict[str, Any]
    epochs: list[EpochRecord] = field(default_factory=list)
    stop: StopReason | None = None
    metrics: dict[str, Any] | None = None

    @classmethod
    def new(cls, config_snapshot: Mapping[str, Any], seed: int, domain: str) -> "RunArchive":
        return cls(
            header={
                "config": dict(config_snapshot),
                "domain": domain,
                "schema": SCHEMA,
                "seed": seed,
                "type": "header",
            }
        )

    def append_epoch(self, record: EpochRecord) -> None:
        """Append the next epoch; gaps and duplicates are order errors."""
        expected = len(self.epochs) + 1
        if record.epoch != expected:
            raise ArchiveOrderError(
                f"expected epoch {expected} next, got {record.epoch}"
            )
        self.epochs.append(record)

    def lines(self) -> list[str]:
        """Canonical archive lines, checksums included."""
        records: list[dict[str, Any]] = [dict(self.header)]
        records.extend(e.to_record() for e in self.epochs)
        if self.stop is not None:
            records.append({"stop": self.stop.as_dict(), "type": "stop"})
        if self.metrics is not None:
            records.append({"metrics": self.metrics, "type": "metrics"})
        out = []
        for rec in records:
            rec = dict(rec)
            rec["checksum"] = _checksum(rec)
            out.append(canonical_json(rec))
        return out

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        blob = "".join(line + "\n" for line in self.lines())
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunArchive":
        """Parse and verify an archive file.

        Raises :class:`SchemaError` for an unknown schema,
        :class:`ArchiveIOError` for truncation or checksum damage (naming
        the last complete epoch / the damaged record), and
        :class:`ArchiveOrderError` for gaps or duplicates.
        """
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as err:
            raise ArchiveIOError(f"cannot read archive: {err}") from None
        archive: RunArchive | None = None
        last_epoch = 0
        for index, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError:
                raise ArchiveIOError(
                    f"record {index} is truncated or corrupt; "
                    f"last complete epoch is {last_epoch}"
                ) from None
            if not isinstance(rec, dict) or "type" not in rec:
                raise SchemaError(f"record {index} has no type tag")
            if rec.get("checksum") != _checksum(rec):
                label = f"epoch {rec['epoch']}" if rec.get("type") == "epoch" else f"record {index}"
                raise ArchiveIOError(f"checksum mismatch at {label}")
            body = {k: v for k, v in rec.items() if k != "checksum"}
            kind = body["type"]
            if index == 0:
                if kind != "header":
                    raise SchemaError("first record must be the header")
                if body.get("schema") != SCHEMA:
                    raise SchemaError(
                        f"unsupported archive schema {body.get('schema')!r} "
                        f"(this build reads {SCHEMA!r})"
                    )
                archive = cls(header=body)
                continue
            assert archive is not None
            if kind == "epoch":
                record = EpochRecord.from_record(body)
                archive.append_epoch(record)
                last_epoch = record.epoch
            elif kind == "stop":
                archive.stop = StopReason.from_dict(body["stop"])
            elif kind == "metrics":
                archive.metrics = body["metrics"]
            else:
                raise SchemaError(f"unknown record type {kind!r} at record {index}")
        if archive is None:
            raise SchemaError("archive is empty")
        return archive


def first_divergence(a: RunArchive, b: RunArchive) -> str | None:
    """Human-readable description of the first differing record, if any."""
    la, lb = a.lines(), b.lines()
    for i, (ra, rb) in enumerate(zip(la, lb)):
        if ra != rb:
            rec = json.loads(ra)
            if rec.get("type") == "epoch":
                return f"epoch {rec['epoch']} diverges"
            return f"record {i} ({rec.get('type', '?')}) diverges"
    if len(la) != len(lb):
        return f"record count differs ({len(la)} vs {len(lb)})"
    return None


class RunWriter:
    """Streaming writer for a run directory.

    Produces exactly the same archive bytes as :meth:`RunArchive.save`,
    but line by line as the run progresses, each line flushed and synced
    so a crash leaves at most one detectable partial record.  Timing
    goes to a side file the determinism contract ignores.
    """

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.run_dir / ARCHIVE_FILENAME, "w", encoding="utf-8")
        self._timing = open(self.run_dir / TIMING_FILENAME, "w", encoding="utf-8")
        self._raw_count = 0

    def _write(self, rec: dict[str, Any]) -> None:
        rec = dict(rec)
        rec["checksum"] = _checksum(rec)
        self._fh.write(canonical_json(rec) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def write_header(self, header: Mapping[str, Any]) -> None:
        self._write(dict(header))

    def append_epoch(self, record: EpochRecord) -> None:
        self._write(record.to_record())

    def write_stop(self, stop: StopReason) -> None:
        self._write({"stop": stop.as_dict(), "type": "stop"})

    def write_metrics(self, metrics: Mapping[str, Any]) -> None:
        self._write({"metrics": dict(metrics), "type": "metrics"})

    def write_timing(self, epoch: int, wall_ms: float) -> None:
        self._timing.write(json.dumps({"epoch": epoch, "wall_ms": wall_ms}) + "\n")
        self._timing.flush()

    def write_raw_exchange(self, role: str, epoch: int, exchange: Mapping[str, Any]) -> None:
        raw_dir = self.run_dir / RAW_LLM_DIRNAME
        raw_dir.mkdir(exist_ok=True)
        self._raw_count += 1
        name = f"{self._raw_count:04d}-epoch{epoch}-{role}.json"
        (raw_dir / name).write_text(
            json.dumps(dict(exchange), indent=2, sort_keys=True), encoding="utf-8"
        )

    def close(self) -> None:
        self._fh.close()
        self._timing.close()


# --- attack log codec -------------------------------------------------------

ATTACK_LOG_KEYS = ("file", "code", "bug", "payload")


def encode_attack_log(entry: AttackLogEntry) -> str:
    """Serialize a finding as a JSON object with exactly the four keys
    file, code, bug, payload — in that order."""
    values = [entry.file, entry.code, entry.bug, entry.payload]
    for key, value in zip(ATTACK_LOG_KEYS, values):
        if not isinstance(value, str):
            raise CodecError(f"attack log field {key!r} must be a string, got {type(value).__name__}")
    obj = {key: value for key, value in zip(ATTACK_LOG_KEYS, values)}
    return json.dumps(obj, ensure_ascii=False)


def decode_attack_log(text: str) -> AttackLogEntry:
    """Exact inverse of :func:`encode_attack_log`.

    The text must be a JSON object with exactly the four known keys in
    their fixed order and string values; anything else (missing field,
    extra field, reordering) raises :class:`CodecError`.
    """
    try:
        pairs = json.loads(text, object_pairs_hook=lambda p: p)
    except ValueError as err:
        raise CodecError(f"attack log is not valid JSON: {err}") from None
    if not isinstance(pairs, list) or any(not isinstance(kv, tuple) for kv in pairs):
        raise CodecError("attack log must be a JSON object")
    keys = [k for k, _ in pairs]
    if keys != list(ATTACK_LOG_KEYS):
        raise CodecError(
            f"attack log must have exactly the keys {list(ATTACK_LOG_KEYS)} in order, got {keys}"
        )
    data = dict(pairs)
    for key in ATTACK_LOG_KEYS:
        if not isinstance(data[key], str):
            raise CodecError(f"attack log field {key!r} must be a string")
    return AttackLogEntry(
        file=data["file"], code=data["code"], bug=data["bug"], payload=data["payload"]
    )
