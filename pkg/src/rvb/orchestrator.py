"""Game loops: epochs, stopping rules, archives, replay.

One epoch is a full red phase (probe until the findings quota or nothing
proposable remains), a full blue phase (one remediation per finding),
and a verification pass that scores every known attack against the
resulting state.  The archive record of an epoch carries everything
needed to recompute its metrics, and the digest chain ties each record
to the exact action history that produced it.

Stopping is checked after every epoch in a fixed precedence order:

1. null production — neither side produced anything;
2. execution failure — the defender exhausted its retries;
3. metric convergence — the vulnerability count C stopped moving;
4. epoch budget spent.

An identically configured run replays to identical archive bytes; runs
with a remote defender cannot be re-executed, so replay degrades to
recomputing the metrics snapshot from the archived epochs.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

from .agents import (
    AgentConfig,
    AgentKind,
    Finding,
    RemoteBlueCyber,
    ScriptedBlueCyber,
    ScriptedGuardPatcher,
    ScriptedJailbreaker,
    ScriptedRedCyber,
)
from .archive import EpochRecord, RunArchive, RunWriter, StopKind, StopReason
from .beliefs import encode_actions
from .content import GuardRuleSet, TargetStub
from .cyber import (
    Patch,
    PatchKind,
    apply_patch,
    attempt_exploit,
    regression_check,
    vulnerability_count,
)
from .errors import ConfigError, RemediationFailureError
from .metrics import (
    CONTENT_COLUMNS,
    CYBER_COLUMNS,
    CyberOutcome,
    content_series,
    crde_from_records,
    cyber_series,
    union_rates,
)
from .scenarios import (
    RUN_SCHEMA,
    ContentScenario,
    CyberScenario,
    load_content_scenario,
    load_cyber_scenario,
    load_doc,
)


class Domain(Enum):
    CYBER = "cyber"
    CONTENT = "content"


class Mode(Enum):
    RVB = "rvb"
    PURE_BLUE = "pure-blue"


class ConvergenceRule(Enum):
    """How count_delay is read when testing C for convergence.

    COMPARISONS counts consecutive unchanged-value comparisons, the
    first comparison being initial state vs epoch 1.  EPOCHS asks for
    the last count_delay epoch values to be identical, which needs one
    more epoch to fire on the same series.
    """

    COMPARISONS = "comparisons"
    EPOCHS = "epochs"


@dataclass(frozen=True)
class RunConfig:
    """Everything about a run that is not the scenario itself."""

    name: str
    domain: Domain
    scenario_ref: str
    red: AgentConfig
    blue: AgentConfig
    mode: Mode = Mode.RVB
    seed: int = 0
    max_epoch: int = 5
    count_delay: int = 3
    convergence: ConvergenceRule = ConvergenceRule.COMPARISONS
    aat_scope: str = "total"
    scan: tuple[Patch, ...] = ()

    def __post_init__(self) -> None:
        if self.max_epoch < 1:
            raise ConfigError(f"max_epoch must be >= 1, got {self.max_epoch}")
        if self.count_delay < 1:
            raise ConfigError(f"count_delay must be >= 1, got {self.count_delay}")
        if self.aat_scope not in ("total", "inner"):
            raise ConfigError(f"aat_scope must be 'total' or 'inner', got {self.aat_scope!r}")
        if self.red.kind is AgentKind.REMOTE_LLM:
            raise ConfigError("remote play is wired for the defender only, not red")
        if self.domain is Domain.CONTENT and self.blue.kind is AgentKind.REMOTE_LLM:
            raise ConfigError("remote play is wired for the cyber defender only")
        if self.mode is Mode.PURE_BLUE:
            if self.domain is not Domain.CYBER:
                raise ConfigError("pure-blue mode exists for the cyber domain only")
            if not self.scan:
                raise ConfigError("pure-blue mode needs a scan action list")
        elif self.scan:
            raise ConfigError("a scan list only applies to pure-blue mode")

    @property
    def run_id(self) -> str:
        return f"{self.name}-{self.domain.value}-s{self.seed}"

    def snapshot(self) -> dict[str, Any]:
        """JSON-ready image of this config; replay rebuilds from it."""
        return {
            "aat_scope": self.aat_scope,
            "blue": self.blue.as_dict(),
            "convergence": self.convergence.value,
            "count_delay": self.count_delay,
            "domain": self.domain.value,
            "max_epoch": self.max_epoch,
            "mode": self.mode.value,
            "name": self.name,
            "red": self.red.as_dict(),
            "scan": [
                {"action": p.kind.value, "param": p.param, "path": p.target_path}
                for p in self.scan
            ],
            "scenario_ref": self.scenario_ref,
            "seed": self.seed,
        }

    @classmethod
    def from_snapshot(cls, snap: Mapping[str, Any]) -> "RunConfig":
        return cls(
            name=str(snap["name"]),
            domain=Domain(snap["domain"]),
            scenario_ref=str(snap.get("scenario_ref", "")),
            red=AgentConfig.from_dict(snap["red"]),
            blue=AgentConfig.from_dict(snap["blue"]),
            mode=Mode(snap.get("mode", "rvb")),
            seed=int(snap.get("seed", 0)),
            max_epoch=int(snap.get("max_epoch", 5)),
            count_delay=int(snap.get("count_delay", 3)),
            convergence=ConvergenceRule(snap.get("convergence", "comparisons")),
            aat_scope=str(snap.get("aat_scope", "total")),
            scan=tuple(_scan_patch(s) for s in snap.get("scan", ())),
        )


def _scan_patch(entry: Mapping[str, Any]) -> Patch:
    kind = PatchKind(str(entry["action"]))
    param = entry.get("param")
    return Patch(
        target_path=str(entry["path"]),
        kind=kind,
        param=(str(param) if param is not None else None),
    )


_DEFAULT_AGENTS = {
    Domain.CYBER: (AgentKind.SCRIPTED_RED, AgentKind.SCRIPTED_BLUE),
    Domain.CONTENT: (AgentKind.SCRIPTED_JAILBREAKER, AgentKind.SCRIPTED_GUARD_PATCHER),
}


def load_run_config(ref: str | Path) -> RunConfig:
    doc = load_doc(ref)
    if doc.get("schema") != RUN_SCHEMA:
        raise ConfigError(
            f"run config schema is {doc.get('schema')!r}, this build reads {RUN_SCHEMA!r}"
        )
    try:
        domain = Domain(str(doc.get("domain", "")))
    except ValueError:
        raise ConfigError(f"unknown domain {doc.get('domain')!r}") from None
    red_default, blue_default = _DEFAULT_AGENTS[domain]
    red_doc = dict(doc.get("red", {}))
    red_doc.setdefault("kind", red_default.value)
    blue_doc = dict(doc.get("blue", {}))
    blue_doc.setdefault("kind", blue_default.value)
    return RunConfig(
        name=str(doc.get("name", "run")),
        domain=domain,
        scenario_ref=str(doc.get("scenario", "")),
        red=AgentConfig.from_dict(red_doc),
        blue=AgentConfig.from_dict(blue_doc),
        mode=Mode(str(doc.get("mode", "rvb"))),
        seed=int(doc.get("seed", 0)),
        max_epoch=int(doc.get("max_epoch", 5)),
        count_delay=int(doc.get("count_delay", 3)),
        convergence=ConvergenceRule(str(doc.get("convergence", "comparisons"))),
        aat_scope=str(doc.get("aat_scope", "total")),
        scan=tuple(_scan_patch(s) for s in doc.get("scan", ())),
    )


def load_scenario_for(cfg: RunConfig) -> CyberScenario | ContentScenario:
    doc = load_doc(cfg.scenario_ref)
    if cfg.domain is Domain.CYBER:
        return load_cyber_scenario(doc)
    return load_content_scenario(doc)


# --- stopping ---------------------------------------------------------------


def converged(
    initial_count: int,
    series: Sequence[int],
    count_delay: int,
    rule: ConvergenceRule = ConvergenceRule.COMPARISONS,
) -> bool:
    """Has the C metric stopped moving?

    COMPARISONS: the last ``count_delay`` adjacent comparisons over
    [initial] + series all came back unchanged.  EPOCHS: the last
    ``count_delay`` epoch values exist and are identical.
    """
    if rule is ConvergenceRule.EPOCHS:
        if len(series) < count_delay:
            return False
        tail = series[-count_delay:]
        return all(v == tail[0] for v in tail)
    values = [initial_count, *series]
    unchanged = 0
    for i in range(len(values) - 1, 0, -1):
        if values[i] == values[i - 1]:
            unchanged += 1
        else:
            break
    return unchanged >= count_delay


def _evaluate_stop(
    *,
    epoch: int,
    cfg: RunConfig,
    red_produced: bool,
    blue_produced: bool,
    remediation_failed: bool,
    initial_count: int,
    c_series: Sequence[int],
) -> StopReason | None:
    """Apply the four stop criteria in precedence order."""
    if not red_produced and not blue_produced:
        return StopReason(
            StopKind.NULL_PRODUCTION, epoch, "neither side produced anything"
        )
    if remediation_failed:
        return StopReason(
            StopKind.EXECUTION_FAILURE, epoch, "defender retries exhausted"
        )
    if converged(initial_count, c_series, cfg.count_delay, cfg.convergence):
        return StopReason(
            StopKind.METRIC_CONVERGENCE,
            epoch,
            f"C unchanged for {cfg.count_delay} {cfg.convergence.value}",
        )
    if epoch >= cfg.max_epoch:
        return StopReason(StopKind.MAX_EPOCHS, epoch, f"epoch budget {cfg.max_epoch} spent")
    return None


# --- cyber ------------------------------------------------------------------


def _zero_usage() -> dict[str, Any]:
    return {"input_tokens": 0, "output_tokens": 0, "usage_missing": False}


def _verify_cyber(scenario: CyberScenario, env: Any) -> list[dict[str, Any]]:
    """Score every known attack against the current state.

    The regression bit is a property of the whole service, so each
    case shares it: a defense that broke the service gets credit for
    stopping the attack but not for a true defense.
    """
    r_reg = regression_check(env)
    out = []
    for attack in scenario.attacks:
        out.append(
            {
                "attack_id": attack.id,
                "r_att": attempt_exploit(env, attack.exploit),
                "r_reg": r_reg,
            }
        )
    return out


def _finding_dict(f: Finding) -> dict[str, Any]:
    return {
        "attack_id": f.attack_id,
        "exploit": {
            "class": f.exploit.payload_class.value,
            "param": f.exploit.param,
            "path": f.exploit.target_path,
            "payload": f.exploit.payload,
        },
        "log": {
            "bug": f.log.bug,
            "code": f.log.code,
            "file": f.log.file,
            "payload": f.log.payload,
        },
        "turn": f.turn,
    }


def _make_blue(cfg: RunConfig, scenario: CyberScenario):
    if cfg.blue.kind is AgentKind.REMOTE_LLM:
        return RemoteBlueCyber(cfg.blue)
    return ScriptedBlueCyber(cfg.blue.limits, style=scenario.blue_style)


def run_cyber_game(
    scenario: CyberScenario,
    cfg: RunConfig,
    writer: RunWriter | None = None,
    blue_agent: Any | None = None,
) -> RunArchive:
    env = scenario.environment
    rng = random.Random(cfg.seed)
    red = ScriptedRedCyber(
        scenario.attacks, cfg.red.limits, findings_per_epoch=scenario.findings_per_epoch
    )
    blue = blue_agent if blue_agent is not None else _make_blue(cfg, scenario)
    archive = RunArchive.new(
        {"run": cfg.snapshot(), "scenario": dict(scenario.doc)}, cfg.seed, cfg.domain.value
    )
    if writer:
        writer.write_header(archive.header)
    initial_count = vulnerability_count(env)
    c_series: list[int] = []
    history: list[tuple[int, list[dict[str, Any]]]] = []
    stop: StopReason | None = None
    for epoch in range(1, cfg.max_epoch + 1):
        t0 = time.monotonic()
        c_before = vulnerability_count(env)
        digest_before = encode_actions(history).digest

        red.begin_epoch(epoch)
        findings: list[Finding] = []
        while len(findings) < scenario.findings_per_epoch:
            found = red.step(lambda exploit: attempt_exploit(env, exploit))
            if found is None:
                break
            findings.append(found)

        blue_actions: list[dict[str, Any]] = []
        blue_failures: list[dict[str, Any]] = []
        remediation_failed = False
        blue_usage = _zero_usage()
        for finding in findings:
            try:
                result = blue.step(
                    finding.log, env, lambda patch: apply_patch(env, patch, rng)
                )
            except RemediationFailureError as err:
                remediation_failed = True
                blue_failures.append(
                    {
                        "attack_id": finding.attack_id,
                        "attempts": [dict(a) for a in err.attempts],
                        "error": str(err),
                    }
                )
                break
            env = result.environment
            blue_actions.append(
                {
                    **result.patch.as_dict(),
                    "attack_id": finding.attack_id,
                    "failed_attempts": len(result.failed_attempts),
                }
            )
            blue_usage["input_tokens"] += result.input_tokens
            blue_usage["output_tokens"] += result.output_tokens
            blue_usage["usage_missing"] = blue_usage["usage_missing"] or result.usage_missing
            if writer:
                for exchange in result.exchanges:
                    writer.write_raw_exchange("blue", epoch, exchange)

        history.append((epoch, list(blue_actions)))
        record = EpochRecord(
            epoch=epoch,
            digest_before=digest_before,
            digest_after=encode_actions(history).digest,
            red_findings=tuple(_finding_dict(f) for f in findings),
            blue_actions=tuple(blue_actions),
            outcomes=tuple(_verify_cyber(scenario, env)),
            c_before=c_before,
            c_after=vulnerability_count(env),
            token_usage={"blue": blue_usage, "red": _zero_usage()},
            remediation_failed=remediation_failed,
            blue_failures=tuple(blue_failures),
            probe_trace=red.epoch_trace,
        )
        archive.append_epoch(record)
        if writer:
            writer.append_epoch(record)
            writer.write_timing(epoch, (time.monotonic() - t0) * 1000.0)
        c_series.append(record.c_after)
        stop = _evaluate_stop(
            epoch=epoch,
            cfg=cfg,
            red_produced=bool(findings),
            blue_produced=bool(blue_actions),
            remediation_failed=remediation_failed,
            initial_count=initial_count,
            c_series=c_series,
        )
        if stop:
            break
    assert stop is not None
    archive.stop = stop
    archive.metrics = _cyber_metrics(archive, cfg)
    if writer:
        writer.write_stop(stop)
        writer.write_metrics(archive.metrics)
    return archive


def run_pure_blue_game(
    scenario: CyberScenario, cfg: RunConfig, writer: RunWriter | None = None
) -> RunArchive:
    """Defender-only baseline: apply the scan plan one action per epoch,
    score every known attack after each action."""
    env = scenario.environment
    rng = random.Random(cfg.seed)
    archive = RunArchive.new(
        {"run": cfg.snapshot(), "scenario": dict(scenario.doc)}, cfg.seed, cfg.domain.value
    )
    if writer:
        writer.write_header(archive.header)
    initial_count = vulnerability_count(env)
    c_series: list[int] = []
    history: list[tuple[int, list[dict[str, Any]]]] = []
    stop: StopReason | None = None
    for epoch in range(1, cfg.max_epoch + 1):
        t0 = time.monotonic()
        c_before = vulnerability_count(env)
        digest_before = encode_actions(history).digest
        blue_actions: list[dict[str, Any]] = []
        if epoch <= len(cfg.scan):
            patch = cfg.scan[epoch - 1]
            env = apply_patch(env, patch, rng)
            blue_actions.append(
                {**patch.as_dict(), "attack_id": None, "failed_attempts": 0}
            )
        history.append((epoch, list(blue_actions)))
        record = EpochRecord(
            epoch=epoch,
            digest_before=digest_before,
            digest_after=encode_actions(history).digest,
            red_findings=(),
            blue_actions=tuple(blue_actions),
            outcomes=tuple(_verify_cyber(scenario, env)),
            c_before=c_before,
            c_after=vulnerability_count(env),
            token_usage={"blue": _zero_usage(), "red": _zero_usage()},
        )
        archive.append_epoch(record)
        if writer:
            writer.append_epoch(record)
            writer.write_timing(epoch, (time.monotonic() - t0) * 1000.0)
        c_series.append(record.c_after)
        stop = _evaluate_stop(
            epoch=epoch,
            cfg=cfg,
            red_produced=False,
            blue_produced=bool(blue_actions),
            remediation_failed=False,
            initial_count=initial_count,
            c_series=c_series,
        )
        if stop:
            break
    assert stop is not None
    archive.stop = stop
    archive.metrics = _cyber_metrics(archive, cfg)
    if writer:
        writer.write_stop(stop)
        writer.write_metrics(archive.metrics)
    return archive


def _cyber_metrics(archive: RunArchive, cfg: RunConfig) -> dict[str, Any]:
    snapshot: dict[str, Any] = {
        "columns": list(CYBER_COLUMNS),
        "domain": Domain.CYBER.value,
        "rows": cyber_series(archive.epochs),
    }
    if cfg.mode is Mode.PURE_BLUE:
        rounds = [
            [CyberOutcome(int(o["r_att"]), int(o["r_reg"])) for o in rec.outcomes]
            for rec in archive.epochs
        ]
        union = union_rates(rounds)
        snapshot["union"] = {
            "fdsr": union.fdsr,
            "sdr": union.sdr,
            "tdsr": union.tdsr,
        }
    return snapshot


# --- content ----------------------------------------------------------------


def run_content_game(
    scenario: ContentScenario, cfg: RunConfig, writer: RunWriter | None = None
) -> RunArchive:
    guard = GuardRuleSet()
    stub = TargetStub(resistance=scenario.resistance)
    jailbreaker = ScriptedJailbreaker(scenario.transforms, cfg.red.limits)
    patcher = ScriptedGuardPatcher(
        sorted(scenario.harmful_tags),
        min_support=scenario.min_support,
        fpr_threshold=scenario.fpr_threshold,
        benign_per_attack=scenario.benign_per_attack,
        seed=cfg.seed,
    )
    archive = RunArchive.new(
        {"run": cfg.snapshot(), "scenario": dict(scenario.doc)}, cfg.seed, cfg.domain.value
    )
    if writer:
        writer.write_header(archive.header)
    tasks = sorted(scenario.tasks, key=lambda t: t.id)
    initial_count = len(tasks)
    c_series: list[int] = []
    history: list[tuple[int, list[dict[str, Any]]]] = []
    c_before = initial_count
    stop: StopReason | None = None
    for epoch in range(1, cfg.max_epoch + 1):
        t0 = time.monotonic()
        digest_before = encode_actions(history).digest
        episodes = [jailbreaker.run_episode(task, guard, stub) for task in tasks]
        successes = [ep for ep in episodes if ep.success]
        attacks = [ep.final_prompt for ep in successes]
        step = patcher.step(guard, attacks, epoch)
        guard = step.guard
        blue_actions = [rule.as_dict() for rule in step.added]
        history.append((epoch, list(blue_actions)))
        record = EpochRecord(
            epoch=epoch,
            digest_before=digest_before,
            digest_after=encode_actions(history).digest,
            red_findings=tuple(ep.as_dict() for ep in successes),
            blue_actions=tuple(blue_actions),
            outcomes=(),
            c_before=c_before,
            c_after=len(attacks),
            token_usage={"blue": _zero_usage(), "red": _zero_usage()},
            guard_version=guard.version,
            guard_rules=tuple(r.as_dict() for r in guard.rules),
            attack_set=tuple(p.as_dict() for p in attacks),
            benign_set=tuple(p.as_dict() for p in step.benign),
            episodes=tuple(ep.as_dict() for ep in episodes),
        )
        archive.append_epoch(record)
        if writer:
            writer.append_epoch(record)
            writer.write_timing(epoch, (time.monotonic() - t0) * 1000.0)
        c_series.append(record.c_after)
        c_before = record.c_after
        stop = _evaluate_stop(
            epoch=epoch,
            cfg=cfg,
            red_produced=bool(successes),
            blue_produced=bool(step.added),
            remediation_failed=False,
            initial_count=initial_count,
            c_series=c_series,
        )
        if stop:
            break
    assert stop is not None
    archive.stop = stop
    archive.metrics = _content_metrics(archive, cfg, stub)
    if writer:
        writer.write_stop(stop)
        writer.write_metrics(archive.metrics)
    return archive


def _content_metrics(archive: RunArchive, cfg: RunConfig, stub: TargetStub) -> dict[str, Any]:
    cells = crde_from_records(archive.epochs, stub)
    return {
        "aat_scope": cfg.aat_scope,
        "columns": list(CONTENT_COLUMNS),
        "crde": [[i, j, cells[(i, j)]] for (i, j) in sorted(cells)],
        "domain": Domain.CONTENT.value,
        "rows": content_series(archive.epochs, stub, aat_scope=cfg.aat_scope),
    }


# --- entry points -----------------------------------------------------------


@dataclass(frozen=True)
class RunResult:
    archive: RunArchive
    stop: StopReason
    run_dir: Path | None = None


def execute(
    cfg: RunConfig,
    scenario: CyberScenario | ContentScenario | None = None,
    writer: RunWriter | None = None,
    blue_agent: Any | None = None,
) -> RunArchive:
    if scenario is None:
        scenario = load_scenario_for(cfg)
    if cfg.domain is Domain.CYBER:
        assert isinstance(scenario, CyberScenario)
        if cfg.mode is Mode.PURE_BLUE:
            return run_pure_blue_game(scenario, cfg, writer)
        return run_cyber_game(scenario, cfg, writer, blue_agent=blue_agent)
    assert isinstance(scenario, ContentScenario)
    return run_content_game(scenario, cfg, writer)


def run(
    cfg: RunConfig,
    out_root: str | Path | None = None,
    scenario: CyberScenario | ContentScenario | None = None,
    blue_agent: Any | None = None,
) -> RunResult:
    """Run a full game; optionally stream the run directory as it goes."""
    writer = None
    run_dir = None
    if out_root is not None:
        run_dir = Path(out_root) / cfg.run_id
        writer = RunWriter(run_dir)
    try:
        archive = execute(cfg, scenario=scenario, writer=writer, blue_agent=blue_agent)
    finally:
        if writer:
            writer.close()
    assert archive.stop is not None
    return RunResult(archive=archive, stop=archive.stop, run_dir=run_dir)


def _scenario_from_header(header: Mapping[str, Any]) -> CyberScenario | ContentScenario:
    doc = header.get("config", {}).get("scenario")
    if not isinstance(doc, Mapping):
        raise ConfigError("archive header carries no inlined scenario")
    if doc.get("domain") == Domain.CYBER.value:
        return load_cyber_scenario(doc)
    return load_content_scenario(doc)


def is_replayable(archive: RunArchive) -> bool:
    """Scripted runs re-execute; remote-defender runs are metrics-only."""
    blue = archive.header.get("config", {}).get("run", {}).get("blue", {})
    return blue.get("kind") != AgentKind.REMOTE_LLM.value


@dataclass(frozen=True)
class ReplayReport:
    ok: bool
    mode: str  # "full" | "metrics-only"
    detail: str = ""


def replay(path: str | Path) -> ReplayReport:
    """Re-run an archive from its own header and compare.

    Full replay re-executes the game and demands byte-identical archive
    lines.  A remote-defender archive recomputes the metrics snapshot
    from the stored epochs instead and compares only that.
    """
    from .archive import first_divergence

    original = RunArchive.load(path)
    cfg = RunConfig.from_snapshot(original.header.get("config", {}).get("run", {}))
    if not is_replayable(original):
        scenario = _scenario_from_header(original.header)
        stub = TargetStub(
            resistance=getattr(scenario, "resistance", frozenset())
        )
        if cfg.domain is Domain.CYBER:
            recomputed = _cyber_metrics(original, cfg)
        else:
            recomputed = _content_metrics(original, cfg, stub)
        if recomputed == original.metrics:
            return ReplayReport(ok=True, mode="metrics-only")
        return ReplayReport(
            ok=False, mode="metrics-only", detail="stored metrics do not match the epochs"
        )
    scenario = _scenario_from_header(original.header)
    fresh = execute(cfg, scenario=scenario)
    divergence = first_divergence(original, fresh)
    if divergence is None:
        return ReplayReport(ok=True, mode="full")
    return ReplayReport(ok=False, mode="full", detail=divergence)
