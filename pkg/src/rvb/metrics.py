"""Defense and attack metrics computed from verification outcomes.

Cyber side — every round the full test-case set is re-verified and each
case yields two bits, attack success ``r_att`` and service regression
``r_reg``.  From a round's multiset of outcomes:

* TDSR counts cases with (r_att, r_reg) = (0, 1): truly defended, the
  attack fails and the service still works;
* FDSR counts cases with r_att = 0: functionally defended, by any means
  including breaking the feature;
* SDR counts cases with (0, 0): "defended" by side effect — the attack
  fails only because the service around it is broken.

By construction SDR = FDSR - TDSR; the identity is exact on the counts
and holds to float precision on the rates.  ASC is the running size of
the union of distinct successful exploit identities.

Content side — DSR is one minus the attack success rate over the task
set, AAT averages attempts over *successful* episodes only (there is no
honest number for a set with no successes, so that case is undefined
rather than zero), CRDE replays each guard version against the frozen
historical attack batches, and FPR is the benign block rate.

A metric with no value on its input raises
:class:`UndefinedMetricError`; cells inside a CRDE matrix use ``None``
and render as "undefined".  Nothing here ever silently reports 0 or 1
for an empty set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .archive import EpochRecord
from .content import (
    GuardRuleSet,
    Prompt,
    TargetStub,
    classify,
    is_attack_success,
    Verdict,
)
from .cyber import CyberOutcome
from .errors import UndefinedMetricError

CYBER_COLUMNS = ("epoch", "tdsr", "fdsr", "sdr", "asc")
CONTENT_COLUMNS = ("epoch", "dsr", "aat", "fpr")


@dataclass(frozen=True)
class CyberRates:
    """One round's defense rates plus the exact counts behind them."""

    tdsr: float
    fdsr: float
    sdr: float
    cases: int
    true_count: int
    functional_count: int
    side_effect_count: int


def cyber_rates(outcomes: Sequence[CyberOutcome]) -> CyberRates:
    """TDSR / FDSR / SDR over one round's outcome multiset."""
    if not outcomes:
        raise UndefinedMetricError("cyber rates are undefined over an empty outcome set")
    n = len(outcomes)
    true_count = sum(1 for o in outcomes if o.r_att == 0 and o.r_reg == 1)
    functional_count = sum(1 for o in outcomes if o.r_att == 0)
    side_count = sum(1 for o in outcomes if o.r_att == 0 and o.r_reg == 0)
    return CyberRates(
        tdsr=true_count / n,
        fdsr=functional_count / n,
        sdr=side_count / n,
        cases=n,
        true_count=true_count,
        functional_count=functional_count,
        side_effect_count=side_count,
    )


def union_rates(rounds: Sequence[Sequence[CyberOutcome]]) -> CyberRates:
    """Per-vulnerability best-of across rounds (baseline union semantics).

    Case i counts as functionally defended when any round stopped its
    attack, truly defended when some round stopped it with the service
    intact, and a side-effect defense otherwise.  All rounds must cover
    the same case list in the same order.
    """
    if not rounds or not rounds[0]:
        raise UndefinedMetricError("union rates are undefined without outcomes")
    n = len(rounds[0])
    if any(len(r) != n for r in rounds):
        raise ValueError("every round must cover the same test cases")
    true_count = 0
    functional_count = 0
    for case in range(n):
        column = [r[case] for r in rounds]
        if any(o.r_att == 0 for o in column):
            functional_count += 1
            if any(o.r_att == 0 and o.r_reg == 1 for o in column):
                true_count += 1
    side_count = functional_count - true_count
    return CyberRates(
        tdsr=true_count / n,
        fdsr=functional_count / n,
        sdr=side_count / n,
        cases=n,
        true_count=true_count,
        functional_count=functional_count,
        side_effect_count=side_count,
    )


def asc(exploit_sets: Sequence[Iterable[tuple[str, str, str]]]) -> list[int]:
    """Attack-surface coverage: cumulative count of distinct successful
    exploit identities (path, param, payload class) per round."""
    seen: set[tuple[str, str, str]] = set()
    out = []
    for round_set in exploit_sets:
        seen.update(tuple(e) for e in round_set)
        out.append(len(seen))
    return out


def content_dsr(successes: int, total: int) -> float:
    """Defense success rate: 1 - (successful attacks / task count)."""
    if total <= 0:
        raise UndefinedMetricError("defense success rate is undefined without tasks")
    if not 0 <= successes <= total:
        raise ValueError(f"successes must lie in [0, {total}], got {successes}")
    return 1.0 - successes / total


def _episode_fields(episode: Any) -> tuple[bool, int, int]:
    if isinstance(episode, Mapping):
        return (
            bool(episode["success"]),
            int(episode["attempts_used"]),
            int(episode.get("final_round_attempts", 0)),
        )
    return (
        bool(episode.success),
        int(episode.attempts_used),
        int(getattr(episode, "final_round_attempts", 0)),
    )


def aat(episodes: Sequence[Any], scope: str = "total") -> float:
    """Average attempts-to-attack over the successful episodes only.

    ``scope`` picks the attempt counter: "total" spans the whole episode,
    "inner" only the attempts inside the outer round that succeeded.
    No successes means no value — UndefinedMetricError, never 0.
    """
    if scope not in ("total", "inner"):
        raise ValueError(f"unknown aat scope {scope!r}")
    counts = []
    for episode in episodes:
        success, total_attempts, inner_attempts = _episode_fields(episode)
        if success:
            counts.append(inner_attempts if scope == "inner" else total_attempts)
    if not counts:
        raise UndefinedMetricError("average attempts are undefined with no successful episode")
    return sum(counts) / len(counts)


def fpr(guard: GuardRuleSet, benign: Sequence[Prompt]) -> float:
    """Fraction of benign prompts the guard blocks."""
    if not benign:
        raise UndefinedMetricError("false positive rate is undefined over an empty benign set")
    blocked = sum(1 for p in benign if classify(guard, p) is Verdict.BLOCKED)
    return blocked / len(benign)


def crde(
    guards: Mapping[int, GuardRuleSet],
    attack_sets: Mapping[int, Sequence[Prompt]],
    stub: TargetStub,
) -> dict[tuple[int, int], float | None]:
    """Cross-round defense effectiveness matrix.

    Cell (i, j), for j <= i, is the fraction of round-j attacks that
    guard version i stops (directly or because the stub refuses).  Rule
    sets are additive, so each column is non-decreasing in i.  An empty
    round-j attack set makes every (·, j) cell undefined (None).
    """
    out: dict[tuple[int, int], float | None] = {}
    for i in sorted(guards):
        for j in sorted(attack_sets):
            if j > i:
                continue
            attacks = attack_sets[j]
            if not attacks:
                out[(i, j)] = None
                continue
            stopped = sum(1 for p in attacks if not is_attack_success(guards[i], stub, p))
            out[(i, j)] = stopped / len(attacks)
    return out


def ood_eval(
    guards: Mapping[str, GuardRuleSet],
    corpus: Sequence[Prompt],
    stub: TargetStub,
) -> dict[str, float]:
    """Defense success rate of each labeled guard over an external corpus."""
    if not corpus:
        raise UndefinedMetricError("corpus is empty")
    out = {}
    for label, guard in guards.items():
        successes = sum(1 for p in corpus if is_attack_success(guard, stub, p))
        out[label] = content_dsr(successes, len(corpus))
    return out


# --- series reconstruction from archived epochs -----------------------------

def cyber_series(records: Sequence[EpochRecord]) -> list[dict[str, Any]]:
    """Per-round cyber metric rows from archived epochs."""
    exploit_sets = []
    for rec in records:
        identities = []
        for finding in rec.red_findings:
            e = finding.get("exploit", {})
            identities.append((e.get("path", ""), e.get("param", ""), e.get("class", "")))
        exploit_sets.append(identities)
    coverage = asc(exploit_sets)
    rows = []
    for rec, cov in zip(records, coverage):
        outcomes = [CyberOutcome(int(o["r_att"]), int(o["r_reg"])) for o in rec.outcomes]
        rates = cyber_rates(outcomes)
        rows.append(
            {
                "epoch": rec.epoch,
                "tdsr": rates.tdsr,
                "fdsr": rates.fdsr,
                "sdr": rates.sdr,
                "asc": cov,
            }
        )
    return rows


def _stub_from_header(header: Mapping[str, Any]) -> TargetStub:
    scenario = header.get("config", {}).get("scenario", {})
    return TargetStub(resistance=frozenset(scenario.get("resistance", ())))


def content_series(
    records: Sequence[EpochRecord],
    stub: TargetStub,
    aat_scope: str = "total",
) -> list[dict[str, Any]]:
    """Per-round content metric rows from archived epochs.

    ``aat`` and ``fpr`` may be None for a round (no successful episodes /
    no benign set); exports render those as "undefined".
    """
    rows = []
    for rec in records:
        episodes = list(rec.episodes or ())
        successes = len(rec.attack_set or ())
        dsr = content_dsr(successes, len(episodes)) if episodes else None
        try:
            round_aat: float | None = aat(episodes, scope=aat_scope)
        except UndefinedMetricError:
            round_aat = None
        guard = GuardRuleSet.from_dict(
            {"rules": list(rec.guard_rules or ()), "version": rec.guard_version or 0}
        )
        benign = [Prompt.from_dict(p) for p in (rec.benign_set or ())]
        round_fpr = fpr(guard, benign) if benign else None
        rows.append(
            {
                "epoch": rec.epoch,
                "dsr": dsr,
                "aat": round_aat,
                "fpr": round_fpr,
            }
        )
    return rows


def crde_from_records(
    records: Sequence[EpochRecord], stub: TargetStub
) -> dict[tuple[int, int], float | None]:
    """Replay archived guard versions against archived attack batches."""
    guards = {}
    attack_sets = {}
    for rec in records:
        guards[rec.epoch] = GuardRuleSet.from_dict(
            {"rules": list(rec.guard_rules or ()), "version": rec.guard_version or 0}
        )
        attack_sets[rec.epoch] = [Prompt.from_dict(p) for p in (rec.attack_set or ())]
    return crde(guards, attack_sets, stub)


# --- export rendering -------------------------------------------------------

def _cell(value: Any) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".6f")
    return str(value)


def render_tabular(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> str:
    """Round-indexed CSV with the fixed metric column vocabulary."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_cell(row.get(col)) for col in columns))
    return "\n".join(lines) + "\n"


def render_records(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> str:
    """One JSON record per line, fixed key order via sorted keys."""
    out = []
    for row in rows:
        rec = {col: row.get(col) for col in columns}
        out.append(json.dumps(rec, sort_keys=True))
    return "\n".join(out) + "\n"


def render_crde(cells: Mapping[tuple[int, int], float | None]) -> str:
    """CRDE as (guard round, attack round, value) triples."""
    lines = ["i,j,value"]
    for (i, j) in sorted(cells):
        lines.append(f"{i},{j},{_cell(cells[(i, j)])}")
    return "\n".join(lines) + "\n"
