"""Guardrail environment: prompts as feature sets, rules as conjunctions.

A prompt is reduced by a deterministic tokenizer to a set of feature
tags (lowercase word tokens).  A guard rule is a non-empty conjunction
of tags; a prompt is blocked when any rule's tag set is contained in the
prompt's features.  The guarded model behind the guard is a stub that
refuses whenever a prompt overlaps its resistance tags — enough surface
to make jailbreak episodes and rule learning meaningful without any
model in the loop.

Rule sets are additive and versioned: an update may only append rules
and must increment the version, so anything an old guard blocked stays
blocked forever.  New rules are mined from the attacks that got through
(frequent feature combinations) and validated against benign traffic
before they are accepted.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Any, Iterable, Mapping, Sequence

from .errors import NullProductionError, ScenarioError

_TOKEN = re.compile(r"[a-z0-9_]+")

# Innocuous topic tags used when deriving benign near-misses of an attack.
BENIGN_FILLERS = (
    "baking",
    "carpentry",
    "chess",
    "cycling",
    "gardening",
    "painting",
    "photography",
    "stargazing",
)


def extract_features(text: str) -> frozenset[str]:
    """Deterministic tokenizer: lowercase word tokens as feature tags."""
    return frozenset(_TOKEN.findall(text.lower()))


class Verdict(Enum):
    BLOCKED = "blocked"
    ALLOWED = "allowed"


class TargetResponse(Enum):
    COMPLY = "comply"
    REFUSE = "refuse"


@dataclass(frozen=True)
class Prompt:
    """A prompt plus its derived feature tags.

    ``from_text`` derives the features with the bundled tokenizer; the
    explicit constructor exists for transformed prompts whose features
    are produced by feature rewrites (their text is the canonical join
    of the tags, so tokenizing it reproduces the features).
    """

    id: str
    text: str
    features: frozenset[str]
    harmful: bool

    @classmethod
    def from_text(cls, id: str, text: str, harmful: bool) -> "Prompt":
        return cls(id=id, text=text, features=extract_features(text), harmful=harmful)

    @classmethod
    def from_features(cls, id: str, features: Iterable[str], harmful: bool) -> "Prompt":
        tags = frozenset(features)
        return cls(id=id, text=" ".join(sorted(tags)), features=tags, harmful=harmful)

    def as_dict(self) -> dict[str, Any]:
        return {
            "features": sorted(self.features),
            "harmful": self.harmful,
            "id": self.id,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Prompt":
        return cls(
            id=str(d["id"]),
            text=str(d["text"]),
            features=frozenset(d["features"]),
            harmful=bool(d["harmful"]),
        )


@dataclass(frozen=True)
class GuardRule:
    """Conjunctive predicate over feature tags, with mining provenance."""

    id: str
    predicate: frozenset[str]
    round_added: int
    source_attacks: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.predicate:
            raise ValueError("guard rule predicate must be a non-empty conjunction")

    def matches(self, prompt: Prompt) -> bool:
        return self.predicate <= prompt.features

    def as_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "predicate": sorted(self.predicate),
            "round_added": self.round_added,
            "source_attacks": list(self.source_attacks),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GuardRule":
        return cls(
            id=str(d["id"]),
            predicate=frozenset(d["predicate"]),
            round_added=int(d["round_added"]),
            source_attacks=tuple(d.get("source_attacks", ())),
        )


@dataclass(frozen=True)
class GuardRuleSet:
    """Ordered, versioned rule collection.  Updates append, never edit."""

    rules: tuple[GuardRule, ...] = ()
    version: int = 0

    def __post_init__(self) -> None:
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ValueError("guard rule ids must be unique")

    def extended(self, new_rules: Sequence[GuardRule]) -> "GuardRuleSet":
        """Successor rule set: same rules plus ``new_rules``, version + 1."""
        return GuardRuleSet(self.rules + tuple(new_rules), self.version + 1)

    def as_dict(self) -> dict[str, Any]:
        return {"rules": [r.as_dict() for r in self.rules], "version": self.version}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GuardRuleSet":
        return cls(
            rules=tuple(GuardRule.from_dict(r) for r in d.get("rules", ())),
            version=int(d.get("version", 0)),
        )


@dataclass(frozen=True)
class TargetStub:
    """Deterministic stand-in for the guarded model.

    Refuses whenever the prompt's features overlap its resistance tags;
    otherwise it complies.  Built-in alignment, reduced to a set test.
    """

    resistance: frozenset[str] = frozenset()


def classify(guard: GuardRuleSet, prompt: Prompt) -> Verdict:
    """Blocked iff some rule's conjunction is contained in the features."""
    for rule in guard.rules:
        if rule.matches(prompt):
            return Verdict.BLOCKED
    return Verdict.ALLOWED


def target_respond(stub: TargetStub, prompt: Prompt) -> TargetResponse:
    """Stub behavior for a prompt that already passed the guard."""
    if stub.resistance & prompt.features:
        return TargetResponse.REFUSE
    return TargetResponse.COMPLY


def is_attack_success(guard: GuardRuleSet, stub: TargetStub, prompt: Prompt) -> bool:
    """An attack lands when the guard allows it and the stub complies."""
    return (
        classify(guard, prompt) is Verdict.ALLOWED
        and target_respond(stub, prompt) is TargetResponse.COMPLY
    )


def _frequent_itemsets(featuresets: Sequence[frozenset[str]], min_count: int) -> dict[frozenset[str], int]:
    """Classic level-wise enumeration of frequent feature combinations.

    Inputs are tiny (attack batches, a handful of tags each), so the
    plain apriori walk is both fast and easy to check by hand.
    """
    counts: dict[frozenset[str], int] = {}
    singles: dict[frozenset[str], int] = {}
    for fs in featuresets:
        for tag in fs:
            key = frozenset({tag})
            singles[key] = singles.get(key, 0) + 1
    level = {k: c for k, c in singles.items() if c >= min_count}
    counts.update(level)
    while level:
        items = sorted(level.keys(), key=lambda s: sorted(s))
        candidates = set()
        for a, b in combinations(items, 2):
            joined = a | b
            if len(joined) == len(next(iter(level))) + 1:
                candidates.add(joined)
        next_level: dict[frozenset[str], int] = {}
        for cand in candidates:
            support = sum(1 for fs in featuresets if cand <= fs)
            if support >= min_count:
                next_level[cand] = support
        counts.update(next_level)
        level = next_level
    return counts


def _maximal(itemsets: Iterable[frozenset[str]]) -> list[frozenset[str]]:
    sets = list(itemsets)
    return [s for s in sets if not any(s < other for other in sets)]


def augment_rules(
    guard: GuardRuleSet,
    attacks: Sequence[Prompt],
    min_support: float = 0.5,
    round_index: int = 1,
) -> list[GuardRule]:
    """Mine candidate rules from a batch of attacks that bypassed the guard.

    Candidates are the maximal feature combinations present in at least
    ``min_support`` of the attack batch and absent from the guard; each
    one blocks at least one input attack by construction.  Raises
    :class:`NullProductionError` when nothing qualifies.  The attacks
    must all be bypasses of ``guard`` — a blocked input means the caller
    fed the wrong batch.
    """
    if not attacks:
        raise NullProductionError("no attacks to mine rules from")
    if not 0.0 < min_support <= 1.0:
        raise ValueError(f"min_support must lie in (0, 1], got {min_support}")
    for p in attacks:
        if classify(guard, p) is Verdict.BLOCKED:
            raise ValueError(f"attack {p.id!r} is already blocked by the guard")

    n = len(attacks)
    min_count = max(1, -(-int(min_support * n * 1e9) // 10**9))  # ceil without float drift
    featuresets = [p.features for p in attacks]
    frequent = _frequent_itemsets(featuresets, min_count)
    existing = {r.predicate for r in guard.rules}
    fresh = [s for s in _maximal(frequent.keys()) if s not in existing]
    fresh.sort(key=lambda s: sorted(s))

    candidates = []
    for k, predicate in enumerate(fresh, start=1):
        supporters = tuple(sorted(p.id for p in attacks if predicate <= p.features))
        assert supporters, "a frequent combination always occurs in some attack"
        candidates.append(
            GuardRule(
                id=f"g{round_index}-{k}",
                predicate=predicate,
                round_added=round_index,
                source_attacks=supporters,
            )
        )
    if not candidates:
        raise NullProductionError(
            f"no feature combination reaches support {min_support} across {n} attacks"
        )
    return candidates


def validate_rules(
    guard: GuardRuleSet,
    candidates: Sequence[GuardRule],
    benign: Sequence[Prompt],
    fpr_threshold: float = 0.05,
) -> tuple[GuardRuleSet, list[GuardRule], list[GuardRule]]:
    """Accept candidates whose standalone benign hit rate stays tolerable.

    Each candidate is scored alone against the benign set; those at or
    under ``fpr_threshold`` are appended to the guard.  Returns the
    successor guard (version incremented even when everything was
    rejected — the round happened), plus accepted and rejected lists.
    """
    if not benign:
        raise ValueError("benign validation set must not be empty")
    accepted: list[GuardRule] = []
    rejected: list[GuardRule] = []
    for rule in candidates:
        hits = sum(1 for p in benign if rule.matches(p))
        rate = hits / len(benign)
        if rate <= fpr_threshold:
            accepted.append(rule)
        else:
            rejected.append(rule)
    return guard.extended(accepted), accepted, rejected


def generate_benign(
    seed: Prompt,
    n: int,
    harmful_tags: Iterable[str],
    rng: random.Random,
) -> list[Prompt]:
    """Derive ``n`` benign near-misses of a harmful prompt.

    Each keeps the seed's surface features minus every harmful-intent
    tag, plus one innocuous topic tag chosen deterministically from the
    given rng.  Distinct calls with equally seeded rngs reproduce the
    same prompts byte for byte.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    core = seed.features - frozenset(harmful_tags)
    start = rng.randrange(len(BENIGN_FILLERS))
    out = []
    for i in range(n):
        filler = BENIGN_FILLERS[(start + i) % len(BENIGN_FILLERS)]
        out.append(
            Prompt.from_features(
                id=f"{seed.id}-benign{i + 1}",
                features=core | {filler},
                harmful=False,
            )
        )
    return out


def validate_tag(tag: str) -> str:
    """Scenario-side check that a tag survives the tokenizer round trip."""
    if not _TOKEN.fullmatch(tag):
        raise ScenarioError(
            f"feature tag {tag!r} must be lowercase [a-z0-9_]+ so text and "
            "features stay in sync"
        )
    return tag
