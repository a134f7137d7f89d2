"""Belief distributions over discrete opponent-strategy spaces.

The attacker in a red-vs-blue exercise cannot observe the defender's
policy directly.  It keeps a probability distribution (a *belief*) over a
finite space of candidate defender strategies and sharpens that belief
with evidence read off the shared environment: every hardening step the
defender takes rules out the strategies that could not have produced it.

Two likelihood models are supported when absorbing evidence:

* the hard **binary filter** — a strategy consistent with the observation
  keeps its probability mass, an inconsistent one is eliminated outright;
* a **soft** model with error rate ``eps`` in (0, 0.5) — an inconsistent
  strategy is merely down-weighted (likelihood ``eps`` versus ``1 - eps``),
  so no hypothesis ever reaches exactly zero.

Under the binary filter the posterior support only ever shrinks and the
Shannon entropy of the belief never increases; neither guarantee holds
for the soft model, which can re-spread mass over near-dead hypotheses.

Everything here is a pure function over immutable values.  Probabilities
are plain floats; beliefs are valid when their mass sums to one within
``SUM_TOLERANCE``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import (
    DegenerateEvidenceError,
    IncompleteUtilityError,
    InvalidSpaceError,
)

# Mass must sum to one within this bound for a Belief to be accepted.
SUM_TOLERANCE = 1e-9


class Side(Enum):
    """Which team a strategy space belongs to."""

    RED = "red"
    BLUE = "blue"


@dataclass(frozen=True)
class StrategySpace:
    """Ordered, deduplicated collection of opaque strategy ids.

    Construction canonicalizes the order (lexicographic), so two spaces
    built from the same ids in any order compare and serialize equal.
    """

    strategies: tuple[str, ...]
    side: Side

    def __post_init__(self) -> None:
        if not self.strategies:
            raise InvalidSpaceError("strategy space must not be empty")
        if len(set(self.strategies)) != len(self.strategies):
            raise InvalidSpaceError("strategy ids must be unique")
        object.__setattr__(self, "strategies", tuple(sorted(self.strategies)))

    def __len__(self) -> int:
        return len(self.strategies)

    def __contains__(self, strategy: str) -> bool:
        return strategy in self.strategies

    def canonical(self) -> str:
        """Canonical textual form: sorted keys, stable field order."""
        return json.dumps(
            {"side": self.side.value, "strategies": list(self.strategies)},
            sort_keys=True,
            separators=(",", ":"),
        )


@dataclass(frozen=True)
class Belief:
    """Probability distribution over the strategies of one space."""

    space: StrategySpace
    probs: Mapping[str, float]

    def __post_init__(self) -> None:
        expected = set(self.space.strategies)
        got = set(self.probs)
        if expected != got:
            raise ValueError(
                f"belief keys do not match the space: missing={sorted(expected - got)} "
                f"extra={sorted(got - expected)}"
            )
        for strategy, p in self.probs.items():
            if not math.isfinite(p) or p < 0.0:
                raise ValueError(f"probability for {strategy!r} must be finite and >= 0, got {p}")
        total = sum(self.probs.values())
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"belief mass must sum to 1 within {SUM_TOLERANCE}, got {total!r}")
        object.__setattr__(self, "probs", dict(self.probs))

    def p(self, strategy: str) -> float:
        return self.probs[strategy]

    @property
    def support(self) -> tuple[str, ...]:
        """Strategies carrying strictly positive mass, in canonical order."""
        return tuple(s for s in self.space.strategies if self.probs[s] > 0.0)

    def canonical(self) -> str:
        """Canonical textual form with probabilities at 12 decimal digits.

        Equal beliefs serialize to identical bytes, which is what the
        archive's byte-level determinism contract rests on.
        """
        return json.dumps(
            {
                "probs": {s: format(self.probs[s], ".12f") for s in self.space.strategies},
                "side": self.space.side.value,
                "strategies": list(self.space.strategies),
            },
            sort_keys=True,
            separators=(",", ":"),
        )


@dataclass(frozen=True)
class Evidence:
    """One observation to condition a belief on.

    ``soft_error`` selects the likelihood model: ``None`` means the hard
    binary filter; a value in (0, 0.5) is the probability that an
    inconsistent strategy still produced the observation.
    """

    round: int
    observation: Any
    soft_error: float | None = None

    def __post_init__(self) -> None:
        if self.round < 1:
            raise ValueError(f"evidence round must be >= 1, got {self.round}")
        if self.soft_error is not None and not (0.0 < self.soft_error < 0.5):
            raise ValueError(f"soft error rate must lie in (0, 0.5), got {self.soft_error}")


@dataclass(frozen=True)
class UtilityTable:
    """Payoff for every (action id, strategy id) pair the caller plays over."""

    values: Mapping[tuple[str, str], float]

    def __post_init__(self) -> None:
        for key, v in self.values.items():
            if not math.isfinite(v):
                raise ValueError(f"utility for {key!r} must be finite, got {v}")
        object.__setattr__(self, "values", dict(self.values))

    def value(self, action: str, strategy: str) -> float:
        try:
            return self.values[(action, strategy)]
        except KeyError:
            raise IncompleteUtilityError(
                f"utility table has no entry for action={action!r} strategy={strategy!r}"
            ) from None


@dataclass(frozen=True)
class StateDigest:
    """Content hash of the mutating action history up to some round."""

    digest: str
    round: int


ConsistencyFn = Callable[[str, Any], bool]


def uniform_prior(space: StrategySpace) -> Belief:
    """Maximum-entropy belief: equal mass on every strategy."""
    p = 1.0 / len(space)
    return Belief(space, {s: p for s in space.strategies})


def posterior_update(belief: Belief, evidence: Evidence, consistency: ConsistencyFn) -> Belief:
    """Bayes-rule update of ``belief`` given one piece of evidence.

    ``consistency(strategy, observation)`` says whether the strategy could
    have produced the observation.  With the binary filter, inconsistent
    strategies are zeroed and the rest renormalized; eliminating every
    strategy raises :class:`DegenerateEvidenceError`, which signals a
    modeling error rather than a legitimate game state.  With the soft
    model no strategy hits exactly zero, so the update always normalizes.
    """
    space = belief.space
    flags = {s: bool(consistency(s, evidence.observation)) for s in space.strategies}
    if evidence.soft_error is None:
        weights = {s: (belief.probs[s] if flags[s] else 0.0) for s in space.strategies}
    else:
        eps = evidence.soft_error
        weights = {
            s: belief.probs[s] * ((1.0 - eps) if flags[s] else eps)
            for s in space.strategies
        }
    total = sum(weights.values())
    if total <= 0.0:
        raise DegenerateEvidenceError(
            f"evidence at round {evidence.round} is inconsistent with every "
            "strategy carrying mass"
        )
    return Belief(space, {s: w / total for s, w in weights.items()})


def entropy(belief: Belief) -> float:
    """Shannon entropy of the belief in nats, with 0 * ln 0 taken as 0."""
    h = 0.0
    for p in belief.probs.values():
        if p > 0.0:
            h -= p * math.log(p)
    # guard against -0.0 and float dust from masses a hair above 1
    return h if h > 0.0 else 0.0


def select_action(belief: Belief, actions: Sequence[str], utility: UtilityTable) -> str:
    """Subjective-expected-utility argmax over ``actions``.

    Ties break toward the lowest action id in canonical (lexicographic)
    order, which keeps scripted play deterministic.  A missing utility
    entry raises :class:`IncompleteUtilityError` — the table must be
    total over actions x strategies.
    """
    if not actions:
        raise ValueError("select_action needs at least one candidate action")
    best_action: str | None = None
    best_value = -math.inf
    for action in sorted(set(actions)):
        value = 0.0
        for strategy in belief.space.strategies:
            value += belief.probs[strategy] * utility.value(action, strategy)
        if value > best_value:
            best_action = action
            best_value = value
    assert best_action is not None
    return best_action


def expected_utilities(belief: Belief, actions: Sequence[str], utility: UtilityTable) -> dict[str, float]:
    """Expected utility of each action under the belief (diagnostic view)."""
    out: dict[str, float] = {}
    for action in actions:
        out[action] = sum(
            belief.probs[s] * utility.value(action, s) for s in belief.space.strategies
        )
    return out


def encode_actions(pairs: Sequence[tuple[int, Sequence[Mapping[str, Any]]]]) -> StateDigest:
    """Digest a pre-extracted (round, mutating actions) sequence."""
    payload = [
        {"actions": [dict(a) for a in actions], "epoch": epoch}
        for epoch, actions in pairs
    ]
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return StateDigest(hashlib.sha256(blob.encode("utf-8")).hexdigest(), len(payload))


def encode_state(history: Iterable[Any]) -> StateDigest:
    """Canonical digest of the state-mutating actions in an epoch history.

    Each history element must expose ``epoch`` and ``mutating_actions()``
    (the patches applied or rules added that round).  The digest is a
    sha256 over the canonical JSON of that sequence, so any change to any
    applied action — or to their order — changes the digest.  An empty
    history digests the empty canonical form at round 0.
    """
    return encode_actions([(r.epoch, r.mutating_actions()) for r in history])
