"""Shared fixtures and independent reference implementations.

The reference functions here deliberately avoid the library's own
arithmetic: posteriors are computed in exact rational arithmetic
(fractions.Fraction is exact on float inputs), the action picker is a
naive scan over exact expected utilities.  Tests compare the fast float
code against these.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Sequence

import pytest

from rvb import RunResult, load_run_config, run


def exact_posterior(
    probs: Mapping[str, float],
    flags: Mapping[str, bool],
    soft_error: float | None = None,
) -> dict[str, float]:
    """Bayes update in exact rational arithmetic; floats only at the end."""
    weights: dict[str, Fraction] = {}
    for s, p in probs.items():
        if soft_error is None:
            like = Fraction(1) if flags[s] else Fraction(0)
        else:
            eps = Fraction(soft_error)
            like = (1 - eps) if flags[s] else eps
        weights[s] = Fraction(p) * like
    total = sum(weights.values())
    assert total > 0, "reference update needs at least one consistent strategy"
    return {s: float(w / total) for s, w in weights.items()}


def exact_expected_utilities(
    probs: Mapping[str, float],
    actions: Sequence[str],
    table: Mapping[tuple[str, str], float],
) -> dict[str, Fraction]:
    out: dict[str, Fraction] = {}
    for a in actions:
        out[a] = sum(
            (Fraction(probs[s]) * Fraction(table[(a, s)]) for s in probs),
            start=Fraction(0),
        )
    return out

def reference_best_action(
    probs: Mapping[str, float],
    actions: Sequence[str],
    table: Mapping[tuple[str, str], float],
) -> str:
    """Exact argmax; ties go to the smallest action id."""
    eus = exact_expected_utilities(probs, actions, table)
    best = max(eus.values())
    return min(a for a, v in eus.items() if v == best)


def top_gap(
    probs: Mapping[str, float],
    actions: Sequence[str],
    table: Mapping[tuple[str, str], float],
) -> Fraction:
    """Margin between the best and second-best expected utility.

    Randomized argmax tests skip cases where this is negligibly small:
    there the float and exact computations may legitimately disagree.
    """
    eus = sorted(exact_expected_utilities(probs, actions, table).values(), reverse=True)
    if len(eus) < 2:
        return Fraction(1)
    return eus[0] - eus[1]


_RUN_CACHE: dict[str, RunResult] = {}


@pytest.fixture(scope="session")
def bundled_run():
    """Run a bundled config by name, once per test session."""

    def get(name: str) -> RunResult:
        if name not in _RUN_CACHE:
            _RUN_CACHE[name] = run(load_run_config(name))
        return _RUN_CACHE[name]

    return get
