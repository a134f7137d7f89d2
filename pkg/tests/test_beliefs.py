"""Belief arithmetic against exact rational references."""

from __future__ import annotations

import hashlib
import json
import math
import random

import pytest
from hypothesis import given, strategies as st

from conftest import exact_posterior, reference_best_action, top_gap
from rvb import (
    Belief,
    DegenerateEvidenceError,
    Evidence,
    IncompleteUtilityError,
    InvalidSpaceError,
    Side,
    StrategySpace,
    UtilityTable,
    encode_actions,
    encode_state,
    entropy,
    expected_utilities,
    posterior_update,
    select_action,
    uniform_prior,
)


def space_of(*ids: str) -> StrategySpace:
    return StrategySpace(tuple(ids), Side.BLUE)


# --- spaces and beliefs -----------------------------------------------------


def test_space_canonicalizes_order():
    assert space_of("b", "a", "c").strategies == ("a", "b", "c")
    assert space_of("a", "b", "c") == space_of("c", "b", "a")


def test_space_rejects_empty_and_duplicates():
    with pytest.raises(InvalidSpaceError):
        StrategySpace((), Side.RED)
    with pytest.raises(InvalidSpaceError):
        space_of("a", "a")


def test_uniform_prior_is_flat():
    prior = uniform_prior(space_of("a", "b", "c", "d"))
    assert prior.probs == {"a": 0.25, "b": 0.25, "c": 0.25, "d": 0.25}
    assert abs(sum(prior.probs.values()) - 1.0) <= 1e-12


def test_belief_rejects_bad_mass():
    sp = space_of("a", "b")
    with pytest.raises(ValueError):
        Belief(sp, {"a": 0.7, "b": 0.7})
    with pytest.raises(ValueError):
        Belief(sp, {"a": 1.2, "b": -0.2})
    with pytest.raises(ValueError):
        Belief(sp, {"a": float("nan"), "b": 1.0})


def test_belief_keys_must_match_space():
    sp = space_of("a", "b")
    with pytest.raises(ValueError):
        Belief(sp, {"a": 1.0})
    with pytest.raises(ValueError):
        Belief(sp, {"a": 0.5, "b": 0.5, "c": 0.0})


def test_support_lists_positive_mass_only():
    b = Belief(space_of("a", "b", "c"), {"a": 0.5, "b": 0.0, "c": 0.5})
    assert b.support == ("a", "c")


def test_canonical_form_is_stable_bytes():
    sp = space_of("a", "b")
    one = Belief(sp, {"a": 0.25, "b": 0.75}).canonical()
    two = Belief(sp, {"b": 0.75, "a": 0.25}).canonical()
    assert one == two
    json.loads(one)  # canonical form stays valid JSON


# --- entropy ----------------------------------------------------------------


def test_entropy_of_uniform_eight():
    h = entropy(uniform_prior(space_of(*"abcdefgh")))
    assert abs(h - math.log(8)) <= 1e-12
    assert abs(h - 2.0794415416798357) <= 1e-12


def test_entropy_half_quarter_quarter():
    b = Belief(space_of("a", "b", "c"), {"a": 0.5, "b": 0.25, "c": 0.25})
    assert abs(entropy(b) - 1.0397207708399179) <= 1e-12


def test_entropy_of_point_mass_is_zero():
    b = Belief(space_of("a", "b"), {"a": 1.0, "b": 0.0})
    assert entropy(b) == 0.0


# --- posterior updates ------------------------------------------------------


def test_binary_update_renormalizes_survivors():
    b = Belief(space_of("s1", "s2", "s3"), {"s1": 0.5, "s2": 0.3, "s3": 0.2})
    post = posterior_update(
        b, Evidence(round=1, observation="x"), lambda s, _: s != "s2"
    )
    want = exact_posterior(b.probs, {"s1": True, "s2": False, "s3": True})
    for s in b.space.strategies:
        assert abs(post.p(s) - want[s]) <= 1e-12
    assert post.support == ("s1", "s3")


def test_binary_update_annihilation_raises():
    b = uniform_prior(space_of("s1", "s2"))
    with pytest.raises(DegenerateEvidenceError):
        posterior_update(b, Evidence(round=2, observation=None), lambda s, _: False)


def test_soft_update_hand_value():
    b = Belief(space_of("s1", "s2"), {"s1": 0.8, "s2": 0.2})
    post = posterior_update(
        b,
        Evidence(round=1, observation="o", soft_error=0.1),
        lambda s, _: s == "s1",
    )
    # 0.8 * 0.9 / (0.8 * 0.9 + 0.2 * 0.1) = 36/37
    assert abs(post.p("s1") - 36 / 37) <= 1e-12
    assert abs(post.p("s2") - 1 / 37) <= 1e-12


def test_soft_update_never_zeroes_a_strategy():
    b = uniform_prior(space_of("s1", "s2", "s3"))
    post = posterior_update(
        b,
        Evidence(round=1, observation="o", soft_error=0.25),
        lambda s, _: False,  # nothing consistent, yet no annihilation
    )
    assert all(p > 0.0 for p in post.probs.values())


def test_evidence_validation():
    with pytest.raises(ValueError):
        Evidence(round=0, observation="x")
    for bad in (0.0, 0.5, -0.1, 0.9):
        with pytest.raises(ValueError):
            Evidence(round=1, observation="x", soft_error=bad)
    Evidence(round=1, observation="x", soft_error=0.499)


@st.composite
def belief_cases(draw):
    n = draw(st.integers(min_value=2, max_value=8))
    ids = tuple(f"s{i}" for i in range(n))
    weights = draw(
        st.lists(st.integers(min_value=1, max_value=100), min_size=n, max_size=n)
    )
    total = sum(weights)
    probs = {s: w / total for s, w in zip(ids, weights)}
    flags = draw(
        st.lists(st.booleans(), min_size=n, max_size=n).filter(lambda f: any(f))
    )
    return probs, dict(zip(ids, flags))


@given(belief_cases())
def test_binary_update_matches_exact_reference(case):
    probs, flags = case
    b = Belief(space_of(*probs), probs)
    post = posterior_update(
        b, Evidence(round=1, observation=flags), lambda s, obs: obs[s]
    )
    want = exact_posterior(probs, flags)
    for s in probs:
        assert abs(post.p(s) - want[s]) <= 1e-12
    assert abs(sum(post.probs.values()) - 1.0) <= 1e-9
    for s, keep in flags.items():
        if not keep:
            assert post.p(s) == 0.0


@given(belief_cases(), st.floats(min_value=0.01, max_value=0.49))
def test_soft_update_matches_exact_reference(case, eps):
    probs, flags = case
    b = Belief(space_of(*probs), probs)
    post = posterior_update(
        b, Evidence(round=1, observation=flags, soft_error=eps), lambda s, obs: obs[s]
    )
    want = exact_posterior(probs, flags, soft_error=eps)
    for s in probs:
        assert abs(post.p(s) - want[s]) <= 1e-12


def test_entropy_never_increases_under_binary_filtering():
    rng = random.Random(42)
    for _ in range(200):
        n = rng.randint(3, 10)
        ids = tuple(f"s{i}" for i in range(n))
        belief = uniform_prior(space_of(*ids))
        h = entropy(belief)
        for step in range(1, 6):
            support = list(belief.support)
            if len(support) <= 1:
                break
            victim = rng.choice(support)
            belief = posterior_update(
                belief,
                Evidence(round=step, observation=victim),
                lambda s, obs: s != obs,
            )
            h_next = entropy(belief)
            assert h_next <= h + 1e-12
            assert set(belief.support) <= set(support)
            h = h_next


def test_soft_update_can_raise_entropy():
    """The monotonicity guarantee is specific to the hard filter."""
    b = Belief(space_of("s1", "s2"), {"s1": 0.99, "s2": 0.01})
    before = entropy(b)
    post = posterior_update(
        b,
        Evidence(round=1, observation="o", soft_error=0.4),
        lambda s, _: s == "s2",  # evidence pushes mass toward the underdog
    )
    assert entropy(post) > before


# --- action selection -------------------------------------------------------


def test_select_action_prefers_higher_expected_utility():
    b = Belief(space_of("s1", "s2"), {"s1": 0.9, "s2": 0.1})
    table = UtilityTable(
        {
            ("hit_s1", "s1"): 5.0, ("hit_s1", "s2"): 0.0,
            ("hit_s2", "s1"): 0.0, ("hit_s2", "s2"): 5.0,
        }
    )
    assert select_action(b, ["hit_s1", "hit_s2"], table) == "hit_s1"


def test_select_action_breaks_ties_toward_lowest_id():
    b = uniform_prior(space_of("s1", "s2"))
    flat = UtilityTable(
        {(a, s): 1.0 for a in ("a2", "a1", "a3") for s in ("s1", "s2")}
    )
    assert select_action(b, ["a2", "a1", "a3"], flat) == "a1"
    assert select_action(b, ["a3", "a2"], flat) == "a2"


def test_select_action_needs_candidates_and_total_table():
    b = uniform_prior(space_of("s1", "s2"))
    with pytest.raises(ValueError):
        select_action(b, [], UtilityTable({}))
    partial = UtilityTable({("a", "s1"): 1.0})
    with pytest.raises(IncompleteUtilityError):
        select_action(b, ["a"], partial)


def test_utility_table_rejects_non_finite():
    with pytest.raises(ValueError):
        UtilityTable({("a", "s"): float("inf")})


def test_expected_utilities_are_dot_products():
    b = Belief(space_of("s1", "s2"), {"s1": 0.25, "s2": 0.75})
    table = UtilityTable(
        {("a", "s1"): 4.0, ("a", "s2"): 0.0, ("b", "s1"): 1.0, ("b", "s2"): 1.0}
    )
    eus = expected_utilities(b, ["a", "b"], table)
    assert abs(eus["a"] - 1.0) <= 1e-12
    assert abs(eus["b"] - 1.0) <= 1e-12


def test_select_action_matches_reference_argmax():
    rng = random.Random(7)
    checked = 0
    while checked < 300:
        n_s = rng.randint(2, 6)
        n_a = rng.randint(2, 6)
        ids = tuple(f"s{i}" for i in range(n_s))
        actions = [f"a{i}" for i in range(n_a)]
        weights = [rng.randint(1, 50) for _ in ids]
        probs = {s: w / sum(weights) for s, w in zip(ids, weights)}
        table = {(a, s): rng.uniform(-10.0, 10.0) for a in actions for s in ids}
        if top_gap(probs, actions, table) < 1e-9:
            continue  # degenerate draw: float vs exact argmax may differ
        b = Belief(space_of(*ids), probs)
        assert select_action(b, actions, UtilityTable(table)) == reference_best_action(
            probs, actions, table
        )
        checked += 1


def test_select_action_is_affine_invariant():
    rng = random.Random(11)
    ids = ("s0", "s1", "s2")
    actions = ["a0", "a1", "a2", "a3"]
    for _ in range(100):
        weights = [rng.randint(1, 50) for _ in ids]
        probs = {s: w / sum(weights) for s, w in zip(ids, weights)}
        table = {(a, s): rng.uniform(-5.0, 5.0) for a in actions for s in ids}
        if top_gap(probs, actions, table) < 1e-9:
            continue
        scale = rng.uniform(0.1, 9.0)
        shift = rng.uniform(-100.0, 100.0)
        shifted = {k: scale * v + shift for k, v in table.items()}
        b = Belief(space_of(*ids), probs)
        assert select_action(b, actions, UtilityTable(table)) == select_action(
            b, actions, UtilityTable(shifted)
        )


# --- state digests ----------------------------------------------------------


def test_encode_actions_matches_direct_hash():
    pairs = [
        (1, [{"kind": "sanitize", "param": "id", "path": "a.php"}]),
        (2, []),
    ]
    payload = [
        {"actions": [{"kind": "sanitize", "param": "id", "path": "a.php"}], "epoch": 1},
        {"actions": [], "epoch": 2},
    ]
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    want = hashlib.sha256(blob.encode("utf-8")).hexdigest()
    digest = encode_actions(pairs)
    assert digest.digest == want
    assert digest.round == 2


def test_encode_actions_is_order_sensitive():
    a1 = {"kind": "sanitize", "param": "id", "path": "a.php"}
    a2 = {"kind": "remove_endpoint", "param": None, "path": "b.php"}
    one = encode_actions([(1, [a1, a2])])
    two = encode_actions([(1, [a2, a1])])
    assert one.digest != two.digest


def test_encode_actions_empty_history():
    digest = encode_actions([])
    assert digest.round == 0
    blob = json.dumps([], sort_keys=True, separators=(",", ":"))
    assert digest.digest == hashlib.sha256(blob.encode("utf-8")).hexdigest()


def test_encode_state_reads_epoch_and_actions():
    class Rec:
        def __init__(self, epoch, actions):
            self.epoch = epoch
            self._actions = actions

        def mutating_actions(self):
            return self._actions

    history = [Rec(1, [{"k": "v"}]), Rec(2, [])]
    assert encode_state(history) == encode_actions([(1, [{"k": "v"}]), (2, [])])
