"""State transitions of the simulated web service."""

from __future__ import annotations

import random

import pytest

from rvb import (
    CyberOutcome,
    Endpoint,
    Environment,
    Exploit,
    ParamSpec,
    Patch,
    PatchError,
    PatchKind,
    ScenarioError,
    VulnClass,
    apply_patch,
    attempt_exploit,
    load_scenario,
    regression_check,
    vulnerability_count,
)


def make_env(**overrides) -> Environment:
    doc = {
        "endpoints": [
            {
                "path": "app/orders.php",
                "required": True,
                "params": [
                    {"name": "id", "vuln": "SQLI"},
                    {"name": "note"},
                ],
            },
            {
                "path": "app/profile.php",
                "params": [{"name": "bio", "vuln": "XSS"}],
            },
        ],
    }
    doc.update(overrides)
    return load_scenario(doc)


SQLI_HIT = Exploit("app/orders.php", "id", VulnClass.SQLI, "id=1 OR 1=1")


# --- construction -----------------------------------------------------------


def test_load_scenario_builds_params_and_flags():
    env = make_env()
    ep = env.endpoint("app/orders.php")
    assert ep is not None and ep.required_for_service and ep.functional
    assert ep.param("id").vuln_class is VulnClass.SQLI
    assert not ep.param("id").sanitized
    # a parameter with no weakness is clean by definition
    assert ep.param("note").vuln_class is VulnClass.NONE
    assert ep.param("note").sanitized


def test_load_scenario_rejects_unknown_class():
    with pytest.raises(ScenarioError):
        make_env(
            endpoints=[
                {"path": "x.php", "params": [{"name": "q", "vuln": "BUFFER_OVERFLOW"}]}
            ]
        )


def test_duplicate_paths_rejected():
    with pytest.raises(ScenarioError):
        Environment(
            endpoints=(
                Endpoint("a.php", ()),
                Endpoint("a.php", ()),
            )
        )


def test_duplicate_params_rejected():
    with pytest.raises(ScenarioError):
        Endpoint("a.php", (ParamSpec("q"), ParamSpec("q")))


def test_error_rate_bounds():
    with pytest.raises(ScenarioError):
        Environment(endpoints=(Endpoint("a.php", ()),), blue_error_rate=1.5)


def test_exploit_requires_a_real_payload_class():
    with pytest.raises(ValueError):
        Exploit("a.php", "q", VulnClass.NONE, "q=x")


def test_outcome_bits_are_binary():
    CyberOutcome(0, 1)
    with pytest.raises(ValueError):
        CyberOutcome(2, 0)


# --- exploitation -----------------------------------------------------------


def test_exploit_lands_on_matching_unsanitized_param():
    assert attempt_exploit(make_env(), SQLI_HIT) == 1


def test_exploit_misses_are_not_errors():
    env = make_env()
    misses = [
        Exploit("app/missing.php", "id", VulnClass.SQLI, "id=1"),
        Exploit("app/orders.php", "nope", VulnClass.SQLI, "nope=1"),
        Exploit("app/orders.php", "id", VulnClass.XSS, "id=<script>"),
    ]
    for exploit in misses:
        assert attempt_exploit(env, exploit) == 0


def test_exploit_fails_against_sanitized_param():
    env = apply_patch(make_env(), Patch("app/orders.php", PatchKind.SANITIZE, param="id"))
    assert attempt_exploit(env, SQLI_HIT) == 0


def test_exploit_fails_against_broken_endpoint():
    env = make_env()
    broken = Environment(
        endpoints=tuple(
            e if e.path != "app/orders.php" else
            Endpoint(e.path, e.params, functional=False, required_for_service=True)
            for e in env.endpoints
        )
    )
    assert attempt_exploit(broken, SQLI_HIT) == 0


# --- patching ---------------------------------------------------------------


def test_sanitize_leaves_original_untouched():
    before = make_env()
    after = apply_patch(before, Patch("app/orders.php", PatchKind.SANITIZE, param="id"))
    assert not before.endpoint("app/orders.php").param("id").sanitized
    assert after.endpoint("app/orders.php").param("id").sanitized
    assert vulnerability_count(before) == 2
    assert vulnerability_count(after) == 1


def test_patch_unknown_targets():
    env = make_env()
    with pytest.raises(PatchError):
        apply_patch(env, Patch("app/ghost.php", PatchKind.SANITIZE, param="id"))
    with pytest.raises(PatchError):
        apply_patch(env, Patch("app/orders.php", PatchKind.SANITIZE, param="ghost"))


def test_sanitize_needs_a_param():
    with pytest.raises(ValueError):
        Patch("app/orders.php", PatchKind.SANITIZE)


def test_remove_endpoint_tombstones():
    env = apply_patch(make_env(), Patch("app/orders.php", PatchKind.REMOVE_ENDPOINT))
    assert env.endpoint("app/orders.php") is None  # invisible to exploits
    assert env.record("app/orders.php") is not None  # still on the books
    assert env.record("app/orders.php").removed
    assert attempt_exploit(env, SQLI_HIT) == 0


def test_removed_endpoint_cannot_be_patched_again():
    env = apply_patch(make_env(), Patch("app/orders.php", PatchKind.REMOVE_ENDPOINT))
    with pytest.raises(PatchError):
        apply_patch(env, Patch("app/orders.php", PatchKind.SANITIZE, param="id"))


def test_rewrite_logic_sanitizes_and_can_break():
    env = make_env(blue_error_rate=1.0)
    patch = Patch("app/orders.php", PatchKind.REWRITE_LOGIC, param="id")
    after = apply_patch(env, patch, rng=random.Random(0))
    assert after.endpoint("app/orders.php") is not None
    assert after.endpoint("app/orders.php").param("id").sanitized
    assert not after.endpoint("app/orders.php").functional


def test_rewrite_logic_with_zero_error_rate_is_safe():
    after = apply_patch(
        make_env(), Patch("app/orders.php", PatchKind.REWRITE_LOGIC, param="id")
    )
    assert after.endpoint("app/orders.php").functional


def test_rewrite_logic_nonzero_rate_needs_rng():
    with pytest.raises(ValueError):
        apply_patch(
            make_env(blue_error_rate=0.5),
            Patch("app/orders.php", PatchKind.REWRITE_LOGIC, param="id"),
        )


def test_rewrite_outcome_is_reproducible_per_seed():
    env = make_env(blue_error_rate=0.5)
    patch = Patch("app/orders.php", PatchKind.REWRITE_LOGIC, param="id")
    flips = [
        apply_patch(env, patch, rng=random.Random(seed)).endpoint("app/orders.php").functional
        for seed in range(20)
    ]
    assert flips == [
        apply_patch(env, patch, rng=random.Random(seed)).endpoint("app/orders.php").functional
        for seed in range(20)
    ]
    assert True in flips and False in flips


# --- service health and the C metric ----------------------------------------


def test_regression_check_tracks_required_endpoints():
    env = make_env()
    assert regression_check(env) == 1
    # losing an optional endpoint is survivable
    no_profile = apply_patch(env, Patch("app/profile.php", PatchKind.REMOVE_ENDPOINT))
    assert regression_check(no_profile) == 1
    # losing a required one is not
    no_orders = apply_patch(env, Patch("app/orders.php", PatchKind.REMOVE_ENDPOINT))
    assert regression_check(no_orders) == 0


def test_regression_check_tracks_broken_required_endpoint():
    env = make_env(blue_error_rate=1.0)
    broken = apply_patch(
        env,
        Patch("app/orders.php", PatchKind.REWRITE_LOGIC, param="id"),
        rng=random.Random(0),
    )
    assert regression_check(broken) == 0


def test_vulnerability_count_skips_tombstones():
    env = make_env()
    assert vulnerability_count(env) == 2
    removed = apply_patch(env, Patch("app/profile.php", PatchKind.REMOVE_ENDPOINT))
    assert vulnerability_count(removed) == 1
