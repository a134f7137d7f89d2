"""Full game loops over the bundled fixtures, stopping logic, replay."""

from __future__ import annotations

from dataclasses import replace

import pytest

from rvb import (
    AgentConfig,
    AgentKind,
    ConfigError,
    ConvergenceRule,
    Domain,
    Mode,
    Patch,
    PatchKind,
    RunArchive,
    RunConfig,
    StopKind,
    converged,
    encode_actions,
    execute,
    is_replayable,
    load_cyber_scenario,
    load_run_config,
    replay,
    run,
)

SANITIZE_ALL = AgentConfig(kind=AgentKind.SCRIPTED_BLUE)
PROBE_ALL = AgentConfig(kind=AgentKind.SCRIPTED_RED)


# --- convergence predicate --------------------------------------------------


def test_comparisons_count_from_the_initial_state():
    # 10 -> 10 -> 10 gives three unchanged comparisons over two epochs
    assert converged(10, [10, 10, 10], 3)
    assert not converged(10, [10, 10], 3)
    assert not converged(10, [9, 9, 9], 3)  # the drop resets the tail


def test_epochs_rule_ignores_the_initial_state():
    # same series, different verdicts: the first comparison (9 vs 7)
    # counts against the comparisons rule but not the epochs rule
    series = [7, 7, 7]
    assert not converged(9, series, 3, ConvergenceRule.COMPARISONS)
    assert converged(9, series, 3, ConvergenceRule.EPOCHS)


def test_epochs_rule_needs_enough_epochs():
    assert not converged(5, [5, 5], 3, ConvergenceRule.EPOCHS)
    assert converged(5, [4, 4, 4], 3, ConvergenceRule.EPOCHS)


def test_convergence_with_delay_one_fires_on_any_plateau():
    assert converged(3, [3], 1)
    assert not converged(3, [2], 1)


def test_convergence_on_an_empty_series():
    assert not converged(4, [], 3)
    assert not converged(4, [], 1, ConvergenceRule.EPOCHS)


# --- run configuration ------------------------------------------------------


def base_cfg(**overrides) -> RunConfig:
    fields = dict(
        name="t",
        domain=Domain.CYBER,
        scenario_ref="cyber_basic",
        red=PROBE_ALL,
        blue=SANITIZE_ALL,
    )
    fields.update(overrides)
    return RunConfig(**fields)


def test_run_id_names_domain_and_seed():
    assert base_cfg(seed=7).run_id == "t-cyber-s7"


def test_snapshot_round_trips():
    cfg = base_cfg(seed=3, max_epoch=4, convergence=ConvergenceRule.EPOCHS)
    assert RunConfig.from_snapshot(cfg.snapshot()) == cfg


def test_remote_red_is_rejected():
    with pytest.raises(ConfigError):
        base_cfg(red=AgentConfig(kind=AgentKind.REMOTE_LLM))


def test_remote_blue_is_cyber_only():
    with pytest.raises(ConfigError):
        base_cfg(
            domain=Domain.CONTENT,
            scenario_ref="content_fourround",
            red=AgentConfig(kind=AgentKind.SCRIPTED_JAILBREAKER),
            blue=AgentConfig(kind=AgentKind.REMOTE_LLM),
        )


def test_pure_blue_needs_cyber_and_a_scan():
    with pytest.raises(ConfigError):
        base_cfg(mode=Mode.PURE_BLUE)
    scan = (Patch("a.php", PatchKind.REMOVE_ENDPOINT),)
    with pytest.raises(ConfigError):
        base_cfg(
            domain=Domain.CONTENT,
            scenario_ref="content_fourround",
            red=AgentConfig(kind=AgentKind.SCRIPTED_JAILBREAKER),
            blue=AgentConfig(kind=AgentKind.SCRIPTED_GUARD_PATCHER),
            mode=Mode.PURE_BLUE,
            scan=scan,
        )
    with pytest.raises(ConfigError):
        base_cfg(scan=scan)  # a scan without pure-blue mode is a mistake


def test_load_run_config_rejects_unknown_schema(tmp_path):
    bad = tmp_path / "run.yaml"
    bad.write_text("schema: rvb-run/9\ndomain: cyber\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(bad)


def test_load_run_config_fills_domain_default_agents():
    cfg = load_run_config("content_fourround_run")
    assert cfg.red.kind is AgentKind.SCRIPTED_JAILBREAKER
    assert cfg.blue.kind is AgentKind.SCRIPTED_GUARD_PATCHER


# --- full exploit-and-patch runs --------------------------------------------


def test_basic_run_walks_the_whole_surface(bundled_run):
    result = bundled_run("cyber_basic_run")
    assert result.stop.kind is StopKind.MAX_EPOCHS
    assert result.stop.epoch == 5
    assert result.stop.detail == "epoch budget 5 spent"

    epochs = result.archive.epochs
    assert [e.c_before for e in epochs] == [10, 8, 6, 4, 2]
    assert [e.c_after for e in epochs] == [8, 6, 4, 2, 0]
    found = [[f["attack_id"] for f in e.red_findings] for e in epochs]
    assert found == [
        ["a01", "a02"], ["a03", "a04"], ["a05", "a06"], ["a07", "a08"], ["a09", "a10"],
    ]
    for e in epochs:
        assert len(e.blue_actions) == 2
        assert all(a["kind"] == "sanitize" for a in e.blue_actions)
        assert len(e.outcomes) == 10
        assert not e.remediation_failed


def test_basic_run_metric_trajectory(bundled_run):
    rows = bundled_run("cyber_basic_run").archive.metrics["rows"]
    assert [r["tdsr"] for r in rows] == [0.2, 0.4, 0.6, 0.8, 1.0]
    assert [r["fdsr"] for r in rows] == [0.2, 0.4, 0.6, 0.8, 1.0]
    assert [r["sdr"] for r in rows] == [0.0, 0.0, 0.0, 0.0, 0.0]
    assert [r["asc"] for r in rows] == [2, 4, 6, 8, 10]


def test_state_digests_chain_across_epochs(bundled_run):
    epochs = bundled_run("cyber_basic_run").archive.epochs
    assert epochs[0].digest_before == encode_actions([]).digest
    history: list[tuple[int, list]] = []
    for rec in epochs:
        history.append((rec.epoch, rec.mutating_actions()))
        assert rec.digest_after == encode_actions(history).digest
    for prev, cur in zip(epochs, epochs[1:]):
        assert cur.digest_before == prev.digest_after


def test_deceptive_reports_stall_the_count(bundled_run):
    result = bundled_run("cyber_convergence_run")
    assert result.stop.kind is StopKind.METRIC_CONVERGENCE
    assert result.stop.epoch == 4
    assert result.stop.detail == "C unchanged for 3 comparisons"
    assert [e.c_after for e in result.archive.epochs] == [7, 7, 7, 7]
    assert [r["asc"] for r in result.archive.metrics["rows"]] == [3, 6, 6, 6]


def test_epochs_convergence_rule_fires_one_epoch_earlier():
    cfg = replace(load_run_config("cyber_convergence_run"), convergence=ConvergenceRule.EPOCHS)
    result = run(cfg)
    assert result.stop.kind is StopKind.METRIC_CONVERGENCE
    assert result.stop.epoch == 3
    assert result.stop.detail == "C unchanged for 3 epochs"


def test_exhausted_attacker_stops_the_run(bundled_run):
    result = bundled_run("cyber_nullproduction_run")
    assert result.stop.kind is StopKind.NULL_PRODUCTION
    assert result.stop.epoch == 2
    assert result.stop.detail == "neither side produced anything"
    last = result.archive.epochs[-1]
    assert last.red_findings == () and last.blue_actions == ()


def test_unlocalizable_report_exhausts_the_defender(bundled_run):
    result = bundled_run("cyber_remediation_failure_run")
    assert result.stop.kind is StopKind.EXECUTION_FAILURE
    assert result.stop.epoch == 2
    assert result.stop.detail == "defender retries exhausted"
    last = result.archive.epochs[-1]
    assert last.remediation_failed
    (failure,) = last.blue_failures
    assert failure["attack_id"] == "a2"
    assert len(failure["attempts"]) == 4  # the initial try plus three retries


def test_destructive_defense_shows_up_as_side_effects(bundled_run):
    result = bundled_run("cyber_destructive_blue_run")
    assert result.stop.kind is StopKind.MAX_EPOCHS
    rows = result.archive.metrics["rows"]
    for row in rows:
        assert row["tdsr"] == 0.0
        assert row["sdr"] > 0.0
        assert row["tdsr"] < row["fdsr"]
    assert rows[-1]["fdsr"] == 1.0  # every attack "defended", no service left
    for e in result.archive.epochs:
        assert all(a["kind"] == "remove_endpoint" for a in e.blue_actions)


def test_patching_one_layer_exposes_the_next(bundled_run):
    result = bundled_run("cyber_latent_asc_run")
    assert result.stop.kind is StopKind.MAX_EPOCHS
    found = [[f["attack_id"] for f in e.red_findings] for e in result.archive.epochs]
    assert "b6" not in found[0]  # gated behind a1 being patched
    assert "b6" in found[1]
    assert [r["asc"] for r in result.archive.metrics["rows"]] == [5, 7, 7, 7, 7]


def test_convergence_outranks_the_epoch_budget():
    # with a shorter delay the plateau and the budget fire at the same
    # epoch, and the plateau wins
    cfg = replace(load_run_config("cyber_latent_asc_run"), count_delay=3)
    result = run(cfg)
    assert result.stop.kind is StopKind.METRIC_CONVERGENCE
    assert result.stop.epoch == 5


def test_null_production_outranks_convergence():
    doc = {
        "schema": "rvb-scenario/1",
        "domain": "cyber",
        "name": "prehardened",
        "endpoints": [
            {"path": "api/solo.php", "required": True,
             "params": [{"name": "q", "vuln": "SQLI", "sanitized": True}]}
        ],
        "attacks": [
            {"id": "a1", "path": "api/solo.php", "param": "q", "class": "SQLI",
             "payload": "q=1 OR 1=1", "bug": "b", "code": "c"}
        ],
    }
    cfg = base_cfg(count_delay=1)  # C never moves, so this would converge too
    result = run(cfg, scenario=load_cyber_scenario(doc))
    assert result.stop.kind is StopKind.NULL_PRODUCTION
    assert result.stop.epoch == 1


def test_execution_failure_outranks_convergence():
    cfg = replace(load_run_config("cyber_remediation_failure_run"), count_delay=1)
    result = run(cfg)
    assert result.stop.kind is StopKind.EXECUTION_FAILURE
    assert result.stop.epoch == 2


# --- pure defender baseline -------------------------------------------------


def test_pure_blue_applies_the_scan_list(bundled_run):
    result = bundled_run("cyber_pure_blue_run")
    assert result.stop.kind is StopKind.MAX_EPOCHS
    epochs = result.archive.epochs
    assert all(e.red_findings == () for e in epochs)
    assert [len(e.blue_actions) for e in epochs] == [1, 1, 1, 1, 1]
    assert [e.c_after for e in epochs] == [4, 3, 2, 1, 0]


def test_pure_blue_union_rates(bundled_run):
    metrics = bundled_run("cyber_pure_blue_run").archive.metrics
    assert metrics["union"] == {"fdsr": 1.0, "sdr": 0.6, "tdsr": 0.4}


# --- guardrail runs ---------------------------------------------------------


def test_guardrail_run_ratchets_the_defense(bundled_run):
    result = bundled_run("content_fourround_run")
    assert result.stop.kind is StopKind.MAX_EPOCHS
    assert result.stop.epoch == 4

    epochs = result.archive.epochs
    assert [e.guard_version for e in epochs] == [1, 2, 3, 4]
    assert [len(e.guard_rules) for e in epochs] == [1, 2, 4, 5]
    assert [len(e.attack_set) for e in epochs] == [4, 3, 2, 1]

    rows = result.archive.metrics["rows"]
    assert [r["dsr"] for r in rows] == [0.0, 0.25, 0.5, 0.75]
    assert [r["aat"] for r in rows] == [1.0, 2.0, 3.0, 4.0]
    assert [r["fpr"] for r in rows] == [0.0, 0.0, 0.0, 0.0]


def test_guardrail_attempts_climb_as_rules_accumulate(bundled_run):
    epochs = bundled_run("content_fourround_run").archive.epochs
    per_epoch = [
        [(ep["attempts_used"], ep["success"]) for ep in rec.episodes]
        for rec in epochs
    ]
    assert per_epoch == [
        [(1, True), (1, True), (1, True), (1, True)],
        [(2, True), (2, True), (2, True), (30, False)],
        [(3, True), (3, True), (30, False), (30, False)],
        [(4, True), (30, False), (30, False), (30, False)],
    ]


def test_guardrail_crde_is_fully_effective_here(bundled_run):
    metrics = bundled_run("content_fourround_run").archive.metrics
    cells = {(i, j): v for i, j, v in metrics["crde"]}
    assert set(cells) == {(i, j) for i in range(1, 5) for j in range(1, i + 1)}
    assert all(v == 1.0 for v in cells.values())


def test_guardrail_rules_are_what_blue_publishes(bundled_run):
    epochs = bundled_run("content_fourround_run").archive.epochs
    added = [[a["id"] for a in e.blue_actions] for e in epochs]
    assert added == [["g1-1"], ["g2-1"], ["g3-1", "g3-2"], ["g4-1"]]
    # every benign probe set stays clear of the accepted rules
    assert [len(e.benign_set) for e in epochs] == [12, 9, 6, 3]


# --- archives on disk and replay --------------------------------------------


def test_run_directory_matches_the_in_memory_archive(tmp_path):
    cfg = load_run_config("cyber_basic_run")
    result = run(cfg, out_root=tmp_path)
    on_disk = (result.run_dir / "archive.jsonl").read_bytes()
    reference = result.archive.save(tmp_path / "reference.jsonl").read_bytes()
    assert on_disk == reference
    timing = (result.run_dir / "timing.jsonl").read_text(encoding="utf-8")
    assert len(timing.splitlines()) == len(result.archive.epochs)
    assert not (result.run_dir / "raw_llm").exists()  # scripted play, no model


def test_full_replay_reproduces_the_bytes(bundled_run, tmp_path):
    for name in ("cyber_basic_run", "cyber_pure_blue_run", "content_fourround_run"):
        path = bundled_run(name).archive.save(tmp_path / f"{name}.jsonl")
        report = replay(path)
        assert report.ok, f"{name}: {report.detail}"
        assert report.mode == "full"


def test_replay_names_the_epoch_that_diverges(bundled_run, tmp_path):
    archive = RunArchive.load(
        bundled_run("cyber_basic_run").archive.save(tmp_path / "a.jsonl")
    )
    archive.epochs[2] = replace(archive.epochs[2], c_after=99)
    path = archive.save(tmp_path / "tampered.jsonl")
    report = replay(path)
    assert not report.ok
    assert report.mode == "full"
    assert report.detail == "epoch 3 diverges"


def test_remote_defender_archives_replay_metrics_only(bundled_run, tmp_path):
    archive = RunArchive.load(
        bundled_run("cyber_basic_run").archive.save(tmp_path / "a.jsonl")
    )
    archive.header["config"]["run"]["blue"]["kind"] = "remote-llm"
    assert not is_replayable(archive)
    path = archive.save(tmp_path / "remote.jsonl")
    report = replay(path)
    assert report.ok
    assert report.mode == "metrics-only"


def test_scripted_archives_are_replayable(bundled_run):
    assert is_replayable(bundled_run("cyber_basic_run").archive)


def test_execute_accepts_a_preloaded_scenario():
    cfg = base_cfg(max_epoch=1)
    doc_scenario = load_cyber_scenario(
        {
            "schema": "rvb-scenario/1",
            "domain": "cyber",
            "name": "inline",
            "endpoints": [
                {"path": "a.php", "required": True,
                 "params": [{"name": "q", "vuln": "SQLI"}]}
            ],
            "attacks": [
                {"id": "a1", "path": "a.php", "param": "q", "class": "SQLI",
                 "payload": "q=1", "bug": "b", "code": "c"}
            ],
        }
    )
    archive = execute(cfg, scenario=doc_scenario)
    assert archive.epochs[0].c_before == 1
    assert archive.epochs[0].c_after == 0
