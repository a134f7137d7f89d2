"""Red-vs-blue adversarial games with training-free belief dynamics.

Two fully scripted domains share one engine: a web-exploit game (probe,
patch, verify) and a guardrail game (jailbreak, mine rules, validate).
Runs are deterministic under a seed, archived as checksummed JSONL, and
replayable to identical bytes.
"""

from __future__ import annotations

from .agents import (
    AdapterResult,
    AgentConfig,
    AgentKind,
    AttackLogEntry,
    AttackSpec,
    BlueStepResult,
    Finding,
    GuardStepResult,
    JailbreakEpisode,
    RemoteBlueCyber,
    ScriptedBlueCyber,
    ScriptedGuardPatcher,
    ScriptedJailbreaker,
    ScriptedRedCyber,
    Transform,
    TurnLimits,
    apply_transform_chain,
    llm_adapter_call,
    patch_from_message,
)
from .archive import (
    ARCHIVE_FILENAME,
    EpochRecord,
    RunArchive,
    RunWriter,
    StopKind,
    StopReason,
    canonical_json,
    decode_attack_log,
    encode_attack_log,
    first_divergence,
)
from .beliefs import (
    Belief,
    Evidence,
    Side,
    StateDigest,
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
from .content import (
    BENIGN_FILLERS,
    GuardRule,
    GuardRuleSet,
    Prompt,
    TargetResponse,
    TargetStub,
    Verdict,
    augment_rules,
    classify,
    extract_features,
    generate_benign,
    is_attack_success,
    target_respond,
    validate_rules,
    validate_tag,
)
from .cost import (
    TOKENS_PER_PRICE_UNIT,
    CostReport,
    PriceTable,
    UsageEntry,
    UsageLedger,
    estimate_cost,
    relative_reduction,
)
from .cyber import (
    CyberOutcome,
    Endpoint,
    Environment,
    Exploit,
    ParamSpec,
    Patch,
    PatchKind,
    VulnClass,
    apply_patch,
    attempt_exploit,
    load_scenario,
    regression_check,
    vulnerability_count,
)
from .errors import (
    AdapterError,
    ArchiveIOError,
    ArchiveOrderError,
    CodecError,
    ConfigError,
    DegenerateEvidenceError,
    IncompleteUtilityError,
    InvalidSpaceError,
    MissingPriceError,
    NullProductionError,
    PatchError,
    RemediationFailureError,
    RvbError,
    ScenarioError,
    SchemaError,
    UndefinedMetricError,
    UsageError,
)
from .metrics import (
    CONTENT_COLUMNS,
    CYBER_COLUMNS,
    CyberRates,
    aat,
    asc,
    content_dsr,
    content_series,
    crde,
    crde_from_records,
    cyber_rates,
    cyber_series,
    fpr,
    ood_eval,
    render_crde,
    render_records,
    render_tabular,
    union_rates,
)
from .orchestrator import (
    ConvergenceRule,
    Domain,
    Mode,
    ReplayReport,
    RunConfig,
    RunResult,
    converged,
    execute,
    is_replayable,
    load_run_config,
    load_scenario_for,
    replay,
    run,
    run_content_game,
    run_cyber_game,
    run_pure_blue_game,
)
from .scenarios import (
    ContentScenario,
    CyberScenario,
    bundled_path,
    load_any_scenario,
    load_content_scenario,
    load_cyber_scenario,
    load_doc,
    load_prompt_corpus,
    validate_scenario_doc,
)

__version__ = "0.1.0"
