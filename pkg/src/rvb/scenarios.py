"""Scenario documents: loading, validation, bundled fixtures.

A scenario is a YAML document with ``schema: rvb-scenario/1``; it owns
everything about the game world (endpoints and known attacks for the
cyber domain; tasks, transforms and guard settings for the content
domain).  Run configuration — seed, epoch budget, stopping knobs, agent
wiring — lives in a separate ``rvb-run/1`` document so the same world
can be replayed under different regimes.

References resolve first as filesystem paths, then against the bundled
fixtures shipped in ``rvb/data/``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .agents import AttackSpec, Transform
from .content import Prompt, validate_tag
from .cyber import Environment, Exploit, VulnClass, load_scenario
from .errors import ScenarioError

SCENARIO_SCHEMA = "rvb-scenario/1"
RUN_SCHEMA = "rvb-run/1"


def bundled_path(name: str) -> Path | None:
    """Path of a bundled fixture (with or without extension), or None."""
    root = resources.files("rvb") / "data"
    for candidate in (name, f"{name}.yaml", f"{name}.jsonl"):
        target = root / candidate
        if target.is_file():
            return Path(str(target))
    return None


def resolve_ref(ref: str | Path) -> Path:
    """Resolve a scenario/config reference: path first, bundled name second."""
    p = Path(ref)
    if p.is_file():
        return p
    bundled = bundled_path(str(ref))
    if bundled is not None:
        return bundled
    raise ScenarioError(f"no such scenario or config: {ref!r}")


def load_doc(ref: str | Path) -> dict[str, Any]:
    path = resolve_ref(ref)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ScenarioError(f"{path}: not valid YAML: {err}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: document must be a mapping")
    return doc


@dataclass(frozen=True)
class CyberScenario:
    name: str
    environment: Environment
    attacks: tuple[AttackSpec, ...]
    findings_per_epoch: int
    blue_style: str
    doc: Mapping[str, Any]

    def attack(self, attack_id: str) -> AttackSpec:
        for a in self.attacks:
            if a.id == attack_id:
                return a
        raise KeyError(attack_id)


@dataclass(frozen=True)
class ContentScenario:
    name: str
    tasks: tuple[Prompt, ...]
    transforms: tuple[Transform, ...]
    harmful_tags: frozenset[str]
    resistance: frozenset[str]
    min_support: float
    fpr_threshold: float
    benign_per_attack: int
    doc: Mapping[str, Any]


def _require(doc: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in doc:
        raise ScenarioError(f"{where}: missing required key {key!r}")
    return doc[key]


def _check_schema(doc: Mapping[str, Any], expected: str, where: str) -> None:
    schema = doc.get("schema")
    if schema != expected:
        raise ScenarioError(
            f"{where}: schema is {schema!r}, this build reads {expected!r}"
        )


def _attack_from_doc(entry: Mapping[str, Any], env: Environment) -> AttackSpec:
    where = f"attack {entry.get('id', '?')!r}"
    raw_class = str(_require(entry, "class", where)).upper()
    try:
        payload_class = VulnClass(raw_class)
    except ValueError:
        raise ScenarioError(f"{where}: unknown payload class {raw_class!r}") from None
    exploit = Exploit(
        target_path=str(_require(entry, "path", where)),
        param=str(_require(entry, "param", where)),
        payload_class=payload_class,
        payload=str(_require(entry, "payload", where)),
    )
    return AttackSpec(
        id=str(_require(entry, "id", where)),
        exploit=exploit,
        bug=str(_require(entry, "bug", where)),
        code=str(_require(entry, "code", where)),
        log_file=str(entry.get("log_file", "")),
        log_payload=str(entry.get("log_payload", "")),
        requires=tuple(str(r) for r in entry.get("requires", ())),
        payoff=float(entry.get("payoff", 1.0)),
    )


def load_cyber_scenario(doc: Mapping[str, Any]) -> CyberScenario:
    name = str(doc.get("name", "unnamed"))
    _check_schema(doc, SCENARIO_SCHEMA, name)
    if doc.get("domain") != "cyber":
        raise ScenarioError(f"{name}: domain is {doc.get('domain')!r}, expected 'cyber'")
    env = load_scenario(doc)
    attacks = tuple(_attack_from_doc(e, env) for e in _require(doc, "attacks", name))
    if not attacks:
        raise ScenarioError(f"{name}: needs at least one attack")
    red = doc.get("red", {})
    blue = doc.get("blue", {})
    return CyberScenario(
        name=name,
        environment=env,
        attacks=attacks,
        findings_per_epoch=int(red.get("findings_per_epoch", 1)),
        blue_style=str(blue.get("style", "sanitize")),
        doc=doc,
    )


def load_content_scenario(doc: Mapping[str, Any]) -> ContentScenario:
    name = str(doc.get("name", "unnamed"))
    _check_schema(doc, SCENARIO_SCHEMA, name)
    if doc.get("domain") != "content":
        raise ScenarioError(f"{name}: domain is {doc.get('domain')!r}, expected 'content'")
    harmful = tuple(validate_tag(str(t)) for t in _require(doc, "harmful_tags", name))
    resistance = tuple(validate_tag(str(t)) for t in doc.get("resistance", ()))
    tasks = []
    for entry in _require(doc, "tasks", name):
        tags = frozenset(validate_tag(str(t)) for t in _require(entry, "tags", "task"))
        tasks.append(
            Prompt.from_features(
                id=str(_require(entry, "id", "task")), features=tags, harmful=True
            )
        )
    if not tasks:
        raise ScenarioError(f"{name}: needs at least one task")
    if len({t.id for t in tasks}) != len(tasks):
        raise ScenarioError(f"{name}: task ids must be unique")
    transforms = []
    for entry in _require(doc, "transforms", name):
        transforms.append(
            Transform(
                id=str(_require(entry, "id", "transform")),
                drop=frozenset(validate_tag(str(t)) for t in entry.get("drop", ())),
                add=frozenset(validate_tag(str(t)) for t in entry.get("add", ())),
                payoff=float(entry.get("payoff", 1.0)),
            )
        )
    if not transforms:
        raise ScenarioError(f"{name}: needs at least one transform")
    guard = doc.get("guard", {})
    return ContentScenario(
        name=name,
        tasks=tuple(tasks),
        transforms=tuple(transforms),
        harmful_tags=frozenset(harmful),
        resistance=frozenset(resistance),
        min_support=float(guard.get("min_support", 0.5)),
        fpr_threshold=float(guard.get("fpr_threshold", 0.05)),
        benign_per_attack=int(guard.get("benign_per_attack", 3)),
        doc=doc,
    )


def load_any_scenario(ref: str | Path) -> CyberScenario | ContentScenario:
    doc = load_doc(ref)
    domain = doc.get("domain")
    if domain == "cyber":
        return load_cyber_scenario(doc)
    if domain == "content":
        return load_content_scenario(doc)
    raise ScenarioError(f"unknown scenario domain {domain!r}")


def load_prompt_corpus(ref: str | Path) -> tuple[Prompt, ...]:
    """Read a JSONL prompt corpus (one serialized prompt per line)."""
    path = resolve_ref(ref)
    prompts = []
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            prompts.append(Prompt.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as err:
            raise ScenarioError(f"{path}: line {i} is not a prompt record: {err}") from None
    if not prompts:
        raise ScenarioError(f"{path}: corpus is empty")
    return tuple(prompts)


def validate_scenario_doc(doc: Mapping[str, Any]) -> list[str]:
    """Collect every structural problem in a scenario document.

    Returns an empty list for a well-formed scenario.  Used by the CLI's
    validate-scenario command, which wants all the problems at once
    rather than the first exception.
    """
    problems: list[str] = []
    if doc.get("schema") != SCENARIO_SCHEMA:
        problems.append(f"schema is {doc.get('schema')!r}, expected {SCENARIO_SCHEMA!r}")
    domain = doc.get("domain")
    if domain == "cyber":
        try:
            scenario = load_cyber_scenario(doc)
        except ScenarioError as err:
            return problems + [str(err)]
        env = scenario.environment
        seen = set()
        for attack in scenario.attacks:
            if attack.id in seen:
                problems.append(f"attack id {attack.id!r} is duplicated")
            seen.add(attack.id)
            endpoint = env.record(attack.exploit.target_path)
            if endpoint is None:
                problems.append(
                    f"attack {attack.id!r} targets unknown path {attack.exploit.target_path!r}"
                )
                continue
            param = endpoint.param(attack.exploit.param)
            if param is None:
                problems.append(
                    f"attack {attack.id!r} targets unknown parameter "
                    f"{attack.exploit.param!r} on {endpoint.path!r}"
                )
            elif param.vuln_class is not attack.exploit.payload_class:
                problems.append(
                    f"attack {attack.id!r} expects {attack.exploit.payload_class.value} "
                    f"but parameter {param.name!r} is {param.vuln_class.value}"
                )
        known = {a.id for a in scenario.attacks}
        for attack in scenario.attacks:
            for req in attack.requires:
                if req not in known:
                    problems.append(
                        f"attack {attack.id!r} requires unknown attack {req!r}"
                    )
                if req == attack.id:
                    problems.append(f"attack {attack.id!r} requires itself")
    elif domain == "content":
        try:
            scenario = load_content_scenario(doc)
        except ScenarioError as err:
            return problems + [str(err)]
        for task in scenario.tasks:
            if not (task.features & scenario.harmful_tags):
                problems.append(f"task {task.id!r} carries no harmful tag")
        for transform in scenario.transforms:
            if transform.add & scenario.harmful_tags:
                problems.append(
                    f"transform {transform.id!r} adds a harmful tag, which a "
                    "disguise never should"
                )
    else:
        problems.append(f"unknown domain {domain!r}")
    return problems
