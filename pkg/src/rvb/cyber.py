"""Simulated vulnerable web service used as the hardening target.

The environment is a declarative stand-in for a deployed application:
endpoints with typed parameters, a per-parameter flag saying whether the
input path is sanitized, and a service-level regression notion (every
endpoint required for service must exist and stay functional).  States
are immutable snapshots; applying a patch yields a successor state and
never mutates the original, which is what makes runs replayable.

An exploit lands exactly when its target endpoint exists and is
functional, the parameter exists, the payload class matches the
parameter's weakness class, and the parameter is not sanitized.  Nothing
else — authentication, timing, encodings — is modeled; the environment
exists to give the game loop crisp success/regression bits.

Removing an endpoint leaves a tombstone in the state (``removed=True``)
so a snapshot alone can still answer "does every required endpoint
exist".  Tombstoned endpoints are invisible to exploits and to the
vulnerability count.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Mapping

from .errors import PatchError, ScenarioError


class VulnClass(Enum):
    SQLI = "SQLI"
    XSS = "XSS"
    AUTH_BYPASS = "AUTH_BYPASS"
    PATH_TRAVERSAL = "PATH_TRAVERSAL"
    NONE = "NONE"


@dataclass(frozen=True)
class ParamSpec:
    """One request parameter of an endpoint.

    A parameter with weakness class NONE has nothing to sanitize, so its
    ``sanitized`` flag is normalized to True at construction.
    """

    name: str
    vuln_class: VulnClass = VulnClass.NONE
    sanitized: bool = False

    def __post_init__(self) -> None:
        if self.vuln_class is VulnClass.NONE and not self.sanitized:
            object.__setattr__(self, "sanitized", True)


@dataclass(frozen=True)
class Endpoint:
    path: str
    params: tuple[ParamSpec, ...] = ()
    functional: bool = True
    required_for_service: bool = False
    removed: bool = False

    def __post_init__(self) -> None:
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ScenarioError(f"duplicate parameter names on endpoint {self.path!r}")

    def param(self, name: str) -> ParamSpec | None:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class Exploit:
    """A concrete attack attempt against one endpoint parameter."""

    target_path: str
    param: str
    payload_class: VulnClass
    payload: str

    def __post_init__(self) -> None:
        if self.payload_class is VulnClass.NONE:
            raise ValueError("an exploit must carry a real payload class, not NONE")

    def identity(self) -> tuple[str, str, str]:
        """Dedup key for attack-surface accounting: same (path, param,
        class) means the same exploit however the payload is spelled."""
        return (self.target_path, self.param, self.payload_class.value)


class PatchKind(Enum):
    SANITIZE = "sanitize"
    REMOVE_ENDPOINT = "remove_endpoint"
    REWRITE_LOGIC = "rewrite_logic"


@dataclass(frozen=True)
class Patch:
    """A defender action against one endpoint (or one of its parameters).

    ``diff_text`` is informational only; the structured fields drive the
    state transition.
    """

    target_path: str
    kind: PatchKind
    param: str | None = None
    diff_text: str = ""

    def __post_init__(self) -> None:
        if self.kind in (PatchKind.SANITIZE, PatchKind.REWRITE_LOGIC) and not self.param:
            raise ValueError(f"{self.kind.value} patch needs a target parameter")

    def as_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "param": self.param,
            "path": self.target_path,
        }


@dataclass(frozen=True)
class CyberOutcome:
    """Per-test-case verification result: attack bit, regression bit."""

    r_att: int
    r_reg: int

    def __post_init__(self) -> None:
        if self.r_att not in (0, 1) or self.r_reg not in (0, 1):
            raise ValueError("outcome bits must be 0 or 1")


@dataclass(frozen=True)
class Environment:
    """Immutable snapshot of the service under attack."""

    endpoints: tuple[Endpoint, ...]
    blue_error_rate: float = 0.0

    def __post_init__(self) -> None:
        paths = [e.path for e in self.endpoints]
        if len(set(paths)) != len(paths):
            raise ScenarioError("duplicate endpoint paths in environment")
        if not 0.0 <= self.blue_error_rate <= 1.0:
            raise ScenarioError(f"blue error rate must lie in [0, 1], got {self.blue_error_rate}")

    def endpoint(self, path: str) -> Endpoint | None:
        """Live endpoint at ``path``; tombstoned endpoints are invisible."""
        for e in self.endpoints:
            if e.path == path and not e.removed:
                return e
        return None

    def record(self, path: str) -> Endpoint | None:
        """Endpoint at ``path`` including tombstones (bookkeeping view)."""
        for e in self.endpoints:
            if e.path == path:
                return e
        return None


def load_scenario(doc: Mapping[str, Any]) -> Environment:
    """Build an Environment from a parsed scenario document.

    Raises :class:`ScenarioError` on duplicate paths/params or unknown
    weakness classes.  Only the ``endpoints`` and ``blue_error_rate``
    sections are read here; agent sections are consumed elsewhere.
    """
    raw = doc.get("endpoints")
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("scenario must declare a non-empty endpoints list")
    endpoints = []
    for item in raw:
        params = []
        for praw in item.get("params", []):
            cls_name = str(praw.get("vuln", "NONE"))
            try:
                cls = VulnClass[cls_name]
            except KeyError:
                raise ScenarioError(f"unknown weakness class {cls_name!r}") from None
            default_clean = cls is VulnClass.NONE
            params.append(
                ParamSpec(
                    name=str(praw["name"]),
                    vuln_class=cls,
                    sanitized=bool(praw.get("sanitized", default_clean)),
                )
            )
        endpoints.append(
            Endpoint(
                path=str(item["path"]),
                params=tuple(params),
                functional=bool(item.get("functional", True)),
                required_for_service=bool(item.get("required", False)),
            )
        )
    return Environment(
        endpoints=tuple(endpoints),
        blue_error_rate=float(doc.get("blue_error_rate", 0.0)),
    )


def attempt_exploit(env: Environment, exploit: Exploit) -> int:
    """1 if the exploit lands against this state, else 0.

    Success requires: endpoint exists and is functional, parameter
    exists, payload class matches the parameter's weakness class, and
    the parameter is not sanitized.  Probing a missing endpoint or
    parameter is a legal miss, not an error.
    """
    ep = env.endpoint(exploit.target_path)
    if ep is None or not ep.functional:
        return 0
    p = ep.param(exploit.param)
    if p is None:
        return 0
    if p.vuln_class is not exploit.payload_class or p.sanitized:
        return 0
    return 1


def apply_patch(env: Environment, patch: Patch, rng: random.Random | None = None) -> Environment:
    """Apply one patch, returning the successor state.

    * sanitize: the named parameter's input path is cleaned;
    * remove_endpoint: the endpoint is tombstoned (gone for exploits and
      for service, still present for bookkeeping);
    * rewrite_logic: sanitizes the parameter, but with probability
      ``env.blue_error_rate`` the rewrite breaks the endpoint
      (functional flips to False).  A non-zero error rate needs ``rng``.

    Unknown endpoint or parameter targets raise :class:`PatchError`.
    """
    ep = env.endpoint(patch.target_path)
    if ep is None:
        raise PatchError(f"unknown endpoint {patch.target_path!r}")
    if patch.kind is PatchKind.REMOVE_ENDPOINT:
        new_ep = replace(ep, removed=True)
        return replace(
            env, endpoints=tuple(new_ep if e.path == ep.path else e for e in env.endpoints)
        )

    assert patch.param is not None
    target = ep.param(patch.param)
    if target is None:
        raise PatchError(f"unknown parameter {patch.param!r} on endpoint {patch.target_path!r}")

    new_params = tuple(
        replace(p, sanitized=True) if p.name == patch.param else p for p in ep.params
    )
    functional = ep.functional
    if patch.kind is PatchKind.REWRITE_LOGIC and env.blue_error_rate > 0.0:
        if rng is None:
            raise ValueError("rewrite_logic with a non-zero error rate needs an rng")
        if rng.random() < env.blue_error_rate:
            functional = False
    new_ep = replace(ep, params=new_params, functional=functional)
    new_endpoints = tuple(new_ep if e.path == ep.path else e for e in env.endpoints)
    return replace(env, endpoints=new_endpoints)


def regression_check(env: Environment) -> int:
    """1 when every endpoint required for service exists and is functional."""
    for e in env.endpoints:
        if e.required_for_service and (e.removed or not e.functional):
            return 0
    return 1


def vulnerability_count(env: Environment) -> int:
    """Number of reachable unsanitized weak parameters (the C metric)."""
    count = 0
    for e in env.endpoints:
        if e.removed:
            continue
        for p in e.params:
            if p.vuln_class is not VulnClass.NONE and not p.sanitized:
                count += 1
    return count
