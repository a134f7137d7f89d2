"""Exception taxonomy shared across the engine.

Every failure mode the engine can signal deliberately derives from
``RvbError`` so callers (and the CLI exit-code mapping) can distinguish
engine-level failures from genuine bugs.
"""

from __future__ import annotations


class RvbError(Exception):
    """Base class for all deliberate engine errors."""


# --- belief / decision layer ------------------------------------------------

class InvalidSpaceError(RvbError):
    """Strategy space is empty or contains duplicate ids."""


class DegenerateEvidenceError(RvbError):
    """Hard-filter evidence eliminated every strategy; the model is broken."""


class IncompleteUtilityError(RvbError):
    """Utility table lacks an (action, strategy) entry needed for selection."""


# --- environments -----------------------------------------------------------

class ScenarioError(RvbError):
    """Scenario document is malformed: duplicates, unknown enums, bad refs."""


class PatchError(RvbError):
    """Patch names an endpoint or parameter that does not exist."""


class NullProductionError(RvbError):
    """Rule mining produced no candidate at the configured support level."""


# --- agents -----------------------------------------------------------------

class RemediationFailureError(RvbError):
    """Defender exhausted its retry budget without landing a patch."""

    def __init__(self, message: str, attempts: tuple[dict, ...] = ()):
        super().__init__(message)
        self.attempts = attempts


class AdapterError(RvbError):
    """LLM HTTP adapter gave up after its retry budget or got garbage back."""


# --- archive ----------------------------------------------------------------

class ArchiveOrderError(RvbError):
    """Epoch records are not contiguous from 1 (gap or duplicate)."""


class ArchiveIOError(RvbError):
    """Archive bytes are truncated or fail their per-record checksum."""


class SchemaError(RvbError):
    """Archive or document declares an unknown schema version."""


class CodecError(RvbError):
    """Attack-log text does not match the fixed four-key record shape."""


# --- metrics / cost ---------------------------------------------------------

class UndefinedMetricError(RvbError):
    """Metric has no value on this input (empty set); never silently 0."""


class UsageError(RvbError):
    """Token usage entry is malformed (negative counts)."""


class MissingPriceError(RvbError):
    """Cost estimate requested for a model absent from the price table."""


# --- configuration ----------------------------------------------------------

class ConfigError(RvbError):
    """Run configuration is malformed or references unsupported agents."""
