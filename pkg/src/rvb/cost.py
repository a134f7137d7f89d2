"""Token usage accounting and cost estimation.

Usage is tracked per (round, role, model) in an append-only ledger.
Prices are quoted per million tokens, input and output separately, and
cost is the plain linear sum input/1e6 * p_in + output/1e6 * p_out —
no rounding anywhere except at display time (two decimals).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import MissingPriceError, UsageError

TOKENS_PER_PRICE_UNIT = 1_000_000


@dataclass(frozen=True)
class UsageEntry:
    round: int
    role: str
    model: str
    input_tokens: int
    output_tokens: int

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise UsageError(
                f"token counts must be >= 0, got input={self.input_tokens} "
                f"output={self.output_tokens}"
            )

    def as_dict(self) -> dict[str, Any]:
        return {
            "input_tokens": self.input_tokens,
            "model": self.model,
            "output_tokens": self.output_tokens,
            "role": self.role,
            "round": self.round,
        }


class UsageLedger:
    """Append-only record of token usage across a run."""

    def __init__(self) -> None:
        self._entries: list[UsageEntry] = []

    def record(
        self, round: int, role: str, model: str, input_tokens: int, output_tokens: int
    ) -> UsageEntry:
        entry = UsageEntry(round, role, model, input_tokens, output_tokens)
        self._entries.append(entry)
        return entry

    @property
    def entries(self) -> tuple[UsageEntry, ...]:
        return tuple(self._entries)

    def total_tokens(self) -> tuple[int, int, int]:
        """(input, output, combined) across every entry."""
        tin = sum(e.input_tokens for e in self._entries)
        tout = sum(e.output_tokens for e in self._entries)
        return tin, tout, tin + tout

    def by_round(self) -> dict[int, tuple[int, int]]:
        out: dict[int, tuple[int, int]] = {}
        for e in self._entries:
            tin, tout = out.get(e.round, (0, 0))
            out[e.round] = (tin + e.input_tokens, tout + e.output_tokens)
        return out

    def by_role(self) -> dict[str, tuple[int, int]]:
        out: dict[str, tuple[int, int]] = {}
        for e in self._entries:
            tin, tout = out.get(e.role, (0, 0))
            out[e.role] = (tin + e.input_tokens, tout + e.output_tokens)
        return out

    def by_model(self) -> dict[str, tuple[int, int]]:
        out: dict[str, tuple[int, int]] = {}
        for e in self._entries:
            tin, tout = out.get(e.model, (0, 0))
            out[e.model] = (tin + e.input_tokens, tout + e.output_tokens)
        return out

    @classmethod
    def from_entries(cls, entries: Mapping[str, Any] | Any) -> "UsageLedger":
        ledger = cls()
        for e in entries:
            ledger.record(
                int(e["round"]), str(e["role"]), str(e["model"]),
                int(e["input_tokens"]), int(e["output_tokens"]),
            )
        return ledger


@dataclass(frozen=True)
class PriceTable:
    """Per-model prices per million tokens: model -> (input, output)."""

    prices: Mapping[str, tuple[float, float]]
    currency: str = "$"

    def __post_init__(self) -> None:
        clean = {}
        for model, pair in self.prices.items():
            p_in, p_out = float(pair[0]), float(pair[1])
            if p_in < 0 or p_out < 0:
                raise ValueError(f"prices for {model!r} must be >= 0")
            clean[model] = (p_in, p_out)
        object.__setattr__(self, "prices", clean)

    def pair(self, model: str) -> tuple[float, float]:
        try:
            return self.prices[model]
        except KeyError:
            raise MissingPriceError(f"no price listed for model {model!r}") from None

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "PriceTable":
        prices = {}
        for model, spec in doc.get("models", {}).items():
            prices[model] = (float(spec["input"]), float(spec["output"]))
        return cls(prices=prices, currency=str(doc.get("currency", "$")))


@dataclass(frozen=True)
class CostReport:
    per_round: Mapping[int, float]
    total: float
    currency: str

    def display_total(self) -> str:
        """Rounding happens here and only here."""
        return f"{self.currency}{self.total:.2f}"


def estimate_cost(ledger: UsageLedger, prices: PriceTable) -> CostReport:
    """Linear cost of the ledger under the price table.

    A model missing from the table raises :class:`MissingPriceError`;
    zero-priced models contribute exactly zero.
    """
    per_round: dict[int, float] = {}
    total = 0.0
    for entry in ledger.entries:
        p_in, p_out = prices.pair(entry.model)
        cost = (
            entry.input_tokens / TOKENS_PER_PRICE_UNIT * p_in
            + entry.output_tokens / TOKENS_PER_PRICE_UNIT * p_out
        )
        per_round[entry.round] = per_round.get(entry.round, 0.0) + cost
        total += cost
    return CostReport(per_round=per_round, total=total, currency=prices.currency)


def relative_reduction(reference_total: float, actual_total: float) -> float:
    """Fractional saving of ``actual`` against ``reference`` (e.g. 0.18...)."""
    if reference_total <= 0:
        raise ValueError("reference total must be positive")
    return 1.0 - actual_total / reference_total
