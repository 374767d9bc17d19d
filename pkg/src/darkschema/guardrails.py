"""Token, cost and duration guardrails checked before every analyzer call."""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

logger = logging.getLogger(__name__)

PHASES = ("discovery", "analysis", "sanity")
DEFAULT_PARTITION = {"discovery": 0.25, "analysis": 0.70, "sanity": 0.05}
ALLOW, WARN, DENY = "allow", "warn", "deny"


class BudgetExceeded(RuntimeError):
    """Raised before an analyzer call that would breach a guardrail."""

    def __init__(self, phase: str, reason: str):
        super().__init__(f"{phase}: {reason}")
        self.phase = phase
        self.reason = reason


@dataclass(frozen=True)
class Guardrails:
    max_tokens_per_run: int | None = None
    max_duration_seconds: float | None = None
    max_cost_dollars: float | None = None
    partition: dict = field(default_factory=lambda: dict(DEFAULT_PARTITION))
    warn_threshold: float = 0.80
    price_per_input_token: float = 0.0
    price_per_output_token: float = 0.0
    output_reserve_tokens: int = 256

    def __post_init__(self):
        if set(self.partition) != set(PHASES):
            raise ValueError(f"partition must cover exactly {PHASES}")
        if abs(sum(self.partition.values()) - 1.0) > 1e-9:
            raise ValueError("phase partition must sum to 1.0")
        if not 0 < self.warn_threshold <= 1:
            raise ValueError("warn threshold must be in (0, 1]")

    def phase_cap(self, phase: str) -> float | None:
        if self.max_tokens_per_run is None:
            return None
        return self.partition[phase] * self.max_tokens_per_run

    @classmethod
    def from_config(cls, d: dict | None) -> "Guardrails":
        d = d or {}
        prices = d.get("prices", {})
        return cls(
            max_tokens_per_run=d.get("maxTokensPerRun"),
            max_duration_seconds=d.get("maxDurationSeconds"),
            max_cost_dollars=d.get("maxCostDollars"),
            partition=dict(d.get("phasePartition", DEFAULT_PARTITION)),
            warn_threshold=d.get("warnThreshold", 0.80),
            price_per_input_token=prices.get("inputPerToken", 0.0),
            price_per_output_token=prices.get("outputPerToken", 0.0),
            output_reserve_tokens=d.get("outputReserveTokens", 256),
        )


@dataclass
class PhaseCounter:
    input_tokens: int = 0
    output_tokens: int = 0
    calls: int = 0

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens


class BudgetLedger:
    """Per-phase token counters plus the pre-call check.

    Phase allotments and the run-level limits deny calls; the warning state is
    entered when run-level usage (tokens, cost or elapsed time) reaches the warn
    threshold, and callers then skip optional calls.
    """

    def __init__(self, guardrails: Guardrails | None = None,
                 counters: dict[str, PhaseCounter] | None = None, elapsed_offset: float = 0.0,
                 clock: Callable[[], float] = time.monotonic):
        self.guardrails = guardrails or Guardrails()
        self.counters = counters or {p: PhaseCounter() for p in PHASES}
        self._clock = clock
        self._started = clock()
        self._elapsed_offset = elapsed_offset
        self._lock = threading.Lock()
        self.warned = False

    # -- accounting
    @property
    def elapsed(self) -> float:
        return self._elapsed_offset + (self._clock() - self._started)

    @property
    def run_tokens(self) -> int:
        return sum(c.total for c in self.counters.values())

    def cost(self, extra_input: int = 0, extra_output: int = 0) -> float:
        g = self.guardrails
        inp = sum(c.input_tokens for c in self.counters.values()) + extra_input
        out = sum(c.output_tokens for c in self.counters.values()) + extra_output
        return inp * g.price_per_input_token + out * g.price_per_output_token

    def estimate(self, request) -> int:
        return len(request.to_json()) // 4 + self.guardrails.output_reserve_tokens

    def record(self, phase: str, usage) -> None:
        with self._lock:
            c = self.counters[phase]
            c.input_tokens += usage.input_tokens
            c.output_tokens += usage.output_tokens
            c.calls += 1

    # -- checks
    def precheck(self, phase: str, estimated_tokens: int, pending: int = 0) -> str:
        """``pending`` is tokens already reserved by calls in the same batch."""
        g = self.guardrails
        with self._lock:
            projected_phase = self.counters[phase].total + pending + estimated_tokens
            projected_run = self.run_tokens + pending + estimated_tokens
        cap = g.phase_cap(phase)
        if cap is not None and projected_phase > cap:
            return DENY
        ratios = []
        if g.max_tokens_per_run is not None:
            if projected_run > g.max_tokens_per_run:
                return DENY
            ratios.append(projected_run / g.max_tokens_per_run)
        if g.max_cost_dollars is not None:
            projected_cost = self.cost(pending + estimated_tokens)
            if projected_cost > g.max_cost_dollars:
                return DENY
            ratios.append(projected_cost / g.max_cost_dollars if g.max_cost_dollars else 1.0)
        if g.max_duration_seconds is not None:
            if self.elapsed >= g.max_duration_seconds:
                return DENY
            ratios.append(self.elapsed / g.max_duration_seconds)
        if ratios and max(ratios) >= g.warn_threshold:
            if not self.warned:
                logger.warning("guardrail warning threshold reached; skipping optional calls")
            self.warned = True
            return WARN
        return ALLOW

    precheck_budget = precheck

    def require(self, phase: str, estimated_tokens: int, pending: int = 0) -> str:
        decision = self.precheck(phase, estimated_tokens, pending)
        if decision == DENY:
            raise BudgetExceeded(phase, f"call of ~{estimated_tokens} tokens would exceed the "
                                        f"{phase} budget or a run limit")
        return decision

    # -- persistence
    def counters_dict(self) -> dict:
        return {p: {"input_tokens": c.input_tokens, "output_tokens": c.output_tokens,
                    "calls": c.calls} for p, c in self.counters.items()}

    @staticmethod
    def counters_from_dict(d: dict) -> dict[str, PhaseCounter]:
        return {p: PhaseCounter(**d.get(p, {})) for p in PHASES}
