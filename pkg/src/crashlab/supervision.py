"""Built-in supervision strategies: how a parent reacts to a child failure.

The decision side is pure (decide / record_failure); applying a directive
mutates the system and is implemented by System.apply_directive, which this
module's apply_directive wrapper forwards to so the operation is usable
standalone in tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Union

from .types import ActorId, Envelope, FaultKind


class Directive(str, enum.Enum):
    RESUME = "Resume"
    RESTART = "Restart"
    STOP = "Stop"
    ESCALATE = "Escalate"


class Scope(str, enum.Enum):
    ONE_FOR_ONE = "one_for_one"
    ALL_FOR_ONE = "all_for_one"
    REST_FOR_ONE = "rest_for_one"


@dataclass(frozen=True)
class FailureRecord:
    """One observed failure, as seen by the supervisor deciding on it."""

    child: ActorId
    fault: FaultKind
    trigger: Optional[Envelope]
    at: int
    restart_count_in_window: int = 0
    type_name: Optional[str] = None
    version: Optional[int] = None

    def with_count(self, count: int) -> "FailureRecord":
        return replace(self, restart_count_in_window=count)


@dataclass(frozen=True)
class SupervisionStrategySpec:
    """Declarative reaction policy for one supervisor.

    decider maps fault kinds to directives; anything unmapped falls back to
    default_directive. Once restart_count_in_window reaches max_restarts the
    decision is forced to Escalate regardless of the table.
    """

    scope: Scope = Scope.ONE_FOR_ONE
    decider: Mapping[FaultKind, Directive] = field(default_factory=dict)
    default_directive: Directive = Directive.RESTART
    max_restarts: int = 3
    window: int = 100
    plugin: Optional[str] = None
    plugin_params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    def table_directive(self, fault: FaultKind) -> Directive:
        return self.decider.get(fault, self.default_directive)


DEFAULT_STRATEGY = SupervisionStrategySpec()


class RestartHistory:
    """Per-supervisor bookkeeping behind the restart intensity rule."""

    def __init__(self):
        self._restart_ticks: Dict[str, List[int]] = {}
        self._failures: Dict[str, List[FailureRecord]] = {}

    def record_restart(self, child_name: str, tick: int) -> None:
        self._restart_ticks.setdefault(child_name, []).append(tick)

    def record_failure(self, failure: FailureRecord) -> None:
        self._failures.setdefault(failure.child.name, []).append(failure)

    def restarts_in_window(self, child_name: str, now: int, window: int) -> int:
        ticks = self._restart_ticks.get(child_name, [])
        return sum(1 for t in ticks if now - window <= t <= now)

    def failures_in_window(self, child_name: str, now: int, window: int):
        return [
            f
            for f in self._failures.get(child_name, [])
            if now - window <= f.at <= now
        ]

    def clear(self) -> None:
        self._restart_ticks.clear()
        self._failures.clear()


def record_failure(history: RestartHistory, failure: FailureRecord, window: int) -> int:
    """Log the failure and return the restart count inside the window."""
    history.record_failure(failure)
    return history.restarts_in_window(failure.child.name, failure.at, window)


def decide(
    spec: SupervisionStrategySpec,
    failure: FailureRecord,
    *,
    plugin=None,
    history: Optional[RestartHistory] = None,
    registry=None,
):
    """Pick the reaction to a failure.

    A custom plugin, when attached, is consulted first and may return a
    Directive, an extended action, or None to defer to the built-in rule:
    escalate once the restart intensity is exhausted, otherwise take the
    decider table entry for the fault kind.
    """
    if plugin is not None:
        result = plugin.on_failure(failure, history, registry)
        if result is not None:
            return result
    if failure.restart_count_in_window >= spec.max_restarts:
        return Directive.ESCALATE
    return spec.table_directive(failure.fault)


def affected_order(scope: Scope, live_children: List[str], child_name: str) -> List[str]:
    """Names of children a directive touches, in application order.

    one_for_one: the child alone. all_for_one: every live sibling in spawn
    order. rest_for_one: the child and later-spawned siblings, latest first.
    """
    if scope == Scope.ONE_FOR_ONE:
        return [child_name]
    if scope == Scope.ALL_FOR_ONE:
        return list(live_children)
    idx = live_children.index(child_name)
    return list(reversed(live_children[idx:]))


def apply_directive(system, supervisor_path, failure: FailureRecord, directive: Directive):
    """Apply a decided directive through the system; returns emitted events."""
    return system.apply_directive(supervisor_path, failure, directive)
