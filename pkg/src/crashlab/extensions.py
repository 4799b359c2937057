"""Custom supervision strategies consulted before the built-in decider:
version fallback, preemptive reactions to domain events, healer actors, and
load-balancing routers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import AllTargetsDeadError, DuplicatePluginError
from .registry import VersionId, VersionRegistry
from .supervision import Directive, FailureRecord, RestartHistory
from .types import ActorId, BehaviorSpec, BehaviorOutcome, Envelope, Path, fingerprint


# ---------------------------------------------------------------------------
# actions a plugin may return instead of a plain directive

class ExtendedAction:
    """Marker base for failure reactions beyond the four directives."""


@dataclass(frozen=True)
class FallbackToVersion(ExtendedAction):
    version: VersionId


@dataclass(frozen=True)
class SpawnHealer(ExtendedAction):
    spec: BehaviorSpec


@dataclass(frozen=True)
class QuarantinePayload(ExtendedAction):
    payload_fp: str


class PreemptiveAction:
    """Marker base for actions taken before any failure occurred."""


@dataclass(frozen=True)
class PreemptiveRestart(PreemptiveAction):
    target: Path


@dataclass(frozen=True)
class RaiseAlert(PreemptiveAction):
    reason: str


@dataclass(frozen=True)
class ThrottleSender(PreemptiveAction):
    sender: Path
    delay: int = 2
    duration: int = 20


@dataclass(frozen=True)
class DomainEvent:
    tick: int
    actor: Path
    is_error: bool


# ---------------------------------------------------------------------------
# plugin protocol and registry

class CustomStrategyPlugin:
    """Deterministic hook pair consulted by the supervision machinery.

    ``on_failure`` may return a Directive, an ExtendedAction, or None to
    defer. ``on_domain_event`` inspects a window of recent domain events and
    may return a PreemptiveAction.
    """

    name = "custom"
    wants_domain_events = False
    window = 50

    def on_failure(self, failure: FailureRecord, history, registry):
        return None

    def on_domain_event(self, events: Sequence[DomainEvent]):
        return None

    def classify(self, payload) -> bool:
        """Is this payload a domain-error event? Default: dict with truthy "error"."""
        return isinstance(payload, Mapping) and bool(payload.get("error"))


_PLUGINS: Dict[str, Callable[[dict], CustomStrategyPlugin]] = {}


def register_plugin(name: str, factory: Callable[[dict], CustomStrategyPlugin]) -> None:
    if name in _PLUGINS:
        raise DuplicatePluginError(name)
    _PLUGINS[name] = factory


def create_plugin(name: str, params: dict) -> CustomStrategyPlugin:
    if name not in _PLUGINS:
        raise KeyError(f"unknown strategy plugin {name!r}")
    return _PLUGINS[name](params)


def plugin_names() -> List[str]:
    return sorted(_PLUGINS)


# ---------------------------------------------------------------------------
# fallback to a previous version

class FallbackPlugin(CustomStrategyPlugin):
    """Swap the failing actor back to an older registered version once the
    active version has failed often enough inside the supervision window."""

    name = "fallback"

    def __init__(self, threshold: int = 3, window: Optional[int] = None):
        self.threshold = threshold
        self._window = window

    def on_failure(self, failure: FailureRecord, history: RestartHistory, registry: VersionRegistry):
        type_name = failure.child.path[-1] if registry is None else None
        return fallback_on_failure(
            failure,
            history,
            registry,
            threshold=self.threshold,
            window=self._window or type(self).window,
        )


def fallback_on_failure(
    failure: FailureRecord,
    history: RestartHistory,
    registry: VersionRegistry,
    *,
    threshold: int = 3,
    window: int = 100,
    alerts: Optional[list] = None,
):
    """Return FallbackToVersion when the active version keeps failing.

    Counts this child's failures within the window (the current one
    included); below the threshold, or with no older version to fall back
    to, defers to the built-in decider.
    """
    if history is None or registry is None:
        return None
    type_name = _failure_type_name(failure, registry)
    if type_name is None or not registry.has_type(type_name):
        return None
    recent = history.failures_in_window(failure.child.name, failure.at, window)
    if len(recent) < threshold:
        return None
    active = registry.active_version(type_name)
    try:
        previous = registry.previous_version(active)
    except Exception:
        if alerts is not None:
            alerts.append(f"no older version than {active} for {type_name}")
        return None
    return FallbackToVersion(previous)


def _failure_type_name(failure: FailureRecord, registry: VersionRegistry) -> Optional[str]:
    # the child name is the path leaf; its type is resolved by the runtime,
    # which stores it on the failure's child cell. Fall back to the leaf name.
    type_name = getattr(failure, "type_name", None)
    if type_name:
        return type_name
    name = failure.child.name
    if registry.has_type(name):
        return name
    # common convention: instances named after their type with a suffix
    for candidate in (name.rsplit("-", 1)[0], name.rsplit("_", 1)[0]):
        if registry.has_type(candidate):
            return candidate
    return None


# ---------------------------------------------------------------------------
# preemptive strategy over domain events

class PreemptivePlugin(CustomStrategyPlugin):
    """Restart an actor before it fails when its recent domain events are
    dominated by domain errors."""

    name = "preemptive"
    wants_domain_events = True

    def __init__(self, rho: float = 0.5, min_events: int = 5, window: int = 50):
        self.rho = rho
        self.min_events = min_events
        self.window = window

    def on_domain_event(self, events: Sequence[DomainEvent]):
        return evaluate_preemptive(self, events)


def evaluate_preemptive(plugin, events: Sequence[DomainEvent]) -> Optional[PreemptiveAction]:
    """Default preemptive rule: error fraction above rho over >= min_events."""
    rho = getattr(plugin, "rho", 0.5)
    min_events = getattr(plugin, "min_events", 5)
    if len(events) < min_events:
        return None
    errors = sum(1 for e in events if e.is_error)
    if errors / len(events) > rho:
        return PreemptiveRestart(events[-1].actor)
    return None


# ---------------------------------------------------------------------------
# healer actors

class HealerPlugin(CustomStrategyPlugin):
    """Spawn a sibling healer that examines the failure and reports back."""

    name = "healer"

    def __init__(self, healer_spec: BehaviorSpec):
        self.healer_spec = healer_spec

    def on_failure(self, failure: FailureRecord, history, registry):
        return SpawnHealer(self.healer_spec)


def spawn_healer(system, failure: FailureRecord, healer_spec: BehaviorSpec) -> ActorId:
    """Spawn a healer next to the failed child with the failure as first message."""
    supervisor_path = failure.child.parent_path
    name = f"healer-{failure.child.name}-{failure.at}"
    healer_id = system.spawn(system.actor_id(supervisor_path), healer_spec, name)
    system.send(
        system.actor_id(supervisor_path),
        healer_id,
        {"patient": str(failure.child), "fault": failure.fault.value},
    )
    return healer_id


# ---------------------------------------------------------------------------
# quarantine plugin (attachable directly, also used by the builder)

class QuarantinePlugin(CustomStrategyPlugin):
    """Dead-letter a known-poison payload fingerprint before delivery."""

    name = "quarantine"

    def __init__(self, payload_fp: str):
        self.payload_fp = payload_fp

    def on_failure(self, failure: FailureRecord, history, registry):
        if failure.trigger is not None and failure.trigger.payload_fingerprint() == self.payload_fp:
            return QuarantinePayload(self.payload_fp)
        return None


register_plugin("fallback", lambda p: FallbackPlugin(**p))
register_plugin("preemptive", lambda p: PreemptivePlugin(**p))
register_plugin("quarantine", lambda p: QuarantinePlugin(**p))


# ---------------------------------------------------------------------------
# load-balancing routers

@dataclass(frozen=True)
class RouterSpec:
    policy: str  # "round_robin" | "least_mailbox"
    targets: Tuple[Path, ...]

    def __post_init__(self) -> None:
        if not self.targets:
            raise ValueError("router needs at least one target")
        if self.policy not in {"round_robin", "least_mailbox"}:
            raise ValueError(f"unknown routing policy {self.policy!r}")


def route(spec: RouterSpec, envelope: Envelope, view, cursor: int = 0) -> Tuple[Path, int]:
    """Pick the target for one envelope; returns (target path, next cursor).

    round_robin walks targets cyclically, skipping dead ones; least_mailbox
    picks the live target with the smallest mailbox, ties broken by path
    order. Raises AllTargetsDeadError when nothing is live.
    """
    live = [t for t in spec.targets if view.is_live(t)]
    if not live:
        raise AllTargetsDeadError(str([list(t) for t in spec.targets]))
    if spec.policy == "round_robin":
        n = len(spec.targets)
        for probe in range(n):
            candidate = spec.targets[(cursor + probe) % n]
            if view.is_live(candidate):
                return candidate, (cursor + probe + 1) % n
        raise AllTargetsDeadError(str([list(t) for t in spec.targets]))
    best = min(live, key=lambda t: (view.mailbox_size(t), t))
    return best, cursor


def router_behavior(spec: RouterSpec, type_name: str = "router") -> BehaviorSpec:
    """Wrap a RouterSpec as an ordinary actor so routing shows in traces."""

    def handler(state, envelope, ctx):
        cursor = state or 0
        try:
            target, new_cursor = route(spec, envelope, ctx, cursor)
        except AllTargetsDeadError:
            return BehaviorOutcome(new_state=cursor)  # nothing live; drop
        return BehaviorOutcome(new_state=new_cursor, outbound=((target, envelope.payload),))

    return BehaviorSpec(type_name=type_name, handler=handler, initial_state=0)
