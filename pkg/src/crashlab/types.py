"""Core domain types shared across the runtime."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence, Tuple


class FaultKind(str, enum.Enum):
    HANDLER_PANIC = "HandlerPanic"
    POISON_MESSAGE = "PoisonMessage"
    TIMEOUT = "Timeout"
    MAILBOX_OVERFLOW = "MailboxOverflow"
    START_FAILURE = "StartFailure"
    INJECTED_CRASH = "InjectedCrash"
    INJECTED_DELAY = "InjectedDelay"
    INJECTED_CORRUPTION = "InjectedCorruption"


#: Kinds that only the stressor may originate.
INJECTED_KINDS = frozenset(
    {FaultKind.INJECTED_CRASH, FaultKind.INJECTED_DELAY, FaultKind.INJECTED_CORRUPTION}
)

#: Kinds treated as "the actor crashed processing a message".
CRASH_KINDS = frozenset(
    {FaultKind.HANDLER_PANIC, FaultKind.POISON_MESSAGE, FaultKind.INJECTED_CRASH}
)

#: Kinds treated as latency trouble.
LATENCY_KINDS = frozenset({FaultKind.TIMEOUT, FaultKind.INJECTED_DELAY})


class EventKind(str, enum.Enum):
    DELIVERED = "Delivered"
    PROCESSED = "Processed"
    SPAWNED = "Spawned"
    FAILED = "Failed"
    DIRECTIVE_APPLIED = "DirectiveApplied"
    ESCALATED = "Escalated"
    VERSION_ACTIVATED = "VersionActivated"
    FAULT_INJECTED = "FaultInjected"


class LifecycleState(enum.Enum):
    STARTING = "Starting"
    RUNNING = "Running"
    SUSPENDED = "Suspended"
    RESTARTING = "Restarting"
    STOPPED = "Stopped"


_LEGAL_TRANSITIONS = {
    LifecycleState.STARTING: {LifecycleState.RUNNING},
    LifecycleState.RUNNING: {
        LifecycleState.SUSPENDED,
        LifecycleState.RESTARTING,
        LifecycleState.STOPPED,
    },
    LifecycleState.SUSPENDED: {
        LifecycleState.RUNNING,
        LifecycleState.RESTARTING,
        LifecycleState.STOPPED,
    },
    LifecycleState.RESTARTING: {LifecycleState.STARTING},
    LifecycleState.STOPPED: set(),
}


def legal_transition(current: LifecycleState, target: LifecycleState) -> bool:
    return target in _LEGAL_TRANSITIONS[current]


Path = Tuple[str, ...]


@dataclass(frozen=True, order=True)
class ActorId:
    """Identity of one actor incarnation: tree path plus restart counter."""

    path: Path
    incarnation: int = 0

    def __post_init__(self) -> None:
        if self.incarnation < 0:
            raise ValueError("incarnation must be non-negative")

    def __str__(self) -> str:
        return "/" + "/".join(self.path)

    @property
    def name(self) -> str:
        return self.path[-1]

    @property
    def parent_path(self) -> Path:
        return self.path[:-1]


def parse_path(text: str) -> Path:
    """Parse "/root/a/b" into ("root", "a", "b")."""
    parts = tuple(p for p in text.strip().split("/") if p)
    if not parts:
        raise ValueError(f"empty actor path: {text!r}")
    return parts


def fingerprint(value: Any) -> str:
    """Stable short digest of a payload or state value.

    Values are expected to be plain serializable data (the runtime only ever
    looks at payloads through this digest or via equality). Non-serializable
    objects fall back to repr, which is only stable if the object's repr is.
    """
    try:
        blob = json.dumps(value, sort_keys=True, separators=(",", ":"), default=repr)
    except (TypeError, ValueError):
        blob = repr(value)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class Envelope:
    """One immutable message in flight."""

    sender: ActorId
    target: ActorId
    payload: Any
    seq: int
    sent_at: int

    def payload_fingerprint(self) -> str:
        return fingerprint(self.payload)

    def describe(self) -> dict:
        return {
            "from": str(self.sender),
            "to": str(self.target),
            "seq": self.seq,
            "payload_fp": self.payload_fingerprint(),
        }


@dataclass(frozen=True)
class BehaviorSpec:
    """Named, deterministic message handler plus its initial state.

    The handler must be a pure function of (state, envelope, context): given
    the same inputs and the same context RNG stream it must produce the same
    outcome. All nondeterminism must go through ``ctx.rng``.
    """

    type_name: str
    handler: Callable[[Any, Envelope, "ActorContext"], "BehaviorOutcome"]
    initial_state: Any = None


@dataclass(frozen=True)
class BehaviorOutcome:
    """What one message handling produced.

    A failing outcome carries only the fault kind: it cannot also mutate
    state, send, or spawn.
    """

    new_state: Any = None
    outbound: Tuple[Tuple[Any, Any], ...] = ()  # (target path or ActorId, payload)
    spawns: Tuple[Tuple[str, BehaviorSpec], ...] = ()
    failure: Optional[FaultKind] = None

    def __post_init__(self) -> None:
        if self.failure is not None and (self.outbound or self.spawns):
            raise ValueError("a failing outcome cannot send or spawn")


class Fault(Exception):
    """Raise inside a handler to fail with a specific fault kind."""

    def __init__(self, kind: FaultKind, info: Optional[str] = None):
        super().__init__(f"{kind.value}" + (f": {info}" if info else ""))
        self.kind = kind
        self.info = info


@dataclass(frozen=True)
class EventRecord:
    """One observable runtime event; the trace is a list of these."""

    tick: int
    kind: EventKind
    subject: ActorId
    detail: Mapping[str, Any] = field(default_factory=dict)

    def to_line(self) -> str:
        # Fixed key order so serialized traces hash stably.
        doc = {
            "tick": self.tick,
            "kind": self.kind.value,
            "subject": str(self.subject),
            "incarnation": self.subject.incarnation,
            "detail": _normalize(self.detail),
        }
        return json.dumps(doc, separators=(",", ":"), sort_keys=False)


def _normalize(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {k: _normalize(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, ActorId):
        return str(value)
    return value


class ActorContext:
    """Read-only view handed to behavior handlers."""

    def __init__(self, system, actor_id: ActorId, rng):
        self._system = system
        self.self_id = actor_id
        self.rng = rng

    @property
    def tick(self) -> int:
        return self._system.tick

    @property
    def parent_path(self) -> Path:
        return self.self_id.parent_path

    def mailbox_size(self, path) -> int:
        """Mailbox depth of another actor; used by routing behaviors."""
        return self._system.mailbox_size(path)

    def is_live(self, path) -> bool:
        return self._system.is_live(path)
