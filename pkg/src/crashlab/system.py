"""Deterministic single-threaded actor runtime.

One logical thread drives everything: each step executes exactly one unit of
work (one envelope processed by one actor, or one lifecycle action) and
advances the tick counter. Work selection is deterministic: lifecycle actions
first in FIFO order, then the mailbox head with the smallest
(arrival tick, target path, per-pair seq) key. Identical inputs and seed
therefore produce byte-identical traces.
"""

from __future__ import annotations

import heapq
import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .errors import (
    DeadParentError,
    DuplicateNameError,
    MailboxOverflowError,
    TickBudgetExhausted,
)
from .registry import VersionId, VersionRegistry
from .supervision import (
    DEFAULT_STRATEGY,
    Directive,
    FailureRecord,
    RestartHistory,
    Scope,
    SupervisionStrategySpec,
    affected_order,
    decide,
)
from .types import (
    ActorContext,
    ActorId,
    BehaviorOutcome,
    BehaviorSpec,
    Envelope,
    EventKind,
    EventRecord,
    Fault,
    FaultKind,
    LifecycleState,
    Path,
    fingerprint,
    parse_path,
)
from .trace import Trace

GUARDIAN_PATH: Path = ("root",)
ENV_SENDER = ActorId(("@env",))
STRESS_SENDER = ActorId(("@stress",))

#: Reserved payload key consumed by the runtime's healer protocol.
HEALER_REPORT_KEY = "@healer-report"


@dataclass
class _Cell:
    id: ActorId
    spec: Optional[BehaviorSpec]
    state: Any
    lifecycle: LifecycleState
    type_name: Optional[str] = None
    version: Optional[VersionId] = None
    managed: bool = False  # spawned by type name; restarts consult the registry
    strategy: SupervisionStrategySpec = DEFAULT_STRATEGY
    plugin: Any = None
    mailbox: deque = field(default_factory=deque)  # (arrival_tick, Envelope)
    children: List[str] = field(default_factory=list)
    history: RestartHistory = field(default_factory=RestartHistory)
    ready_tick: int = 0
    last_processed_tick: int = -1
    last_failed_tick: int = -1
    activated: bool = False
    domain_window: deque = field(default_factory=deque)  # (tick, is_error)

    @property
    def path(self) -> Path:
        return self.id.path

    def transition(self, target: LifecycleState) -> None:
        self.lifecycle = target


class System:
    """A supervised actor tree plus its deterministic scheduler."""

    def __init__(
        self,
        seed: int = 0,
        *,
        mailbox_capacity: int = 1024,
        cold_start_ticks: int = 0,
        idle_deactivate_after: Optional[int] = None,
        root_strategy: Optional[SupervisionStrategySpec] = None,
        registry: Optional[VersionRegistry] = None,
        virtual_mode: bool = False,
    ):
        self.seed = seed
        self.tick = 0
        self.trace = Trace()
        self.registry = registry if registry is not None else VersionRegistry()
        self.virtual_mode = virtual_mode
        self.mailbox_capacity = mailbox_capacity
        self.cold_start_ticks = cold_start_ticks
        self.idle_deactivate_after = idle_deactivate_after
        self.halted: Optional[str] = None

        self._cells: Dict[Path, _Cell] = {}
        self._incarnation_watermark: Dict[Path, int] = {}
        self._root_used = False
        self._seq: Dict[Tuple[Path, Path], int] = {}
        self._lifecycle: deque = deque()
        self._delayed: list = []  # heap of (release_tick, order, entry)
        self._delay_counter = itertools.count()
        self._external: list = []  # heap of (tick, order, target_path, payload, sender)
        self._external_counter = itertools.count()
        self._surges: List[dict] = []
        self._failure_counter = itertools.count()
        self._fault_hooks: List[Any] = []
        self._redirects: Dict[Path, Path] = {}
        self._quarantine: Dict[Path, set] = {}
        self._capacity_overrides: Dict[Path, int] = {}
        self._version_pins: Dict[Path, VersionId] = {}
        self._throttles: Dict[Path, Tuple[int, int]] = {}  # path -> (delay, until)
        self._healings: Dict[Path, dict] = {}  # healer path -> healing info
        self._rngs: Dict[str, random.Random] = {}

        guardian = _Cell(
            id=ActorId(GUARDIAN_PATH),
            spec=None,
            state=None,
            lifecycle=LifecycleState.RUNNING,
            strategy=root_strategy or DEFAULT_STRATEGY,
        )
        self._cells[GUARDIAN_PATH] = guardian

    # ------------------------------------------------------------------
    # introspection

    def rng(self, label: str) -> random.Random:
        """Named deterministic RNG stream derived from the system seed."""
        if label not in self._rngs:
            self._rngs[label] = random.Random(f"{self.seed}:{label}")
        return self._rngs[label]

    def cell(self, path) -> Optional[_Cell]:
        return self._cells.get(tuple(path))

    def is_live(self, path) -> bool:
        cell = self._cells.get(tuple(path))
        return cell is not None and cell.lifecycle != LifecycleState.STOPPED

    def mailbox_size(self, path) -> int:
        cell = self._cells.get(tuple(path))
        return len(cell.mailbox) if cell else 0

    def live_paths(self) -> List[Path]:
        return [
            c.path
            for c in self._cells.values()
            if c.lifecycle != LifecycleState.STOPPED and c.path != GUARDIAN_PATH
        ]

    def actor_id(self, path) -> ActorId:
        cell = self._cells.get(tuple(path))
        if cell is None:
            raise KeyError(f"no actor at {path}")
        return cell.id

    def capacity_of(self, path) -> int:
        return self._capacity_overrides.get(tuple(path), self.mailbox_capacity)

    # ------------------------------------------------------------------
    # spawning

    def spawn(
        self,
        parent,
        spec,
        name: str,
        *,
        strategy: Optional[SupervisionStrategySpec] = None,
    ) -> ActorId:
        """Create a child actor; parent=None spawns the single root actor."""
        if parent is None:
            if self._root_used:
                raise DeadParentError("root marker already used; spawn under the root actor")
            parent_path = GUARDIAN_PATH
        else:
            parent_path = parent.path if isinstance(parent, ActorId) else tuple(parent)
        parent_cell = self._cells.get(parent_path)
        if parent_cell is None or parent_cell.lifecycle == LifecycleState.STOPPED:
            raise DeadParentError(f"parent {parent_path} is not live")
        live_names = {
            n for n in parent_cell.children if self.is_live(parent_path + (n,))
        }
        if name in live_names:
            raise DuplicateNameError(f"{name!r} already live under /{'/'.join(parent_path)}")
        if parent is None:
            self._root_used = True

        path = parent_path + (name,)
        incarnation = self._incarnation_watermark.get(path, -1) + 1
        self._incarnation_watermark[path] = incarnation

        if isinstance(spec, str):
            type_name = spec
            version = self.registry.active_version(type_name)
            behavior = self.registry.spec_for(version)
            managed = True
        else:
            behavior = spec
            type_name = spec.type_name
            version = None
            managed = False

        cell = _Cell(
            id=ActorId(path, incarnation),
            spec=behavior,
            state=behavior.initial_state,
            lifecycle=LifecycleState.STARTING,
            type_name=type_name,
            version=version,
            managed=managed,
            strategy=strategy or DEFAULT_STRATEGY,
            ready_tick=self.tick + self.cold_start_ticks,
        )
        cell.plugin = self._make_plugin(cell.strategy)
        if name in parent_cell.children:
            parent_cell.children.remove(name)
        parent_cell.children.append(name)
        self._cells[path] = cell
        cell.transition(LifecycleState.RUNNING)
        self._emit(
            EventKind.SPAWNED,
            cell.id,
            {
                "parent": "/" + "/".join(parent_path),
                "type": type_name,
                "version": version.ordinal if version else None,
            },
        )
        return cell.id

    def _make_plugin(self, strategy: SupervisionStrategySpec):
        if not strategy.plugin:
            return None
        from .extensions import create_plugin

        return create_plugin(strategy.plugin, dict(strategy.plugin_params))

    def set_strategy(self, path, strategy: SupervisionStrategySpec) -> None:
        cell = self._cells[tuple(path)]
        cell.strategy = strategy
        cell.plugin = self._make_plugin(strategy)

    # ------------------------------------------------------------------
    # sending

    def send(self, sender, target, payload) -> int:
        """Queue a message; returns the per-(sender,target) sequence number.

        Asynchronous: never blocks on processing. Raises MailboxOverflowError
        only for direct library calls; messages sent from inside handlers or
        generators report overflow through the trace instead.
        """
        return self._send(sender, target, payload, raise_on_overflow=True)

    def _send(self, sender, target, payload, *, raise_on_overflow: bool = False) -> int:
        if isinstance(sender, ActorId):
            sender_id = sender
        elif sender is None:
            sender_id = ENV_SENDER
        else:
            sender_id = ActorId(tuple(sender) if not isinstance(sender, str) else parse_path(sender))
        if isinstance(target, ActorId):
            target_path = target.path
        elif isinstance(target, str):
            target_path = parse_path(target)
        else:
            target_path = tuple(target)

        pair = (sender_id.path, target_path)
        seq = self._seq.get(pair, -1) + 1
        self._seq[pair] = seq
        target_cell = self._cells.get(target_path)
        target_id = target_cell.id if target_cell else ActorId(target_path)
        envelope = Envelope(sender_id, target_id, payload, seq, self.tick)
        overflowed = self._deliver(envelope, addressed=target_path)
        if overflowed and raise_on_overflow:
            raise MailboxOverflowError(str(target_path))
        return seq

    def schedule_external(self, tick: int, target, payload, sender=None) -> None:
        """Plan a workload message for a future tick."""
        target_path = parse_path(target) if isinstance(target, str) else tuple(target)
        heapq.heappush(
            self._external,
            (tick, next(self._external_counter), target_path, payload, sender),
        )

    def schedule_surge(self, start: int, duration: int, rate: int, target, detail=None) -> None:
        target_path = parse_path(target) if isinstance(target, str) else tuple(target)
        self._surges.append(
            {
                "start": start,
                "end": start + duration,
                "rate": rate,
                "target": target_path,
                "next": start,
                "detail": detail or {},
            }
        )

    # ------------------------------------------------------------------
    # delivery pipeline

    def _deliver(self, envelope: Envelope, addressed: Path, *, from_delay: bool = False) -> bool:
        """Route one envelope to a mailbox or an exceptional disposition.

        Returns True when the envelope overflowed the target mailbox.
        """
        target_path = envelope.target.path

        if not from_delay:
            # sender throttling (preemptive action)
            throttle = self._throttles.get(envelope.sender.path)
            if throttle and self.tick < throttle[1]:
                self._push_delayed(self.tick + throttle[0], envelope, addressed, None)
                return False
            # stressor delivery-stage hooks
            for hook in self._fault_hooks:
                action = hook.on_delivery(self, envelope, target_path)
                if action is None:
                    continue
                verb, detail = action
                self._emit(
                    EventKind.FAULT_INJECTED,
                    self._subject_for(target_path),
                    {**detail, "envelope": envelope.describe()},
                )
                if verb == "drop":
                    self._record_disposition(envelope, addressed, "dropped", detail.get("injection_id"))
                    return False
                if verb == "delay":
                    self._push_delayed(
                        self.tick + detail["ticks"], envelope, addressed, detail
                    )
                    return False
                if verb == "corrupt":
                    envelope = Envelope(
                        envelope.sender,
                        envelope.target,
                        {"@corrupted": detail["injection_id"], "original_fp": envelope.payload_fingerprint()},
                        envelope.seq,
                        envelope.sent_at,
                    )

        # redirects installed by improvements (router insertion)
        redirect = self._redirects.get(target_path)
        if redirect is not None and envelope.sender.path != redirect:
            cell = self._cells.get(redirect)
            if cell is not None and cell.lifecycle != LifecycleState.STOPPED:
                envelope = Envelope(
                    envelope.sender, cell.id, envelope.payload, envelope.seq, envelope.sent_at
                )
                target_path = redirect

        # quarantine filters attached at the target's supervisor
        guard = self._quarantine.get(target_path[:-1])
        if guard and envelope.payload_fingerprint() in guard:
            self._record_disposition(envelope, addressed, "quarantined", None)
            return False

        cell = self._cells.get(target_path)
        if cell is None or cell.lifecycle == LifecycleState.STOPPED or cell.spec is None:
            self._record_disposition(envelope, addressed, "dead_letter", "no live target")
            return False

        if len(cell.mailbox) >= self.capacity_of(target_path):
            self._record_disposition(envelope, addressed, "overflow", None)
            self._fail_lifecycle(cell, FaultKind.MAILBOX_OVERFLOW, envelope, trigger_disposed=True)
            return True

        if not cell.mailbox:
            self._maybe_cold_start(cell)
        cell.mailbox.append((self.tick, addressed, envelope))
        return False

    def _maybe_cold_start(self, cell: _Cell) -> None:
        if self.cold_start_ticks <= 0:
            return
        if not cell.activated:
            cell.ready_tick = max(cell.ready_tick, self.tick + self.cold_start_ticks)
        elif (
            self.idle_deactivate_after is not None
            and self.tick - cell.last_processed_tick > self.idle_deactivate_after
        ):
            cell.ready_tick = self.tick + self.cold_start_ticks

    def _push_delayed(self, release: int, envelope: Envelope, addressed: Path, injected) -> None:
        heapq.heappush(
            self._delayed,
            (release, next(self._delay_counter), envelope, addressed, injected),
        )

    def _record_disposition(self, envelope, addressed, disposition, reason) -> None:
        detail = {
            **envelope.describe(),
            "addressed": "/" + "/".join(addressed),
            "disposition": disposition,
        }
        if reason is not None:
            detail["reason"] = reason
        self._emit(EventKind.DELIVERED, self._subject_for(envelope.target.path), detail)

    def _subject_for(self, path: Path) -> ActorId:
        cell = self._cells.get(path)
        return cell.id if cell else ActorId(path)

    # ------------------------------------------------------------------
    # stepping

    def step(self, limit_tick: Optional[int] = None):
        """Execute one scheduled event; returns its primary record, or None when idle."""
        if self.halted:
            return None
        while True:
            if limit_tick is not None and self.tick >= limit_tick:
                raise TickBudgetExhausted(f"tick budget {limit_tick} reached", self.trace)
            self._release_due()
            work = self._select_work()
            if work is not None:
                before = len(self.trace)
                self._execute(work)
                self.tick += 1
                if len(self.trace) > before:
                    return self.trace[before]
                # a stale lifecycle item produced nothing; count the step anyway
                continue
            nxt = self._next_due_tick()
            if nxt is None:
                return None
            if limit_tick is not None and nxt >= limit_tick:
                raise TickBudgetExhausted(f"tick budget {limit_tick} reached", self.trace)
            self.tick = max(self.tick + 1, nxt)

    def run_until_idle(self, max_ticks: int) -> Trace:
        """Step until the system is quiet; raises if the budget runs out."""
        if max_ticks <= 0:
            raise ValueError("max_ticks must be positive")
        start = len(self.trace)
        limit = self.tick + max_ticks
        while True:
            try:
                record = self.step(limit_tick=limit)
            except TickBudgetExhausted:
                raise TickBudgetExhausted(
                    f"no idle state within {max_ticks} ticks", self.trace[start:]
                ) from None
            if record is None:
                return self.trace[start:]

    def _release_due(self) -> None:
        while self._external and self._external[0][0] <= self.tick:
            _, _, target_path, payload, sender = heapq.heappop(self._external)
            self._send(sender, target_path, payload)
        for surge in self._surges:
            while surge["next"] <= self.tick and surge["next"] < surge["end"]:
                if surge["next"] < self.tick:
                    surge["next"] += 1  # missed while idle-jumping; skip silently
                    continue
                for i in range(surge["rate"]):
                    self._send(
                        STRESS_SENDER,
                        surge["target"],
                        {"surge": i, "tick": self.tick, **surge["detail"]},
                    )
                surge["next"] += 1
        while self._delayed and self._delayed[0][0] <= self.tick:
            _, _, envelope, addressed, injected = heapq.heappop(self._delayed)
            overflowed = self._deliver(envelope, addressed, from_delay=True)
            if injected and not overflowed:
                cell = self._cells.get(envelope.target.path)
                if cell is not None and cell.lifecycle != LifecycleState.STOPPED:
                    self._fail_lifecycle(
                        cell,
                        FaultKind.INJECTED_DELAY,
                        envelope,
                        injection_id=injected.get("injection_id"),
                    )

    def _next_due_tick(self) -> Optional[int]:
        candidates = []
        if self._external:
            candidates.append(self._external[0][0])
        if self._delayed:
            candidates.append(self._delayed[0][0])
        for surge in self._surges:
            if surge["next"] < surge["end"]:
                candidates.append(max(surge["next"], self.tick + 1))
        for cell in self._cells.values():
            if (
                cell.mailbox
                and cell.lifecycle == LifecycleState.RUNNING
                and cell.ready_tick > self.tick
            ):
                candidates.append(cell.ready_tick)
        return min(candidates) if candidates else None

    def _select_work(self):
        if self._lifecycle:
            return self._lifecycle.popleft()
        best_key = None
        best_cell = None
        for cell in self._cells.values():
            if (
                not cell.mailbox
                or cell.lifecycle != LifecycleState.RUNNING
                or cell.ready_tick > self.tick
                or cell.spec is None
            ):
                continue
            arrival, _, head = cell.mailbox[0]
            key = (arrival, cell.path, head.seq)
            if best_key is None or key < best_key:
                best_key = key
                best_cell = cell
        if best_cell is None:
            return None
        return ("process", best_cell.path)

    def _execute(self, work) -> None:
        kind = work[0]
        if kind == "process":
            self._process_one(work[1])
        elif kind == "handle_failure":
            self._handle_failure(*work[1:])
        elif kind == "spawn":
            self._execute_spawn(*work[1:])
        elif kind == "preemptive":
            self._apply_preemptive(*work[1:])

    # ------------------------------------------------------------------
    # message processing

    def _process_one(self, path: Path) -> None:
        cell = self._cells.get(path)
        if cell is None or not cell.mailbox or cell.lifecycle != LifecycleState.RUNNING:
            return
        arrival, addressed, envelope = cell.mailbox.popleft()
        cell.activated = True

        # runtime-level healer protocol interception
        if (
            isinstance(envelope.payload, dict)
            and HEALER_REPORT_KEY in envelope.payload
            and envelope.sender.path in self._healings
        ):
            self._consume_healer_report(cell, envelope)
            return

        # stressor processing-stage hooks
        for hook in self._fault_hooks:
            crash = hook.on_process(self, envelope, path)
            if crash is not None:
                kind, detail = crash
                self._emit(
                    EventKind.FAULT_INJECTED,
                    cell.id,
                    {**detail, "envelope": envelope.describe()},
                )
                self._fail_processing(cell, kind, envelope, addressed, detail.get("injection_id"))
                return

        if isinstance(envelope.payload, dict) and "@corrupted" in envelope.payload:
            self._fail_processing(
                cell,
                FaultKind.INJECTED_CORRUPTION,
                envelope,
                addressed,
                envelope.payload["@corrupted"],
            )
            return

        state_before = fingerprint(cell.state)
        ctx = ActorContext(
            self, cell.id, self.rng(f"behavior:{'/'.join(path)}:{cell.id.incarnation}")
        )
        try:
            outcome = cell.spec.handler(cell.state, envelope, ctx)
        except Fault as exc:
            self._fail_processing(cell, exc.kind, envelope, addressed, None)
            return
        except Exception:
            self._fail_processing(cell, FaultKind.HANDLER_PANIC, envelope, addressed, None)
            return
        if not isinstance(outcome, BehaviorOutcome):
            self._fail_processing(cell, FaultKind.HANDLER_PANIC, envelope, addressed, None)
            return
        if outcome.failure is not None:
            self._fail_processing(cell, outcome.failure, envelope, addressed, None)
            return

        cell.state = outcome.new_state
        cell.last_processed_tick = self.tick
        self._emit(
            EventKind.PROCESSED,
            cell.id,
            {
                **envelope.describe(),
                "addressed": "/" + "/".join(addressed),
                "state_fp_before": state_before,
                "state_fp": fingerprint(cell.state),
            },
        )
        for target, payload in outcome.outbound:
            self._send(cell.id, target, payload)
        for name, child_spec in outcome.spawns:
            self._lifecycle.append(("spawn", path, name, child_spec))
        self._observe_domain_event(cell, envelope)

    def _fail_processing(self, cell, fault, envelope, addressed, injection_id) -> None:
        """Handler-stage failure: state untouched, trigger consumed."""
        cell.last_failed_tick = self.tick
        failure_id = next(self._failure_counter)
        detail = {
            **envelope.describe(),
            "addressed": "/" + "/".join(addressed),
            "fault": fault.value,
            "failure_id": failure_id,
            "state_fp": fingerprint(cell.state),
            "type": cell.type_name,
            "version": cell.version.ordinal if cell.version else None,
        }
        if injection_id is not None:
            detail["injection_id"] = injection_id
        self._emit(EventKind.FAILED, cell.id, detail)
        if cell.lifecycle == LifecycleState.RUNNING:
            cell.transition(LifecycleState.SUSPENDED)
        self._lifecycle.append(
            ("handle_failure", cell.id, fault, envelope, self.tick, failure_id, False)
        )

    def _fail_lifecycle(self, cell, fault, envelope, *, trigger_disposed=False, injection_id=None) -> None:
        """Failure not tied to handler execution (overflow, injected delay)."""
        cell.last_failed_tick = self.tick
        failure_id = next(self._failure_counter)
        detail = {
            "fault": fault.value,
            "failure_id": failure_id,
            "state_fp": fingerprint(cell.state),
            "type": cell.type_name,
            "version": cell.version.ordinal if cell.version else None,
        }
        if envelope is not None:
            detail.update(envelope.describe())
        if injection_id is not None:
            detail["injection_id"] = injection_id
        self._emit(EventKind.FAILED, cell.id, detail)
        self._lifecycle.append(
            ("handle_failure", cell.id, fault, envelope, self.tick, failure_id, trigger_disposed)
        )

    # ------------------------------------------------------------------
    # failure handling and directives

    def _handle_failure(self, child_id, fault, trigger, at, failure_id, trigger_disposed) -> None:
        cell = self._cells.get(child_id.path)
        if (
            cell is None
            or cell.id.incarnation != child_id.incarnation
            or cell.lifecycle == LifecycleState.STOPPED
        ):
            return  # stale: the actor was already restarted or stopped

        healing = self._healings.pop(child_id.path, None)
        if healing is not None:
            # a failing healer gives up on its patient and is discarded
            self._stop_subtree(cell)
            patient = self._cells.get(healing["patient"])
            if patient is not None and patient.lifecycle != LifecycleState.STOPPED:
                failure = healing["failure"]
                directive = decide(
                    self._cells[healing["supervisor"]].strategy, failure, plugin=None
                )
                self._apply(
                    healing["supervisor"], failure, healing["failure_id"], directive, True
                )
            return

        if self.virtual_mode:
            failure = self._failure_for(cell, child_id, fault, trigger, at, 0)
            self._apply_restart(
                child_id.path[:-1],
                failure,
                failure_id,
                [child_id.path[-1]],
                trigger_disposed,
                via="virtual-runtime",
            )
            return

        supervisor_path = child_id.path[:-1]
        supervisor = self._cells[supervisor_path]
        strategy = supervisor.strategy
        count = supervisor.history.restarts_in_window(
            child_id.name, self.tick, strategy.window
        )
        failure = self._failure_for(cell, child_id, fault, trigger, at, count)
        supervisor.history.record_failure(failure)

        decision = decide(
            strategy,
            failure,
            plugin=supervisor.plugin,
            history=supervisor.history,
            registry=self.registry,
        )
        from .extensions import ExtendedAction

        if isinstance(decision, ExtendedAction):
            self._apply_extended(supervisor_path, failure, failure_id, decision, trigger_disposed)
        else:
            self._apply(supervisor_path, failure, failure_id, decision, trigger_disposed)

    def apply_directive(self, supervisor_path, failure: FailureRecord, directive: Directive):
        """Apply one supervision directive; returns the records it emitted."""
        start = len(self.trace)
        self._apply(
            tuple(supervisor_path), failure, next(self._failure_counter), directive, False
        )
        return self.trace[start:].records()

    def _apply(self, supervisor_path, failure, failure_id, directive, trigger_disposed) -> None:
        supervisor = self._cells[supervisor_path]
        scope = supervisor.strategy.scope
        child_name = failure.child.name
        live = [
            n for n in supervisor.children if self.is_live(supervisor_path + (n,))
        ]
        if child_name not in live:
            return

        if directive == Directive.RESUME:
            cell = self._cells[failure.child.path]
            if cell.lifecycle == LifecycleState.SUSPENDED:
                cell.transition(LifecycleState.RUNNING)
            self._emit(
                EventKind.DIRECTIVE_APPLIED,
                cell.id,
                {
                    "directive": Directive.RESUME.value,
                    "failure_id": failure_id,
                    "scope": scope.value,
                    "child": str(failure.child),
                },
            )
            return

        if directive == Directive.RESTART:
            names = affected_order(scope, live, child_name)
            self._apply_restart(
                supervisor_path, failure, failure_id, names, trigger_disposed
            )
            return

        if directive == Directive.STOP:
            names = affected_order(scope, live, child_name)
            for name in names:
                cell = self._cells[supervisor_path + (name,)]
                drained, subtree = self._stop_subtree(cell)
                self._emit(
                    EventKind.DIRECTIVE_APPLIED,
                    cell.id,
                    {
                        "directive": Directive.STOP.value,
                        "failure_id": failure_id,
                        "scope": scope.value,
                        "child": str(failure.child),
                        "mailbox": "drained",
                        "drained": drained,
                        "subtree": subtree,
                    },
                )
            return

        # escalate: the supervisor becomes the problematic child one level up
        if supervisor_path == GUARDIAN_PATH:
            self.halted = "RootEscalation"
            self._emit(
                EventKind.ESCALATED,
                failure.child,
                {
                    "failure_id": failure_id,
                    "supervisor": "/" + "/".join(supervisor_path),
                    "reason": "RootEscalation",
                },
            )
            return
        self._emit(
            EventKind.ESCALATED,
            failure.child,
            {
                "failure_id": failure_id,
                "supervisor": "/" + "/".join(supervisor_path),
                "to": "/" + "/".join(supervisor_path[:-1]),
            },
        )
        if supervisor.lifecycle == LifecycleState.RUNNING:
            supervisor.transition(LifecycleState.SUSPENDED)
        new_id = next(self._failure_counter)
        self._lifecycle.append(
            ("handle_failure", supervisor.id, failure.fault, failure.trigger, self.tick, new_id, True)
        )

    def _apply_restart(self, supervisor_path, failure, failure_id, names, trigger_disposed, via=None) -> None:
        supervisor = self._cells.get(supervisor_path)
        for name in names:
            cell = self._cells[supervisor_path + (name,)]
            is_failing_child = cell.path == failure.child.path
            trigger_note = None
            if is_failing_child and failure.trigger is not None and not trigger_disposed:
                self._discard_trigger(cell, failure.trigger)
                trigger_note = "dead-lettered"
            subtree = self._restart_subtree(cell)
            if supervisor is not None:
                supervisor.history.record_restart(name, self.tick)
            detail = {
                "directive": Directive.RESTART.value,
                "failure_id": failure_id,
                "scope": supervisor.strategy.scope.value if supervisor else None,
                "child": str(failure.child),
                "mailbox": "retained",
                "subtree": subtree,
            }
            if trigger_note:
                detail["trigger"] = trigger_note
            if via:
                detail["via"] = via
            self._emit(EventKind.DIRECTIVE_APPLIED, self._cells[cell.path].id, detail)

    def _discard_trigger(self, cell, trigger: Envelope) -> None:
        if trigger.target.path != cell.path:
            return
        kept = deque()
        removed = False
        for arrival, addressed, env in cell.mailbox:
            if not removed and env is trigger:
                removed = True
                continue
            kept.append((arrival, addressed, env))
        cell.mailbox = kept
        self._record_disposition(trigger, trigger.target.path, "dead_letter", "restart-trigger")

    def _restart_subtree(self, cell: _Cell) -> List[str]:
        """Restart an actor and (recursively) its live descendants; returns paths."""
        restarted = []
        for member in self._subtree_cells(cell):
            member.transition(LifecycleState.RESTARTING)
            member.transition(LifecycleState.STARTING)
            incarnation = self._incarnation_watermark[member.path] + 1
            self._incarnation_watermark[member.path] = incarnation
            old_version = member.version
            if member.managed:
                pin = self._version_pins.get(member.path)
                version = pin if pin is not None else self.registry.active_version(member.type_name)
                member.spec = self.registry.spec_for(version)
                member.version = version
            member.id = ActorId(member.path, incarnation)
            member.state = member.spec.initial_state if member.spec else None
            member.history.clear()
            member.domain_window.clear()
            member.plugin = self._make_plugin(member.strategy)
            member.transition(LifecycleState.RUNNING)
            restarted.append(str(member.id))
            if member.managed and member.version != old_version:
                self._emit(
                    EventKind.VERSION_ACTIVATED,
                    member.id,
                    {"version": str(member.version), "via": "restart"},
                )
        return restarted

    def _stop_subtree(self, cell: _Cell) -> Tuple[int, List[str]]:
        drained = 0
        stopped = []
        for member in reversed(self._subtree_cells(cell)):
            drained += len(member.mailbox)
            member.mailbox.clear()
            member.transition(LifecycleState.STOPPED)
            stopped.append(str(member.id))
        return drained, stopped

    def _subtree_cells(self, cell: _Cell) -> List[_Cell]:
        out = [cell]
        for name in cell.children:
            child = self._cells.get(cell.path + (name,))
            if child is not None and child.lifecycle != LifecycleState.STOPPED:
                out.extend(self._subtree_cells(child))
        return out

    # ------------------------------------------------------------------
    # extended actions (custom strategy plugins)

    def _apply_extended(self, supervisor_path, failure, failure_id, action, trigger_disposed) -> None:
        from .extensions import FallbackToVersion, QuarantinePayload, SpawnHealer

        supervisor = self._cells[supervisor_path]
        child = self._cells.get(failure.child.path)
        if child is None:
            return

        if isinstance(action, FallbackToVersion):
            self.registry.roll_back(self.registry.active_version(child.type_name))
            self.registry.activate(action.version, 1.0)
            self._apply_restart(
                supervisor_path, failure, failure_id, [failure.child.name], trigger_disposed,
                via="fallback",
            )
            return

        if isinstance(action, QuarantinePayload):
            self._quarantine.setdefault(supervisor_path, set()).add(action.payload_fp)
            self._emit(
                EventKind.DIRECTIVE_APPLIED,
                supervisor.id,
                {
                    "action": "QuarantineMessage",
                    "failure_id": failure_id,
                    "payload_fp": action.payload_fp,
                    "child": str(failure.child),
                },
            )
            if child.lifecycle == LifecycleState.SUSPENDED:
                child.transition(LifecycleState.RUNNING)
            return

        if isinstance(action, SpawnHealer):
            if any(h["patient"] == failure.child.path for h in self._healings.values()):
                return  # one healer per patient at a time
            name = f"healer-{failure.child.name}-{failure_id}"
            healer_id = self.spawn(supervisor.id, action.spec, name)
            self._healings[healer_id.path] = {
                "patient": failure.child.path,
                "failure": failure,
                "failure_id": failure_id,
                "supervisor": supervisor_path,
            }
            self._send(
                supervisor.id,
                healer_id,
                {
                    "patient": str(failure.child),
                    "fault": failure.fault.value,
                    "failure_id": failure_id,
                },
            )
            self._emit(
                EventKind.DIRECTIVE_APPLIED,
                healer_id,
                {
                    "action": "SpawnHealer",
                    "failure_id": failure_id,
                    "child": str(failure.child),
                },
            )
            return

        raise TypeError(f"unknown extended action: {action!r}")

    def _consume_healer_report(self, supervisor_cell, envelope) -> None:
        healing = self._healings.pop(envelope.sender.path, None)
        self._emit(
            EventKind.PROCESSED,
            supervisor_cell.id,
            {
                **envelope.describe(),
                "addressed": str(supervisor_cell.id),
                "protocol": "healer-report",
                "state_fp_before": fingerprint(supervisor_cell.state),
                "state_fp": fingerprint(supervisor_cell.state),
            },
        )
        if healing is None:
            return
        verdict = envelope.payload[HEALER_REPORT_KEY]
        healer = self._cells.get(envelope.sender.path)
        if healer is not None and healer.lifecycle != LifecycleState.STOPPED:
            self._stop_subtree(healer)
        patient = self._cells.get(healing["patient"])
        if patient is None or patient.lifecycle == LifecycleState.STOPPED:
            return
        if verdict == "healed":
            if patient.lifecycle == LifecycleState.SUSPENDED:
                patient.transition(LifecycleState.RUNNING)
            self._emit(
                EventKind.DIRECTIVE_APPLIED,
                patient.id,
                {
                    "directive": Directive.RESUME.value,
                    "failure_id": healing["failure_id"],
                    "via": "healer",
                    "child": str(patient.id),
                },
            )
        else:
            failure = healing["failure"]
            directive = decide(
                self._cells[healing["supervisor"]].strategy, failure, plugin=None
            )
            self._apply(
                healing["supervisor"], failure, healing["failure_id"], directive, True
            )

    # ------------------------------------------------------------------
    # preemptive strategies

    def _observe_domain_event(self, cell: _Cell, envelope: Envelope) -> None:
        parent = self._cells.get(cell.path[:-1])
        if parent is None or parent.plugin is None:
            return
        plugin = parent.plugin
        if not getattr(plugin, "wants_domain_events", False):
            return
        is_error = plugin.classify(envelope.payload)
        cell.domain_window.append((self.tick, bool(is_error)))
        horizon = self.tick - plugin.window
        while cell.domain_window and cell.domain_window[0][0] < horizon:
            cell.domain_window.popleft()
        if cell.last_failed_tick >= horizon:
            return  # not preemptive anymore: the actor already failed in-window
        from .extensions import evaluate_preemptive, DomainEvent

        events = [DomainEvent(t, cell.path, e) for t, e in cell.domain_window]
        action = evaluate_preemptive(plugin, events)
        if action is not None:
            cell.domain_window.clear()
            self._lifecycle.append(("preemptive", action, cell.id, cell.path[:-1]))

    def _apply_preemptive(self, action, target_id, supervisor_path) -> None:
        from .extensions import PreemptiveRestart, RaiseAlert, ThrottleSender

        supervisor = self._cells.get(supervisor_path)
        if isinstance(action, PreemptiveRestart):
            cell = self._cells.get(target_id.path)
            if (
                cell is None
                or cell.id.incarnation != target_id.incarnation
                or cell.lifecycle != LifecycleState.RUNNING
            ):
                return
            if cell.last_failed_tick >= 0 and supervisor is not None:
                plugin = supervisor.plugin
                if plugin is not None and cell.last_failed_tick >= self.tick - plugin.window:
                    return
            subtree = self._restart_subtree(cell)
            self._emit(
                EventKind.DIRECTIVE_APPLIED,
                self._cells[target_id.path].id,
                {
                    "action": "PreemptiveRestart",
                    "directive": Directive.RESTART.value,
                    "via": "preemptive",
                    "child": str(target_id),
                    "mailbox": "retained",
                    "subtree": subtree,
                },
            )
        elif isinstance(action, ThrottleSender):
            self._throttles[tuple(action.sender)] = (
                action.delay,
                self.tick + action.duration,
            )
            self._emit(
                EventKind.DIRECTIVE_APPLIED,
                self._subject_for(tuple(action.sender)),
                {"action": "ThrottleSender", "delay": action.delay, "until": self.tick + action.duration},
            )
        elif isinstance(action, RaiseAlert):
            subject = supervisor.id if supervisor else self._subject_for(supervisor_path)
            self._emit(
                EventKind.DIRECTIVE_APPLIED,
                subject,
                {"action": "RaiseAlert", "reason": action.reason},
            )

    # ------------------------------------------------------------------
    # improvement hooks (used by the builder)

    def install_quarantine(self, supervisor_path, payload_fp: str) -> None:
        self._quarantine.setdefault(tuple(supervisor_path), set()).add(payload_fp)

    def install_redirect(self, from_path, to_path) -> None:
        self._redirects[tuple(from_path)] = tuple(to_path)

    def override_capacity(self, path, capacity: int) -> None:
        self._capacity_overrides[tuple(path)] = capacity

    def pin_version(self, path, version: VersionId) -> None:
        self._version_pins[tuple(path)] = version

    def clear_pin(self, path) -> None:
        self._version_pins.pop(tuple(path), None)

    def pinned_paths(self) -> List[Path]:
        return sorted(self._version_pins)

    # ------------------------------------------------------------------
    # stressor hooks

    def install_fault_hook(self, hook) -> None:
        self._fault_hooks.append(hook)

    def remove_fault_hook(self, hook) -> None:
        self._fault_hooks = [h for h in self._fault_hooks if h is not hook]

    def fault_hooks(self) -> List[Any]:
        return list(self._fault_hooks)

    # ------------------------------------------------------------------
    # spawning scheduled from outcomes

    def _execute_spawn(self, parent_path, name, spec) -> None:
        parent = self._cells.get(parent_path)
        if parent is None or parent.lifecycle == LifecycleState.STOPPED:
            return
        try:
            self.spawn(parent.id, spec, name)
        except DuplicateNameError:
            self._fail_lifecycle(parent, FaultKind.START_FAILURE, None, trigger_disposed=True)

    # ------------------------------------------------------------------

    def _emit(self, kind: EventKind, subject: ActorId, detail) -> EventRecord:
        record = EventRecord(self.tick, kind, subject, detail)
        self.trace.append(record)
        return record


def run_until_idle(system: System, max_ticks: int) -> Trace:
    """Module-level convenience mirroring System.run_until_idle."""
    return system.run_until_idle(max_ticks)
