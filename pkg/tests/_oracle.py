"""Brute-force reference interpreter for supervision semantics.

Deliberately independent of the crashlab package: it re-derives directive
decisions, affected sets, escalation chains, and incarnation bookkeeping
directly from first principles on a tiny dict-based model. Tests drive the
real runtime and this interpreter with the same abstract scenario and demand
identical outcomes.

Model restrictions (enough for the equivalence suite): a static tree (no
spawns mid-run), failures arrive one at a time and are fully settled before
the next, and faults are handler-raised kinds only.
"""

from __future__ import annotations

from dataclasses import dataclass, field


RESUME = "Resume"
RESTART = "Restart"
STOP = "Stop"
ESCALATE = "Escalate"

ONE_FOR_ONE = "one_for_one"
ALL_FOR_ONE = "all_for_one"
REST_FOR_ONE = "rest_for_one"


@dataclass
class OracleStrategy:
    scope: str = ONE_FOR_ONE
    decider: dict = field(default_factory=dict)  # fault name -> directive name
    default: str = RESTART
    max_restarts: int = 3
    window: int = 100


@dataclass
class OracleNode:
    path: tuple
    strategy: OracleStrategy
    children: list = field(default_factory=list)  # child names in spawn order
    incarnation: int = 0
    stopped: bool = False
    # restart ticks per child name, cleared when this node itself restarts
    restart_ticks: dict = field(default_factory=dict)


class SupervisionOracle:
    """Interprets failures against the declarative supervision rules."""

    GUARDIAN = ("root",)

    def __init__(self, nodes, root_strategy=None):
        # nodes: {path tuple: OracleStrategy}; paths all start with "root"
        self.nodes = {}
        self.halted = None
        guardian = OracleNode(self.GUARDIAN, root_strategy or OracleStrategy())
        self.nodes[self.GUARDIAN] = guardian
        for path in sorted(nodes, key=lambda p: (len(p), p)):
            self.nodes[path] = OracleNode(path, nodes[path])
            parent = self.nodes[path[:-1]]
            parent.children.append(path[-1])

    # -- queries ---------------------------------------------------------

    def is_failable(self, path):
        """A crash command produces a failure only on a live, running actor."""
        if self.halted:
            return False
        node = self.nodes.get(path)
        return node is not None and not node.stopped

    def incarnations(self):
        return {
            node.path: node.incarnation
            for node in self.nodes.values()
            if node.path != self.GUARDIAN
        }

    def live_paths(self):
        return sorted(
            node.path
            for node in self.nodes.values()
            if not node.stopped and node.path != self.GUARDIAN
        )

    # -- failure handling --------------------------------------------------

    def fail(self, path, fault, tick):
        """Settle one failure; returns the chain of handling steps."""
        chain = []
        self._handle(path, fault, tick, chain)
        return chain

    def _handle(self, child_path, fault, tick, chain):
        node = self.nodes[child_path]
        parent = self.nodes[child_path[:-1]]
        strategy = parent.strategy
        ticks = parent.restart_ticks.get(child_path[-1], [])
        count = sum(1 for t in ticks if tick - strategy.window <= t <= tick)
        if count >= strategy.max_restarts:
            directive = ESCALATE
        else:
            directive = strategy.decider.get(fault, strategy.default)

        if directive == ESCALATE:
            if parent.path == self.GUARDIAN:
                self.halted = "RootEscalation"
                chain.append(("halt", child_path))
                return
            chain.append(("escalate", child_path, parent.path))
            self._handle(parent.path, fault, tick, chain)
            return

        affected = self._affected(parent, node, strategy.scope, directive)
        chain.append((directive, child_path, tuple(a.path for a in affected)))
        if directive == RESTART:
            for target in affected:
                parent.restart_ticks.setdefault(target.path[-1], []).append(tick)
                self._restart_subtree(target)
        elif directive == STOP:
            for target in affected:
                self._stop_subtree(target)

    def _affected(self, parent, child, scope, directive):
        if directive == RESUME or scope == ONE_FOR_ONE:
            return [child]
        live = [
            self.nodes[parent.path + (name,)]
            for name in parent.children
            if not self.nodes[parent.path + (name,)].stopped
        ]
        if scope == ALL_FOR_ONE:
            return live
        # rest-for-one: the child and later-spawned siblings, latest first
        idx = live.index(child)
        return list(reversed(live[idx:]))

    def _subtree(self, node):
        out = [node]
        for name in node.children:
            sub = self.nodes[node.path + (name,)]
            if not sub.stopped:
                out.extend(self._subtree(sub))
        return out

    def _restart_subtree(self, node):
        for member in self._subtree(node):
            member.incarnation += 1
            member.restart_ticks = {}

    def _stop_subtree(self, node):
        for member in self._subtree(node):
            member.stopped = True
