"""Event trace container, serialization, and invariant checks."""

from __future__ import annotations

import hashlib
from typing import Iterable, Iterator, List, Optional

from .types import EventKind, EventRecord, INJECTED_KINDS


class Trace:
    """Append-only ordered list of event records."""

    def __init__(self, records: Optional[Iterable[EventRecord]] = None):
        self._records: List[EventRecord] = list(records or [])

    def append(self, record: EventRecord) -> None:
        self._records.append(record)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self._records)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return Trace(self._records[idx])
        return self._records[idx]

    def records(self) -> List[EventRecord]:
        return list(self._records)

    def by_kind(self, kind: EventKind) -> List[EventRecord]:
        return [r for r in self._records if r.kind == kind]

    def for_subject(self, path) -> List[EventRecord]:
        return [r for r in self._records if r.subject.path == tuple(path)]

    def to_lines(self) -> List[str]:
        return [r.to_line() for r in self._records]

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.to_lines():
            h.update(line.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.to_lines():
                fh.write(line)
                fh.write("\n")


def check_per_pair_fifo(trace: Trace) -> List[str]:
    """Processed order must match send order for every (sender, target) pair."""
    violations = []
    last_seq: dict = {}
    for r in trace:
        if r.kind != EventKind.PROCESSED:
            continue
        pair = (r.detail.get("from"), r.detail.get("addressed") or str(r.subject))
        seq = r.detail.get("seq")
        if seq is None:
            continue
        prev = last_seq.get(pair)
        if prev is not None and seq <= prev:
            violations.append(f"pair {pair}: seq {seq} after {prev}")
        last_seq[pair] = seq
    return violations


def check_single_message_per_tick(trace: Trace) -> List[str]:
    """No actor incarnation may process two envelopes at one tick."""
    violations = []
    seen = set()
    for r in trace:
        if r.kind != EventKind.PROCESSED:
            continue
        key = (r.tick, r.subject.path, r.subject.incarnation)
        if key in seen:
            violations.append(f"{r.subject} processed twice at tick {r.tick}")
        seen.add(key)
    return violations


def check_failure_atomicity(trace: Trace) -> List[str]:
    """A failure leaves state exactly as it was before the envelope.

    Processed records carry before/after state fingerprints; Failed records
    carry the (unchanged) state fingerprint at failure time. The next
    successful processing by the same incarnation must start from it.
    """
    violations = []
    state_fp: dict = {}
    for r in trace:
        key = (r.subject.path, r.subject.incarnation)
        if r.kind == EventKind.PROCESSED:
            before = r.detail.get("state_fp_before")
            known = state_fp.get(key)
            if known is not None and before is not None and before != known:
                violations.append(
                    f"{r.subject} tick {r.tick}: state {before} != expected {known}"
                )
            if "state_fp" in r.detail:
                state_fp[key] = r.detail["state_fp"]
        elif r.kind == EventKind.FAILED:
            fp = r.detail.get("state_fp")
            known = state_fp.get(key)
            if known is not None and fp is not None and fp != known:
                violations.append(
                    f"{r.subject} tick {r.tick}: failure mutated state "
                    f"({known} -> {fp})"
                )
    return violations


def check_fault_accounting(trace: Trace) -> List[str]:
    """Every injected-kind failure is preceded by exactly one matching injection."""
    violations = []
    pending: dict = {}
    for r in trace:
        if r.kind == EventKind.FAULT_INJECTED:
            inj = r.detail.get("injection_id")
            if inj is not None:
                pending[inj] = pending.get(inj, 0) + 1
        elif r.kind == EventKind.FAILED:
            fault = r.detail.get("fault")
            if fault in {k.value for k in INJECTED_KINDS}:
                inj = r.detail.get("injection_id")
                if pending.get(inj, 0) != 1:
                    violations.append(
                        f"{r.subject} tick {r.tick}: {fault} with "
                        f"{pending.get(inj, 0)} matching injections"
                    )
    return violations


def verify_invariants(trace: Trace) -> List[str]:
    """Run every trace-level invariant check; returns all violations."""
    out = []
    out.extend(check_per_pair_fifo(trace))
    out.extend(check_single_message_per_tick(trace))
    out.extend(check_failure_atomicity(trace))
    out.extend(check_fault_accounting(trace))
    return out
