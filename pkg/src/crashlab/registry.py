"""Versioned behavior registry: the source of truth for which implementation
of a type an actor instantiates on spawn and on restart."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, List, Optional

from .errors import NoOlderVersionError, NoVersionsError, VersionMissingError
from .types import BehaviorSpec


@dataclass(frozen=True, order=True)
class VersionId:
    type_name: str
    ordinal: int

    def __post_init__(self) -> None:
        if self.ordinal < 1:
            raise ValueError("ordinals start at 1")

    def __str__(self) -> str:
        return f"{self.type_name}@v{self.ordinal}"


class VersionStatus(str, enum.Enum):
    REGISTERED = "Registered"
    ACTIVE = "Active"
    ROLLED_BACK = "RolledBack"


@dataclass
class VersionRecord:
    id: VersionId
    spec: BehaviorSpec
    registered_at: int
    status: VersionStatus = VersionStatus.REGISTERED
    fraction: float = 0.0


class VersionRegistry:
    """Append-only per-type version history with activation state."""

    def __init__(self):
        self._versions: Dict[str, List[VersionRecord]] = {}

    def register_version(self, type_name: str, spec: BehaviorSpec, at: int = 0) -> VersionId:
        if spec.type_name != type_name:
            raise ValueError(
                f"spec type {spec.type_name!r} does not match {type_name!r}"
            )
        records = self._versions.setdefault(type_name, [])
        vid = VersionId(type_name, len(records) + 1)
        records.append(VersionRecord(vid, spec, at))
        return vid

    def records(self, type_name: str) -> List[VersionRecord]:
        return list(self._versions.get(type_name, []))

    def record(self, vid: VersionId) -> VersionRecord:
        records = self._versions.get(vid.type_name, [])
        if vid.ordinal > len(records):
            raise VersionMissingError(str(vid))
        return records[vid.ordinal - 1]

    def has_type(self, type_name: str) -> bool:
        return type_name in self._versions

    def activate(self, vid: VersionId, fraction: float = 1.0) -> None:
        rec = self.record(vid)
        if fraction >= 1.0:
            for other in self._versions[vid.type_name]:
                if other.status == VersionStatus.ACTIVE and other.id != vid:
                    other.status = VersionStatus.REGISTERED
                    other.fraction = 0.0
        rec.status = VersionStatus.ACTIVE
        rec.fraction = fraction

    def roll_back(self, vid: VersionId) -> None:
        rec = self.record(vid)
        rec.status = VersionStatus.ROLLED_BACK
        rec.fraction = 0.0

    def active_version(self, type_name: str) -> VersionId:
        records = self._versions.get(type_name)
        if not records:
            raise NoVersionsError(type_name)
        active = [
            r for r in records
            if r.status == VersionStatus.ACTIVE and r.fraction >= 1.0
        ]
        if not active:
            raise NoVersionsError(f"{type_name}: no fully active version")
        return max(active, key=lambda r: r.id.ordinal).id

    def previous_version(self, vid: VersionId) -> VersionId:
        if vid.ordinal <= 1:
            raise NoOlderVersionError(str(vid))
        return VersionId(vid.type_name, vid.ordinal - 1)

    def latest_version(self, type_name: str) -> VersionId:
        records = self._versions.get(type_name)
        if not records:
            raise NoVersionsError(type_name)
        return records[-1].id

    def spec_for(self, vid: VersionId) -> BehaviorSpec:
        return self.record(vid).spec

    def active_spec(self, type_name: str) -> BehaviorSpec:
        return self.spec_for(self.active_version(type_name))

    def fall_back(self, type_name: str) -> VersionId:
        """Roll the active version back one ordinal; returns the new active."""
        current = self.active_version(type_name)
        previous = self.previous_version(current)
        self.roll_back(current)
        self.activate(previous, 1.0)
        return previous
