"""Bounded-delay schedules and parameter version caches.

A schedule answers, for client k at iteration t, which earlier iteration's
parameter version the client consumes. Ages are bounded per client; the
engines treat an over-age fetch as a hard fault rather than waiting, so a
schedule that breaks its own bound surfaces immediately with a distinct exit
status instead of silently corrupting the run's certificates.

Version indices start at 1: the initial vectors are labeled as version 1, and
a schedule never references anything earlier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ColdStartError, ConfigurationError, StalenessViolationError

SCHEDULE_KINDS = ("zero", "fixed", "periodic", "uniform-random")

_DRAW_SALT = 0x5D


@dataclass(frozen=True)
class DelaySchedule:
    """Per-client version selection rule, a pure function of (seed, client, t).

    kind zero: always the current version. fixed: a constant offset (which may
    exceed the bound - validation exists to catch exactly that). periodic:
    cycles the age through 0..bound. uniform-random: age drawn uniformly from
    {0..bound}, independently per (client, t), stateless and order-free, and
    deliberately non-monotone.
    """

    kind: str
    bounds: tuple
    seed: int = 0
    offset: int | None = None

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        bounds = tuple(int(b) for b in self.bounds)
        if len(bounds) == 0:
            raise ConfigurationError("schedule needs at least one client bound")
        if any(b < 0 for b in bounds):
            raise ConfigurationError("delay bounds must be non-negative")
        object.__setattr__(self, "bounds", bounds)
        if self.kind == "fixed":
            if self.offset is None or int(self.offset) < 0:
                raise ConfigurationError("fixed schedule needs a non-negative offset")
            object.__setattr__(self, "offset", int(self.offset))
        elif self.offset is not None:
            raise ConfigurationError(f"offset only applies to the fixed kind, not {self.kind!r}")

    @property
    def client_count(self) -> int:
        return len(self.bounds)

    @property
    def max_bound(self) -> int:
        return max(self.bounds)

    def version_index(self, k: int, t: int) -> int:
        """Index of the version client k consumes at iteration t; always >= 1."""
        if t < 1:
            raise ConfigurationError(f"iterations are numbered from 1, got {t}")
        if not 0 <= k < len(self.bounds):
            raise ConfigurationError(f"client {k} outside 0..{len(self.bounds) - 1}")
        if self.kind == "zero":
            return t
        if self.kind == "fixed":
            return max(1, t - self.offset)
        if self.kind == "periodic":
            return max(1, t - (t - 1) % (self.bounds[k] + 1))
        age = int(np.random.default_rng((self.seed, _DRAW_SALT, k, t)).integers(0, self.bounds[k] + 1))
        return max(1, t - age)

    def age_at(self, k: int, t: int) -> int:
        return t - self.version_index(k, t)


def validate_schedule(schedule: DelaySchedule, horizon: int) -> list:
    """Enumerate every (client, t) up to the horizon; list bound violations.

    Each violation is (client, t, observed age, bound). Empty list = valid.
    """
    violations = []
    for k in range(schedule.client_count):
        bound = schedule.bounds[k]
        for t in range(1, horizon + 1):
            index = schedule.version_index(k, t)
            age = t - index
            if index < 1 or age < 0 or age > bound:
                violations.append((k, t, age, bound))
    return violations


class VersionCache:
    """Ring buffer of the last ``capacity`` parameter versions.

    Pushes must be contiguous in the iteration index; a fetch of an evicted or
    never-pushed index is a staleness violation, because with capacity
    max bound + 1 it can only happen when a schedule exceeded its bound.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError("cache capacity must be at least 1")
        self.capacity = int(capacity)
        self._store: dict[int, np.ndarray] = {}
        self._last: int | None = None

    @property
    def last_index(self) -> int | None:
        return self._last

    def push(self, t: int, vector) -> None:
        assert self._last is None or t == self._last + 1, (
            f"non-contiguous push: {t} after {self._last}"
        )
        kept = np.array(vector, dtype=float, copy=True)
        kept.flags.writeable = False
        self._store[t] = kept
        self._last = t
        evicted = t - self.capacity
        if evicted in self._store:
            del self._store[evicted]

    def fetch(self, index: int) -> np.ndarray:
        if index not in self._store:
            raise StalenessViolationError(
                f"version {index} unavailable (retained: "
                f"{sorted(self._store) if self._store else 'none'})"
            )
        return self._store[index]


class NeighborVersionStore:
    """Latest-received neighbor versions for neighbor-averaging mode.

    ``deliver`` records an arriving version of p's parameters at client k
    (keeping only the newest); ``latest_available`` implements the reuse rule:
    return the newest received version as long as its age is within client k's
    bound, fail hard otherwise.
    """

    def __init__(self, bounds):
        self.bounds = tuple(int(b) for b in bounds)
        self._latest: dict = {}

    def deliver(self, k: int, p: int, index: int, vector) -> None:
        key = (k, p)
        current = self._latest.get(key)
        if current is None or index > current[0]:
            kept = np.array(vector, dtype=float, copy=True)
            kept.flags.writeable = False
            self._latest[key] = (index, kept)

    def latest_available(self, k: int, p: int, t: int):
        entry = self._latest.get((k, p))
        if entry is None:
            raise ColdStartError(f"client {k} has never received a version from {p}")
        index, vector = entry
        age = t - index
        if age > self.bounds[k]:
            raise StalenessViolationError(
                f"version of client {p} held by client {k} has age {age} > bound {self.bounds[k]}"
            )
        return vector, age
