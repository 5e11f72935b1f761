"""Streaming empiric measures ``mu_n = (1/n) sum_{j<n} delta_{f^j(x)}``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .dynamics import MapSystem, run_orbit_counts
from .errors import DomainError, OrbitDivergenceError
from .measure import DiscreteMeasure, GridPartition

DEFAULT_N0 = 1000
DEFAULT_GAMMA = 1.25


class EmpiricAccumulator:
    """Visit counts of one orbit; ``snapshot()`` is the current ``mu_n``."""

    def __init__(self, partition: GridPartition):
        self.partition = partition
        self.counts: dict[int, int] = {}
        self.n = 0

    def push(self, point) -> "EmpiricAccumulator":
        cell = self.partition.cell_of(point)
        self.counts[cell] = self.counts.get(cell, 0) + 1
        self.n += 1
        return self

    def snapshot(self) -> DiscreteMeasure:
        if self.n == 0:
            raise ValueError("empty accumulator has no empiric measure")
        cells = np.fromiter(self.counts, dtype=np.int64, count=len(self.counts))
        counts = np.fromiter(self.counts.values(), dtype=np.float64, count=len(self.counts))
        return DiscreteMeasure(self.partition, cells, counts / self.n)


@dataclass(frozen=True)
class CheckpointSchedule:
    """Strictly increasing checkpoints; the last one is the run length."""

    points: tuple[int, ...]

    def __post_init__(self):
        pts = tuple(int(p) for p in self.points)
        if not pts:
            raise ValueError("schedule needs at least one checkpoint")
        if pts[0] < 1 or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("checkpoints must be strictly increasing positive integers")
        object.__setattr__(self, "points", pts)

    @classmethod
    def geometric(cls, n0: int = DEFAULT_N0, gamma: float = DEFAULT_GAMMA,
                  horizon: Optional[int] = None) -> "CheckpointSchedule":
        """``n_k = ceil(n0 * gamma**k)`` up to ``horizon`` (always included)."""
        if n0 < 1 or gamma <= 1.0:
            raise ValueError("need n0 >= 1 and gamma > 1")
        horizon = int(horizon if horizon is not None else n0)
        if horizon < n0:
            raise ValueError("horizon must be at least n0")
        pts = []
        k = 0
        while True:
            n = math.ceil(n0 * gamma ** k)
            if n >= horizon:
                break
            if not pts or n > pts[-1]:
                pts.append(n)
            k += 1
        pts.append(horizon)
        return cls(tuple(pts))

    @property
    def horizon(self) -> int:
        return self.points[-1]

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def empiric_sequence(
    system: MapSystem,
    x0,
    schedule: CheckpointSchedule,
    partition: GridPartition,
    burn_in: int = 0,
) -> list[tuple[int, DiscreteMeasure]]:
    """Snapshots ``(n, mu_n)`` at each scheduled ``n`` from a single orbit pass.

    The first ``burn_in`` orbit points are discarded before counting. On
    divergence raises :class:`OrbitDivergenceError` whose ``partial`` holds
    the snapshots completed so far.
    """
    if system.kernel is not None:
        counts, filled, fail_at = run_orbit_counts(
            system, x0, partition, schedule.points, burn_in
        )
        out = [
            (n, DiscreteMeasure.from_counts(partition, counts[k]))
            for k, n in enumerate(schedule.points[:filled])
        ]
        if filled < len(schedule):
            raise OrbitDivergenceError(
                f"{system.name}: orbit diverged at step {fail_at}", fail_at, out
            )
        return out
    return _python_sequence(system, x0, schedule, partition, burn_in)


def _python_sequence(system, x0, schedule, partition, burn_in):
    acc = EmpiricAccumulator(partition)
    out = []
    targets = iter(schedule.points)
    target = next(targets)
    state = system.lift_point(x0)
    total = burn_in + schedule.horizon
    for j in range(total):
        if j >= burn_in:
            acc.push(system.observe(state))
            if acc.n == target:
                out.append((target, acc.snapshot()))
                target = next(targets, None)
                if target is None:
                    break
        state = system.step(state)
        pt = np.asarray(system.observe(state), dtype=np.float64)
        try:
            if not np.all(np.isfinite(pt)):
                raise DomainError("non-finite state")
            system.domain.normalize(pt)
        except DomainError as exc:
            raise OrbitDivergenceError(
                f"{system.name}: orbit diverged at step {j + 1}", j + 1, out
            ) from exc
    return out
