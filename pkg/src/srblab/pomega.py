"""Finite-horizon estimates of the limit set of an empiric sequence.

The tail of the checkpointed sequence is clustered by single linkage; each
cluster centroid stands for one accumulation point. Whether a sequence is
"convergent" is decided from the tail diameter, which is a heuristic at any
finite horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import MapSystem
from .empiric import CheckpointSchedule, empiric_sequence
from .measure import (
    DiscreteMeasure,
    GridPartition,
    IncompatibleError,
    WeakStarMetric,
    convex_combination,
)

DEFAULT_DELTA_CLUSTER = 0.05
DEFAULT_DELTA_CONV = 0.02
DEFAULT_TAIL_FRACTION = 0.5
GOLDEN_TOL = 1e-4


@dataclass(frozen=True)
class PomegaParams:
    schedule: CheckpointSchedule
    tail_fraction: float = DEFAULT_TAIL_FRACTION
    delta_cluster: float = DEFAULT_DELTA_CLUSTER
    delta_conv: float = DEFAULT_DELTA_CONV
    burn_in: int = 0

    def __post_init__(self):
        if not 0.0 < self.tail_fraction <= 1.0:
            raise ValueError("tail_fraction must lie in (0, 1]")
        if self.delta_cluster <= 0 or self.delta_conv <= 0:
            raise ValueError("clustering thresholds must be positive")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")


@dataclass
class LimitSetEstimate:
    representatives: list[DiscreteMeasure]
    populations: list[int]
    convergent: bool
    diameter: float
    window: tuple[int, int]
    members: list[list[int]] = field(default_factory=list)
    delta_cluster: float = DEFAULT_DELTA_CLUSTER
    delta_conv: float = DEFAULT_DELTA_CONV

    def to_dict(self) -> dict:
        return {
            "representatives": [r.to_dict() for r in self.representatives],
            "populations": list(self.populations),
            "convergent": self.convergent,
            "diameter": self.diameter,
            "tail_window": list(self.window),
            "delta_cluster": self.delta_cluster,
            "delta_conv": self.delta_conv,
        }


def single_linkage(dist: np.ndarray, threshold: float) -> list[list[int]]:
    """Connected components of the graph ``dist[i, j] <= threshold``.

    Components are listed by their smallest member; members are sorted.
    """
    n = dist.shape[0]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    rows, cols = np.nonzero(np.triu(dist <= threshold, k=1))
    for i, j in zip(rows.tolist(), cols.tolist()):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [groups[k] for k in sorted(groups)]


def centroid(measures: Sequence[DiscreteMeasure]) -> DiscreteMeasure:
    """Cell-wise mean, renormalized."""
    if len(measures) == 1:
        return measures[0]
    return convex_combination(list(measures), [1.0 / len(measures)] * len(measures))


def cluster_measures(measures: Sequence[DiscreteMeasure], metric: WeakStarMetric,
                     threshold: float) -> tuple[list[list[int]], list[DiscreteMeasure]]:
    """Single-linkage clusters and their centroids.

    Clusters whose centroids end up closer than ``threshold`` are merged, so
    the returned centroids are pairwise at least ``threshold`` apart.
    """
    if not measures:
        return [], []
    emb = np.stack([metric.embed(m) for m in measures])
    groups = single_linkage(metric.pairwise(emb), threshold)
    while True:
        cents = [centroid([measures[i] for i in g]) for g in groups]
        if len(cents) < 2:
            return groups, cents
        cd = metric.pairwise(np.stack([metric.embed(c) for c in cents]))
        np.fill_diagonal(cd, np.inf)
        i, j = np.unravel_index(int(np.argmin(cd)), cd.shape)
        if cd[i, j] >= threshold:
            return groups, cents
        a, b = min(i, j), max(i, j)
        groups[a] = sorted(groups[a] + groups[b])
        del groups[b]


def limit_set_from_snapshots(
    snapshots: Sequence[tuple[int, DiscreteMeasure]],
    metric: WeakStarMetric,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    delta_cluster: float = DEFAULT_DELTA_CLUSTER,
    delta_conv: float = DEFAULT_DELTA_CONV,
) -> LimitSetEstimate:
    """Cluster the last ``tail_fraction`` of the checkpoints."""
    k = len(snapshots)
    start = k - max(int(math.ceil(tail_fraction * k)), 0)
    tail = list(snapshots[start:])
    if len(tail) < 2:
        raise ValueError(f"need at least 2 tail checkpoints, got {len(tail)}")
    measures = [m for _, m in tail]
    emb = np.stack([metric.embed(m) for m in measures])
    diameter = float(metric.pairwise(emb).max())
    if diameter <= delta_conv:
        groups = [list(range(len(tail)))]
        reps = [centroid(measures)]
    else:
        groups, reps = cluster_measures(measures, metric, delta_cluster)
    return LimitSetEstimate(
        representatives=reps,
        populations=[len(g) for g in groups],
        convergent=diameter <= delta_conv and len(reps) == 1,
        diameter=diameter,
        window=(tail[0][0], tail[-1][0]),
        members=[[tail[i][0] for i in g] for g in groups],
        delta_cluster=delta_cluster,
        delta_conv=delta_conv,
    )


def estimate_pomega(
    system: MapSystem,
    x0,
    partition: GridPartition,
    metric: WeakStarMetric,
    params: PomegaParams,
) -> LimitSetEstimate:
    snaps = empiric_sequence(system, x0, params.schedule, partition, params.burn_in)
    return limit_set_from_snapshots(
        snaps, metric, params.tail_fraction, params.delta_cluster, params.delta_conv
    )


def _golden_min(f, lo=0.0, hi=1.0, tol=GOLDEN_TOL):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def segment_projection_residual(
    estimate: LimitSetEstimate,
    mu_a: DiscreteMeasure,
    mu_b: DiscreteMeasure,
    metric: WeakStarMetric,
) -> list[tuple[float, float]]:
    """Per representative ``(lam*, residual)`` against ``(1-lam) mu_a + lam mu_b``.

    The objective is convex in ``lam`` because the metric is linear along
    segments, so golden-section search is enough; the endpoints are checked
    explicitly so exact endpoint matches return residual 0.
    """
    if mu_a.partition != mu_b.partition:
        raise IncompatibleError("segment endpoints live on different partitions")
    ea, eb = metric.embed(mu_a), metric.embed(mu_b)
    out = []
    for rep in estimate.representatives:
        if rep.partition != mu_a.partition:
            raise IncompatibleError("representative and endpoints differ in partition")
        er = metric.embed(rep)

        def objective(lam, er=er):
            return metric.between(er, (1.0 - lam) * ea + lam * eb)

        best = min([(0.0, objective(0.0)), (1.0, objective(1.0)), _golden_min(objective)],
                   key=lambda t: t[1])
        out.append((float(best[0]), float(best[1])))
    return out


class WitnessNotFoundError(LookupError):
    """No checkpoint satisfies the interpolation inequality."""

    def __init__(self, message, closest_h=None, closest_gap=math.inf):
        super().__init__(message)
        self.closest_h = closest_h
        self.closest_gap = closest_gap


def convexlike_search(
    snapshots: Sequence[tuple[int, DiscreteMeasure]],
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    lam: float,
    eps: float,
    K: int,
    metric: WeakStarMetric,
) -> tuple[int, DiscreteMeasure]:
    """First checkpoint ``h > K`` with ``|dist(mu_h, mu) - lam dist(nu, mu)| <= eps``.

    ``h -> dist(mu_h, mu)`` moves by at most ``1/h`` per step, so between a
    checkpoint near ``mu`` and a later one near ``nu`` it passes through every
    intermediate level; a fine enough schedule therefore catches a witness.
    On failure :class:`WitnessNotFoundError` reports the closest miss and
    whether such a ``mu``-then-``nu`` passage was seen (if so the schedule is
    too coarse for ``eps``).
    """
    if not 0.0 <= lam <= 1.0 or eps <= 0:
        raise ValueError("need lam in [0, 1] and eps > 0")
    ns = [n for n, _ in snapshots]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("snapshots must be ordered by n")
    idx = [i for i, n in enumerate(ns) if n > K]
    if not idx:
        raise WitnessNotFoundError("no checkpoint beyond K")
    target = lam * metric.distance(nu, mu)
    emb = np.stack([metric.embed(snapshots[i][1]) for i in idx])
    to_mu = metric.to_many(emb, metric.embed(mu))
    gaps = np.abs(to_mu - target)
    hits = np.nonzero(gaps <= eps)[0]
    if hits.size:
        i = idx[int(hits[0])]
        return ns[i], snapshots[i][1]
    to_nu = metric.to_many(emb, metric.embed(nu))
    near = eps
    near_mu = np.nonzero(to_mu <= near)[0]
    passage = bool(near_mu.size and np.any(to_nu[near_mu[0]:] <= near))
    best = int(np.argmin(gaps))
    hint = "; a passage from mu to nu was seen, so the schedule is too coarse" if passage else ""
    raise WitnessNotFoundError(
        f"no witness within eps={eps:g}; closest miss at n={ns[idx[best]]} "
        f"(gap {gaps[best]:.3g}){hint}",
        closest_h=ns[idx[best]],
        closest_gap=float(gaps[best]),
    )
