"""Invariant suite behind ``srblab check``.

Each check returns a :class:`CheckResult`; the suite is sized to finish in
seconds, so sample counts are smaller than in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _backend
from .dynamics import (AffineKernel, BOWEN_A, BOWEN_B, MapSystem, iterate_many, make_system,
                       run_orbit_counts)
from .empiric import CheckpointSchedule, EmpiricAccumulator, empiric_sequence
from .measure import (DiscreteMeasure, DomainDescriptor, GridPartition, WeakStarMetric,
                      convex_combination, family_for, marginal)
from .pomega import limit_set_from_snapshots


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def random_measure(partition: GridPartition, rng: np.random.Generator, support=None):
    n = partition.n_cells
    k = support or int(rng.integers(1, min(n, 64) + 1))
    cells = rng.choice(n, size=k, replace=False)
    w = rng.random(k) + 1e-3
    return DiscreteMeasure(partition, cells, w / w.sum(), renormalize=True)


def check_metric_axioms(rng, triples=100) -> CheckResult:
    dom = DomainDescriptor.torus(2)
    part = GridPartition(dom, (16, 16))
    metric = WeakStarMetric(family_for(dom))
    worst = 0.0
    for _ in range(triples):
        a, b, c = (random_measure(part, rng) for _ in range(3))
        if metric.distance(a, b) != metric.distance(b, a) or metric.distance(a, a) != 0.0:
            return CheckResult("metric axioms", False, "symmetry or identity failed")
        worst = max(worst, metric.distance(a, c) - metric.distance(a, b) - metric.distance(b, c))
        for lam in (0.25, 0.5, 0.75):
            mix = convex_combination([a, b], [1 - lam, lam])
            worst = max(worst, abs(metric.distance(mix, a) - lam * metric.distance(b, a)) - 1e-12)
    return CheckResult("metric axioms", worst <= 1e-12, f"worst slack {worst:.3g}")


def check_truncation(rng) -> CheckResult:
    dom = DomainDescriptor.torus(2)
    part = GridPartition(dom, (16, 16))
    fam = family_for(dom)
    a, b = random_measure(part, rng), random_measure(part, rng)
    prev = 0.0
    for i in range(1, 25):
        d = WeakStarMetric(fam, i).distance(a, b)
        if d < prev or d >= 1.0:
            return CheckResult("truncation monotonicity", False, f"I={i}")
        prev = d
    tail = WeakStarMetric(fam, 30).distance(a, b) - WeakStarMetric(fam, 24).distance(a, b)
    return CheckResult("truncation monotonicity", tail <= 2.0**-24, f"tail {tail:.3g}")


def check_oscillation_bound(rng) -> CheckResult:
    system = make_system("tripling")
    part = GridPartition(system.domain, (64,))
    metric = WeakStarMetric(family_for(system.domain))
    acc = EmpiricAccumulator(part)
    x = rng.random(1)
    for n in range(1, 2001):
        acc.push(x)
        x = system.step(x)
        if n in (1, 10, 100, 1000, 2000):
            before = acc.snapshot()
            after = EmpiricAccumulator(part)
            after.counts, after.n = dict(acc.counts), acc.n
            after.push(x)
            if metric.distance(before, after.snapshot()) > 1.0 / (n + 1):
                return CheckResult("oscillation bound", False, f"n={n}")
    return CheckResult("oscillation bound", True)


def check_domain_closure(system: MapSystem, rng, starts=10_000, steps=100) -> CheckResult:
    if not isinstance(system.kernel, AffineKernel):
        return _region_closure(system, rng)
    dom = system.domain
    pts = dom.lo + dom.length * rng.random((starts, dom.dimension))
    _, bad = iterate_many(system, pts, steps)
    return CheckResult("domain closure", bad == 0, f"{starts} starts, {steps} steps, {bad} outside")


def _region_closure(system, rng, starts=50, steps=20) -> CheckResult:
    dom, region = system.domain, system.region
    bad = 0
    done = 0
    while done < starts:
        p = dom.lo + dom.length * rng.random(dom.dimension)
        if region is not None and not region(p, closed=False):
            continue
        done += 1
        s = system.lift_point(p)
        for _ in range(steps):
            s = system.step(s)
            q = system.observe(s)
            inside = region(q, closed=True) if region is not None else True
            bad += not (inside and np.all(np.isfinite(q)))
    return CheckResult("domain closure", bad == 0, f"{starts} starts, {steps} steps, {bad} outside")


def check_backends(system: MapSystem, partition: GridPartition, x0) -> CheckResult:
    if system.kernel is None:
        return CheckResult("backend agreement", True, "no kernel")
    if _backend._ckernels is None:
        return CheckResult("backend agreement", True, "compiled backend not built")
    checks = [100, 500, 1000]
    a = run_orbit_counts(system, x0, partition, checks, backend=_backend._ckernels)
    b = run_orbit_counts(system, x0, partition, checks, backend=_backend._pykernels)
    same = np.array_equal(a[0], b[0]) and a[1:] == b[1:]
    return CheckResult("backend agreement", bool(same))


def check_determinism(system, partition, metric, x0) -> CheckResult:
    sched = CheckpointSchedule.geometric(100, 1.5, 2000)
    s1 = empiric_sequence(system, x0, sched, partition)
    s2 = empiric_sequence(system, x0, sched, partition)
    same = all(n1 == n2 and m1 == m2 for (n1, m1), (n2, m2) in zip(s1, s2))
    norm = all(abs(float(m.weights.sum()) - 1.0) <= 1e-9 for _, m in s1)
    est = limit_set_from_snapshots(s1, metric)
    conv_ok = (not est.convergent) or len(est.representatives) == 1
    return CheckResult("determinism and normalization", same and norm and conv_ok)


def check_marginals(rng) -> CheckResult:
    dom = DomainDescriptor.torus(3)
    part = GridPartition(dom, (4, 5, 6))
    mu = random_measure(part, rng)
    ok = all(abs(float(marginal(mu, ax).weights.sum()) - 1.0) <= 1e-9
             for ax in ([0], [1, 2], [0, 2]))
    return CheckResult("marginal mass", ok)


def check_bowen_fixed_points() -> CheckResult:
    system = make_system("bowen_eye")
    worst = 0.0
    for p in (BOWEN_A, BOWEN_B):
        s = system.lift_point(p)
        q = system.observe(system.step(s))
        worst = max(worst, float(np.max(np.abs(q - np.asarray(p)))))
    return CheckResult("bowen saddles fixed", worst <= 1e-8, f"max drift {worst:.3g}")


def run_checks(system: MapSystem, partition: GridPartition, metric: WeakStarMetric,
               x0, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    suite: list[Callable[[], CheckResult]] = [
        lambda: check_metric_axioms(rng),
        lambda: check_truncation(rng),
        lambda: check_marginals(rng),
        lambda: check_oscillation_bound(rng),
        lambda: check_domain_closure(system, rng),
        lambda: check_backends(system, partition, x0),
        lambda: check_determinism(system, partition, metric, x0),
        check_bowen_fixed_points,
    ]
    out = []
    for chk in suite:
        try:
            out.append(chk())
        except Exception as exc:  # a crashing check is a failing check
            out.append(CheckResult(getattr(chk, "__name__", "check"), False, repr(exc)))
    return out
