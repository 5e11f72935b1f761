import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srblab.dynamics import make_system
from srblab.empiric import CheckpointSchedule, EmpiricAccumulator, empiric_sequence
from srblab.errors import OrbitDivergenceError
from srblab.measure import GridPartition, WeakStarMetric, dirac, family_for, uniform_measure


def without_kernel(system):
    return dataclasses.replace(system, kernel=None)


def test_push_single_point():
    part = GridPartition(make_system("identity").domain, (4, 4))
    acc = EmpiricAccumulator(part).push([0.3, 0.6])
    assert acc.snapshot() == dirac([0.3, 0.6], part)


def test_push_same_point_repeatedly():
    part = GridPartition(make_system("identity").domain, (4, 4))
    acc = EmpiricAccumulator(part)
    for n in range(1, 50):
        acc.push([0.9, 0.1])
        assert acc.snapshot().atoms() == [(part.cell_of([0.9, 0.1]), 1.0)]
        assert acc.n == n == sum(acc.counts.values())


def test_push_alternating():
    part = GridPartition(make_system("tripling").domain, (8,))
    acc = EmpiricAccumulator(part)
    for _ in range(25):
        acc.push([0.05]).push([0.55])
    assert acc.snapshot().atoms() == [(0, 0.5), (4, 0.5)]


def test_empty_snapshot_raises():
    part = GridPartition(make_system("tripling").domain, (8,))
    with pytest.raises(ValueError):
        EmpiricAccumulator(part).snapshot()


def test_geometric_schedule():
    s = CheckpointSchedule.geometric(1000, 1.25, 3000)
    assert s.points == (1000, 1250, 1563, 1954, 2442, 3000)
    assert s.horizon == 3000
    assert CheckpointSchedule.geometric(1000, 1.25).points == (1000,)
    with pytest.raises(ValueError):
        CheckpointSchedule((5, 5))
    with pytest.raises(ValueError):
        CheckpointSchedule.geometric(100, 1.0, 1000)
    with pytest.raises(ValueError):
        CheckpointSchedule.geometric(100, 1.5, 50)


def test_identity_sequence_is_dirac():
    s = make_system("identity")
    part = GridPartition(s.domain, (16, 16))
    x0 = [0.42, 0.17]
    for _, mu in empiric_sequence(s, x0, CheckpointSchedule((1, 10, 100, 1000)), part):
        assert mu == dirac(x0, part)


def test_contraction_tail_mass_oracle():
    """[DERIVED] x_j = 2**-j lies in the first x-cell (width 1/8) iff j >= 4,
    so for n >= 4 exactly 4/n of the mass sits outside the limiting cell."""
    s = make_system("contraction_half")
    part = GridPartition(s.domain, (8, 8))
    fam = family_for(s.domain)
    metric = WeakStarMetric(fam)
    limit = dirac([0.0, 0.5], part)
    steps_before = next(j for j in range(64) if 2.0 ** -j < 1 / 8)
    assert steps_before == 4
    sched = CheckpointSchedule((4, 5, 8, 50, 400, 5000))
    dists = []
    for n, mu in empiric_sequence(s, [1.0, 0.5], sched, part):
        outside = 1.0 - mu.weight_of(limit.cells[0])
        assert outside == pytest.approx(steps_before / n, abs=1e-15)
        dists.append(metric.distance(mu, limit) * n)
    # dist(mu_n, limit) = C / n exactly, hence decreasing to 0
    assert max(dists) - min(dists) <= 1e-12


def test_tripling_equidistributes():
    """[DERIVED] threshold 0.02; calibration at 10x the horizon gave <= 2e-4."""
    s = make_system("tripling")
    part = GridPartition(s.domain, (64,))
    metric = WeakStarMetric(family_for(s.domain), 24)
    x0 = np.random.default_rng(2024).random(1)
    (_, mu), = empiric_sequence(s, x0, CheckpointSchedule((100_000,)), part)
    assert metric.distance(mu, uniform_measure(part)) <= 0.02


def test_oscillation_bound_tripling():
    s = make_system("tripling")
    part = GridPartition(s.domain, (64,))
    metric = WeakStarMetric(family_for(s.domain))
    acc = EmpiricAccumulator(part)
    x = np.array([0.3141592653589793])
    prev = None
    for n in range(1, 10_001):
        acc.push(x)
        x = s.step(x)
        snap = acc.snapshot()
        if prev is not None and n - 1 in (10, 100, 1000, 9999):
            assert metric.distance(prev, snap) <= 1.0 / n
        prev = snap


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 0.999), min_size=2, max_size=300))
def test_oscillation_bound_arbitrary_points(points):
    part = GridPartition(make_system("tripling").domain, (32,))
    metric = WeakStarMetric(family_for(part.domain))
    acc = EmpiricAccumulator(part)
    for p in points[:-1]:
        acc.push([p])
    before = acc.snapshot()
    acc.push([points[-1]])
    assert metric.distance(before, acc.snapshot()) <= 1.0 / acc.n


@pytest.mark.parametrize("name,x0,params,burn", [
    ("cat", (0.1, 0.7), {}, 0),
    ("skew_cat", (0.2, 0.3, 0.4), {}, 13),
    ("bowen_eye", (0.3, 0.2), {"dt": 0.01}, 5),
])
def test_kernel_and_python_paths_agree(name, x0, params, burn):
    s = make_system(name, params)
    part = GridPartition(s.domain, (6,) * s.domain.dimension)
    sched = CheckpointSchedule((3, 40, 200))
    a = empiric_sequence(s, x0, sched, part, burn)
    b = empiric_sequence(without_kernel(s), x0, sched, part, burn)
    assert [n for n, _ in a] == [n for n, _ in b] == [3, 40, 200]
    for (_, m1), (_, m2) in zip(a, b):
        assert m1 == m2 and np.array_equal(m1.weights, m2.weights)


def test_snapshots_normalized_and_reproducible():
    s = make_system("cat")
    part = GridPartition(s.domain, (32, 32))
    sched = CheckpointSchedule.geometric(100, 1.5, 20_000)
    a = empiric_sequence(s, (0.3, 0.8), sched, part)
    b = empiric_sequence(s, (0.3, 0.8), sched, part)
    for (_, m1), (_, m2) in zip(a, b):
        assert abs(float(m1.weights.sum()) - 1.0) <= 1e-9
        assert np.array_equal(m1.cells, m2.cells) and np.array_equal(m1.weights, m2.weights)


@pytest.mark.parametrize("python_path", [False, True])
def test_divergence_keeps_partial_results(python_path):
    s = make_system("affine_custom", {"matrix": [[1.5]], "bounds": [[0.0, 1.0]],
                                      "periodic": [False]})
    if python_path:
        s = without_kernel(s)
    part = GridPartition(s.domain, (4,))
    x0 = [2.0 ** -20]  # leaves [0, 1] after 35 steps
    with pytest.raises(OrbitDivergenceError) as info:
        empiric_sequence(s, x0, CheckpointSchedule((5, 20, 100)), part)
    assert info.value.index == 35
    assert [n for n, _ in info.value.partial] == [5, 20]
