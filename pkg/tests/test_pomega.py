import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srblab.dynamics import BOWEN_A, BOWEN_B, make_system
from srblab.empiric import CheckpointSchedule, empiric_sequence
from srblab.measure import (
    DiscreteMeasure,
    DomainDescriptor,
    GridPartition,
    IncompatibleError,
    WeakStarMetric,
    convex_combination,
    dirac,
    family_for,
    uniform_measure,
)
from srblab.pomega import (
    LimitSetEstimate,
    PomegaParams,
    WitnessNotFoundError,
    cluster_measures,
    convexlike_search,
    estimate_pomega,
    limit_set_from_snapshots,
    segment_projection_residual,
    single_linkage,
)

BOX = DomainDescriptor.box([(-2.0, 2.0), (-2.0, 2.0)])


def one_rep(mu):
    return LimitSetEstimate([mu], [1], True, 0.0, (1, 1))


def test_identity_limit_set():
    s = make_system("identity")
    part = GridPartition(s.domain, (16, 16))
    metric = WeakStarMetric(family_for(s.domain))
    est = estimate_pomega(s, [0.3, 0.4], part, metric,
                          PomegaParams(CheckpointSchedule.geometric(10, 1.5, 1000)))
    assert est.convergent and est.diameter == 0.0
    assert est.representatives == [dirac([0.3, 0.4], part)]


def test_contraction_limit_near_dirac():
    """Limit is delta at (0, y); thresholds from the contraction grid preset."""
    s = make_system("contraction_half")
    part = GridPartition(s.domain, (4, 4096))
    metric = WeakStarMetric(family_for(s.domain))
    params = PomegaParams(CheckpointSchedule.geometric(1000, 1.25, 10_000),
                          delta_cluster=2e-4, delta_conv=2e-3)
    for y in (0.1, 0.5, 0.93):
        est = estimate_pomega(s, [0.77, y], part, metric, params)
        assert est.convergent and len(est.representatives) == 1
        assert metric.distance(est.representatives[0], dirac([0.0, y], part)) <= 2e-3


def test_too_few_tail_checkpoints():
    s = make_system("identity")
    part = GridPartition(s.domain, (4, 4))
    snaps = empiric_sequence(s, [0.1, 0.1], CheckpointSchedule((5,)), part)
    with pytest.raises(ValueError):
        limit_set_from_snapshots(snaps, WeakStarMetric(family_for(s.domain)))


def test_param_validation():
    sched = CheckpointSchedule((1, 2))
    with pytest.raises(ValueError):
        PomegaParams(sched, tail_fraction=0.0)
    with pytest.raises(ValueError):
        PomegaParams(sched, delta_cluster=-1.0)


def test_single_linkage_chains():
    d = np.array([[0, 1, 5, 9], [1, 0, 1, 9], [5, 1, 0, 9], [9, 9, 9, 0]], dtype=float)
    assert single_linkage(d, 1.0) == [[0, 1, 2], [3]]
    assert single_linkage(d, 0.5) == [[0], [1], [2], [3]]


PART8 = GridPartition(DomainDescriptor.torus(1), (64,))
M8 = WeakStarMetric(family_for(PART8.domain))


@st.composite
def measure_sets(draw):
    n = draw(st.integers(2, 12))
    out = []
    for _ in range(n):
        cells = draw(st.lists(st.integers(0, 63), min_size=1, max_size=4, unique=True))
        w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=len(cells),
                                   max_size=len(cells))))
        out.append(DiscreteMeasure(PART8, cells, w / w.sum(), renormalize=True))
    return out


@settings(max_examples=60, deadline=None)
@given(measure_sets(), st.floats(0.005, 0.3))
def test_monotone_refinement(ms, delta):
    coarse, _ = cluster_measures(ms, M8, delta)
    fine, _ = cluster_measures(ms, M8, delta / 2)
    assert len(fine) >= len(coarse)


@settings(max_examples=60, deadline=None)
@given(measure_sets(), st.floats(0.005, 0.3))
def test_cluster_soundness_and_separation(ms, delta):
    groups, cents = cluster_measures(ms, M8, delta)
    members = sorted(i for g in groups for i in g)
    assert members == list(range(len(ms)))  # every measure in exactly one cluster
    for i in range(len(cents)):
        for j in range(i + 1, len(cents)):
            assert M8.distance(cents[i], cents[j]) >= delta
    for c in cents:
        assert abs(float(c.weights.sum()) - 1.0) <= 1e-9


def test_convergent_implies_one_representative():
    s = make_system("cat")
    part = GridPartition(s.domain, (16, 16))
    metric = WeakStarMetric(family_for(s.domain))
    snaps = empiric_sequence(s, [0.2, 0.7], CheckpointSchedule.geometric(1000, 1.25, 50_000), part)
    est = limit_set_from_snapshots(snaps, metric)
    assert est.convergent and len(est.representatives) == 1
    assert est.window == (snaps[len(snaps) - len(est.members[0])][0], 50_000)


# --- segment projection ---------------------------------------------------

def endpoints(res=(4, 4)):
    part = GridPartition(BOX, res)
    return part, dirac(BOWEN_A, part), dirac(BOWEN_B, part), WeakStarMetric(family_for(BOX))


def test_projection_endpoints_and_midpoint():
    part, a, b, metric = endpoints((25, 25))
    ((lam, res),) = segment_projection_residual(one_rep(a), a, b, metric)
    assert lam == 0.0 and res == 0.0
    ((lam, res),) = segment_projection_residual(one_rep(b), a, b, metric)
    assert lam == 1.0 and res == 0.0
    mid = convex_combination([a, b], [0.5, 0.5])
    ((lam, res),) = segment_projection_residual(one_rep(mid), a, b, metric)
    assert lam == pytest.approx(0.5, abs=1e-4) and res <= 1e-4


def test_projection_uniform_grid_oracle():
    """[DERIVED] brute-force lambda grid, step 1e-5, with an independent
    evaluation of the first 24 test functions: min at lambda 0.29289,
    residual 0.027721083761417478."""
    part, a, b, metric = endpoints((4, 4))
    assert len({a.cells[0], b.cells[0]}) == 2 and part.n_cells == 16
    ((lam, res),) = segment_projection_residual(one_rep(uniform_measure(part)), a, b, metric)
    assert lam == pytest.approx(0.29289, abs=1e-4)
    assert res == pytest.approx(0.027721083761417478, abs=1e-5)
    assert res >= 0.027721083761417478 - 1e-12 - 1e-5


def test_projection_partition_mismatch():
    _, a, b, metric = endpoints((4, 4))
    other = dirac(BOWEN_A, GridPartition(BOX, (5, 5)))
    with pytest.raises(IncompatibleError):
        segment_projection_residual(one_rep(other), a, b, metric)


# --- convex-like search ---------------------------------------------------

def synthetic_walk(part, a, b, lams):
    return [(10 * (k + 1), convex_combination([a, b], [1 - l, l])) for k, l in enumerate(lams)]


def test_search_lambda_zero_and_one():
    part, a, b, metric = endpoints((8, 8))
    lams = [0.0, 0.2, 0.5, 0.9, 1.0, 0.6, 0.3, 0.0, 0.4, 1.0]
    snaps = synthetic_walk(part, a, b, lams)
    d = metric.distance(a, b)
    h, mu_h = convexlike_search(snaps, a, b, 0.0, 0.01 * d, 20, metric)
    assert h == 80 and metric.distance(mu_h, a) <= 0.01 * d
    h, mu_h = convexlike_search(snaps, a, b, 1.0, 0.01 * d, 20, metric)
    assert h == 50
    h, _ = convexlike_search(snaps, a, b, 0.5, 0.01 * d, 20, metric)
    assert h == 30  # first index past K inside the window that qualifies


def test_search_not_found_reports_closest_miss():
    part, a, b, metric = endpoints((8, 8))
    snaps = synthetic_walk(part, a, b, [0.0, 0.1, 0.9, 1.0])
    d = metric.distance(a, b)
    with pytest.raises(WitnessNotFoundError) as info:
        convexlike_search(snaps, a, b, 0.5, 0.05 * d, 0, metric)
    assert info.value.closest_gap == pytest.approx(0.4 * d, rel=1e-9)
    with pytest.raises(WitnessNotFoundError):
        convexlike_search(snaps, a, b, 0.5, 0.05 * d, 10_000, metric)
    with pytest.raises(ValueError):
        convexlike_search(snaps, a, b, 1.5, 0.1, 0, metric)


@pytest.fixture(scope="module")
def bowen_run():
    s = make_system("bowen_eye", {"dt": 0.01})
    part = GridPartition(s.domain, (25, 25))
    metric = WeakStarMetric(family_for(s.domain))
    x0 = (0.3, 0.2)
    params = PomegaParams(CheckpointSchedule.geometric(1000, 1.25, 100_000),
                          delta_cluster=0.005, burn_in=1000)
    est = estimate_pomega(s, x0, part, metric, params)
    fine = empiric_sequence(s, x0, CheckpointSchedule.geometric(1000, 1.01, 100_000), part, 1000)
    return part, metric, est, fine


def test_bowen_not_convergent(bowen_run):
    part, metric, est, _ = bowen_run
    assert not est.convergent and len(est.representatives) >= 2
    a, b = dirac(BOWEN_A, part), dirac(BOWEN_B, part)
    res = segment_projection_residual(est, a, b, metric)
    assert max(r for _, r in res) <= 0.1


def test_bowen_interpolation_witness(bowen_run):
    """[DERIVED] the exhaustive scan over all fine checkpoints finds a witness
    for lambda 0.5, eps = 0.05 dist; the search must return a genuine one."""
    part, metric, est, fine = bowen_run
    a, b = dirac(BOWEN_A, part), dirac(BOWEN_B, part)
    lams = [l for l, _ in segment_projection_residual(est, a, b, metric)]
    mu = est.representatives[int(np.argmin(lams))]
    nu = est.representatives[int(np.argmax(lams))]
    d = metric.distance(nu, mu)
    eps = 0.05 * d
    K = fine[len(fine) // 3][0]
    exhaustive = [n for n, m in fine if n > K and abs(metric.distance(m, mu) - 0.5 * d) <= eps]
    assert exhaustive
    h, mu_h = convexlike_search(fine, mu, nu, 0.5, eps, K, metric)
    assert h in exhaustive and h > K
    assert abs(metric.distance(mu_h, mu) - 0.5 * d) <= eps
