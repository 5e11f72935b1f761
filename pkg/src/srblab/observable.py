"""Monte Carlo estimation of the observable set over Lebesgue-sampled starts.

Each start gets its own counter-based random stream derived from
``(seed, index)``, so the first ``m`` samples of an ``N``-sample plan are
exactly the samples of an ``m``-sample plan. Sweeps over ``N`` reuse one
batch of per-sample results.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import MapSystem
from .errors import DomainError, OrbitDivergenceError
from .measure import DiscreteMeasure, DomainDescriptor, GridPartition, WeakStarMetric
from .pomega import LimitSetEstimate, PomegaParams, cluster_measures, estimate_pomega

DEFAULT_EPS_LADDER = (0.2, 0.1, 0.05, 0.025)
DEFAULT_PHI_SRB = 0.05
DEFAULT_DECAY_RATIO = 0.6
CONFIDENCE = 0.95
MAX_REJECTIONS = 10_000

CLASS_SINGLE = "single"
CLASS_FINITE = "finite"
CLASS_CONTINUUM = "continuum-like"


@dataclass(frozen=True)
class SamplePlan:
    n: int
    seed: int
    domain: DomainDescriptor

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("sample count must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for sample ``index``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def sample_point(plan: SamplePlan, index: int,
                 region: Optional[Callable] = None) -> np.ndarray:
    """Uniform point of the domain (restricted to ``region`` by rejection)."""
    rng = sample_stream(plan.seed, index)
    lo, length = plan.domain.lo, plan.domain.length
    for _ in range(MAX_REJECTIONS):
        p = lo + length * rng.random(plan.domain.dimension)
        if region is None or region(p, closed=False):
            return p
    raise DomainError("rejection sampling failed; region has negligible volume")


def sample_initial_conditions(plan: SamplePlan,
                              region: Optional[Callable] = None) -> np.ndarray:
    return np.stack([sample_point(plan, i, region) for i in range(plan.n)])


def confidence_halfwidth(n: int, level: float = CONFIDENCE) -> float:
    """Two-sided Hoeffding half-width for a Bernoulli mean over ``n`` draws."""
    return math.sqrt(math.log(2.0 / (1.0 - level)) / (2.0 * n))


@dataclass
class SampleOutcome:
    index: int
    x0: np.ndarray
    estimate: Optional[LimitSetEstimate] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.estimate is not None


@dataclass
class CandidateMeasure:
    representative: DiscreteMeasure
    support: int
    basin: dict[float, tuple[float, float]]
    srb: bool = False
    isolated: bool = False
    decay: float = math.nan

    def fraction(self, eps: float) -> float:
        return self.basin[eps][0]

    def to_dict(self) -> dict:
        ladder = sorted(self.basin, reverse=True)
        return {
            "measure": self.representative.to_dict(),
            "support": self.support,
            "basin_fractions": {repr(e): self.basin[e][0] for e in ladder},
            "ci": {repr(e): self.basin[e][1] for e in ladder},
            "decay_ratio": self.decay,
            "srb": self.srb,
            "isolated": self.isolated,
        }


@dataclass
class RunContext:
    system: MapSystem
    partition: GridPartition
    metric: WeakStarMetric
    params: PomegaParams
    threads: Optional[int] = None


@dataclass
class ObservableSetEstimate:
    candidates: list[CandidateMeasure]
    eps_ladder: tuple[float, ...]
    n: int
    n_successful: int
    excluded: list[tuple[int, str]]
    seed: int
    delta_cluster: float
    coverage: Optional[float] = None
    cardinality_class: Optional[str] = None
    sweep: list[tuple[int, int]] = field(default_factory=list)
    outcomes: list[SampleOutcome] = field(default_factory=list, repr=False)
    context: Optional[RunContext] = field(default=None, repr=False)

    @property
    def limit_estimates(self) -> list[LimitSetEstimate]:
        return [o.estimate for o in self.outcomes if o.ok]

    def to_dict(self) -> dict:
        return {
            "candidates": [c.to_dict() for c in self.candidates],
            "eps_ladder": list(self.eps_ladder),
            "n_samples": self.n,
            "n_successful": self.n_successful,
            "excluded_samples": [{"index": i, "reason": r} for i, r in self.excluded],
            "nonconvergent_samples": sum(1 for e in self.limit_estimates if not e.convergent),
            "coverage": self.coverage,
            "cardinality_class": self.cardinality_class,
            "cardinality_sweep": [{"n": n, "candidates": c} for n, c in self.sweep],
        }


def _run_sample(ctx: RunContext, plan: SamplePlan, index: int) -> SampleOutcome:
    x0 = sample_point(plan, index, ctx.system.region)
    try:
        est = estimate_pomega(ctx.system, x0, ctx.partition, ctx.metric, ctx.params)
    except (OrbitDivergenceError, DomainError) as exc:
        return SampleOutcome(index, x0, error=str(exc))
    return SampleOutcome(index, x0, estimate=est)


def run_samples(ctx: RunContext, plan: SamplePlan) -> list[SampleOutcome]:
    """Per-sample limit-set estimates, in sample-index order."""
    threads = ctx.threads or os.cpu_count() or 1
    if threads <= 1 or plan.n == 1:
        return [_run_sample(ctx, plan, i) for i in range(plan.n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: _run_sample(ctx, plan, i), range(plan.n)))


def _min_distances(metric, outcomes, reps_emb) -> np.ndarray:
    """``out[s, c]`` = min over sample ``s``'s representatives of dist to candidate ``c``."""
    out = np.empty((len(outcomes), reps_emb.shape[0]))
    for s, o in enumerate(outcomes):
        emb = np.stack([metric.embed(r) for r in o.estimate.representatives])
        d = np.abs(emb[:, None, :] - reps_emb[None, :, :]) @ metric.coefficients
        out[s] = d.min(axis=0)
    return out


def aggregate(ctx: RunContext, outcomes: Sequence[SampleOutcome], plan: SamplePlan,
              eps_ladder: Sequence[float], phi_srb: float = DEFAULT_PHI_SRB,
              decay_ratio: float = DEFAULT_DECAY_RATIO) -> ObservableSetEstimate:
    """Pool, cluster and score per-sample results."""
    ladder = tuple(sorted((float(e) for e in eps_ladder), reverse=True))
    if not ladder or ladder[-1] <= 0:
        raise ValueError("eps ladder must be nonempty and positive")
    metric = ctx.metric
    dc = ctx.params.delta_cluster
    good = [o for o in outcomes if o.ok]
    excluded = [(o.index, o.error) for o in outcomes if not o.ok]
    n_ok = len(good)
    est = ObservableSetEstimate(
        candidates=[], eps_ladder=ladder, n=len(outcomes), n_successful=n_ok,
        excluded=excluded, seed=plan.seed, delta_cluster=dc,
        outcomes=list(outcomes), context=ctx,
    )
    if n_ok == 0:
        return est
    pooled = [r for o in good for r in o.estimate.representatives]
    groups, cents = cluster_measures(pooled, metric, dc)
    cemb = np.stack([metric.embed(c) for c in cents])
    mind = _min_distances(metric, good, cemb)
    half = confidence_halfwidth(n_ok)
    floor = 2.0 / n_ok
    cands = []
    for c, (g, rep) in enumerate(zip(groups, cents)):
        basin = {e: (float(np.count_nonzero(mind[:, c] < e)) / n_ok, half) for e in ladder}
        if basin[ladder[0]][0] >= floor:
            cands.append((c, CandidateMeasure(rep, len(g), basin)))
    if not cands:
        # every run with a successful sample yields a nonempty estimate:
        # keep the best-supported cluster when no cluster clears the floor
        c = max(range(len(cents)), key=lambda k: (len(groups[k]), -k))
        basin = {e: (float(np.count_nonzero(mind[:, c] < e)) / n_ok, half) for e in ladder}
        cands = [(c, CandidateMeasure(cents[c], len(groups[c]), basin))]
    limits = [o.estimate for o in good]
    kept = [k for k, _ in cands]
    for pos, (c, cand) in enumerate(cands):
        cand = classify_srb(cand, limits, ladder, metric, phi_srb, decay_ratio,
                            min_dist=mind[:, c])
        others = [k for k in kept if k != c]
        nn = min((metric.between(cemb[c], cemb[k]) for k in others), default=math.inf)
        cand.isolated = bool(nn > 2.0 * dc)
        cands[pos] = (c, cand)
    est.candidates = [cand for _, cand in cands]
    return est


def classify_srb(candidate: CandidateMeasure, limits: Sequence[LimitSetEstimate],
                 eps_ladder: Sequence[float], metric: WeakStarMetric,
                 phi_srb: float = DEFAULT_PHI_SRB, decay_ratio: float = DEFAULT_DECAY_RATIO,
                 min_dist: Optional[np.ndarray] = None) -> CandidateMeasure:
    """Scaling heuristic for the SRB property; returns an updated copy.

    SRB requires that convergent samples within ``eps`` keep a fraction of at
    least ``phi_srb`` at every ladder level and that the basin fractions do not
    decay: their mean successive ratio must exceed ``decay_ratio``.
    """
    ladder = sorted(eps_ladder, reverse=True)
    if not limits:
        return replace(candidate, srb=False)
    if min_dist is None:
        target = metric.embed(candidate.representative)
        min_dist = np.array([
            min(metric.between(metric.embed(r), target) for r in lim.representatives)
            for lim in limits
        ])
    conv = np.array([lim.convergent for lim in limits])
    n = len(limits)
    floor_ok = all(np.count_nonzero(conv & (min_dist < e)) / n >= phi_srb for e in ladder)
    fr = [float(np.count_nonzero(min_dist < e)) / n for e in ladder]
    ratios = [b / a for a, b in zip(fr, fr[1:]) if a > 0]
    decay = float(np.mean(ratios)) if ratios else 0.0
    return replace(candidate, srb=bool(floor_ok and decay > decay_ratio), decay=decay)


def restrict(estimate: ObservableSetEstimate, m: int, **kwargs) -> ObservableSetEstimate:
    """Re-aggregate using only the first ``m`` samples (the ``m``-sample plan)."""
    if estimate.context is None:
        raise ValueError("estimate carries no run context")
    if not 1 <= m <= len(estimate.outcomes):
        raise ValueError(f"m must lie in [1, {len(estimate.outcomes)}]")
    plan = SamplePlan(m, estimate.seed, estimate.context.system.domain)
    return aggregate(estimate.context, estimate.outcomes[:m], plan, estimate.eps_ladder, **kwargs)


def sweep_sizes(n: int) -> list[int]:
    sizes = sorted({max(1, n // 4), max(1, n // 2), n})
    return sizes


def estimate_observable_set(
    system: MapSystem,
    plan: SamplePlan,
    partition: GridPartition,
    metric: WeakStarMetric,
    params: PomegaParams,
    eps_ladder: Sequence[float] = DEFAULT_EPS_LADDER,
    *,
    phi_srb: float = DEFAULT_PHI_SRB,
    decay_ratio: float = DEFAULT_DECAY_RATIO,
    threads: Optional[int] = None,
    sweep: bool = True,
) -> ObservableSetEstimate:
    """Candidates for the observable set with basin fractions and SRB flags.

    When ``sweep`` is set and ``N >= 4`` the cardinality class is computed
    from the nested sub-plans ``N/4, N/2, N``.
    """
    if plan.domain != system.domain:
        raise ValueError("sample plan domain differs from the system domain")
    ctx = RunContext(system, partition, metric, params, threads)
    outcomes = run_samples(ctx, plan)
    est = aggregate(ctx, outcomes, plan, eps_ladder, phi_srb, decay_ratio)
    if sweep and len(sweep_sizes(plan.n)) >= 3:
        subs = [restrict(est, m, phi_srb=phi_srb, decay_ratio=decay_ratio)
                for m in sweep_sizes(plan.n)[:-1]] + [est]
        rep = cardinality_report(subs)
        est.cardinality_class = rep.cls
        est.sweep = list(zip(rep.sizes, rep.counts))
    return est


def coverage_of(candidates: Sequence[DiscreteMeasure], limits: Sequence[LimitSetEstimate],
                metric: WeakStarMetric, eps: float) -> float:
    """Fraction of limit estimates whose every representative is within ``eps`` of a candidate."""
    if not limits:
        return math.nan
    if not candidates:
        return 0.0
    cemb = np.stack([metric.embed(c) for c in candidates])
    hits = 0
    for lim in limits:
        ok = True
        for r in lim.representatives:
            d = np.abs(cemb - metric.embed(r)) @ metric.coefficients
            if d.min() >= eps:
                ok = False
                break
        hits += ok
    return hits / len(limits)


def minimality_check(estimate: ObservableSetEstimate, holdout: SamplePlan, eps: float,
                     candidates: Optional[Sequence[DiscreteMeasure]] = None,
                     outcomes: Optional[Sequence[SampleOutcome]] = None) -> float:
    """Holdout coverage of the candidate set at ``eps``.

    ``candidates`` overrides the estimate's own (for deletion experiments);
    ``outcomes`` reuses holdout results computed earlier with the same plan.
    """
    if holdout.seed == estimate.seed:
        raise ValueError("holdout plan must use a seed different from the estimation seed")
    if eps <= 0:
        raise ValueError("eps must be positive")
    ctx = estimate.context
    if ctx is None:
        raise ValueError("estimate carries no run context")
    if outcomes is None:
        outcomes = run_samples(ctx, holdout)
    if candidates is None:
        candidates = [c.representative for c in estimate.candidates]
    limits = [o.estimate for o in outcomes if o.ok]
    return coverage_of(candidates, limits, ctx.metric, eps)


@dataclass
class CardinalityReport:
    cls: str
    sizes: list[int]
    counts: list[int]
    nonconvergent: int
    violations: list[str]


def cardinality_report(estimates: Sequence[ObservableSetEstimate]) -> CardinalityReport:
    """Classify the candidate-count trend over increasing sample counts.

    Counts that grow at every step, or a positive-fraction set of samples with
    non-convergent averages (whose limit sets are then uncountable), give
    ``continuum-like``; otherwise the final count decides between ``single``
    and ``finite``. Violations of the finite-implies-SRB and isolated-implies-
    SRB consistency rules are listed, not raised.
    """
    if len(estimates) < 3:
        raise ValueError("need estimates at 3 or more sample counts")
    sizes = [e.n for e in estimates]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sample counts must be strictly increasing")
    first = estimates[0]
    for e in estimates[1:]:
        if (e.eps_ladder != first.eps_ladder or e.delta_cluster != first.delta_cluster
                or e.seed != first.seed):
            raise ValueError("estimates come from inconsistent configurations")
        if e.context is not None and first.context is not None and (
                e.context.system.name != first.context.system.name
                or e.context.partition != first.context.partition):
            raise ValueError("estimates come from inconsistent configurations")
    counts = [len(e.candidates) for e in estimates]
    last = estimates[-1]
    noncv = sum(1 for lim in last.limit_estimates if not lim.convergent)
    growing = all(b > a for a, b in zip(counts, counts[1:]))
    if growing or (last.n_successful and noncv / last.n_successful >= 2.0 / last.n_successful):
        cls = CLASS_CONTINUUM
    elif counts[-1] == 1:
        cls = CLASS_SINGLE
    else:
        cls = CLASS_FINITE
    violations = []
    for k, c in enumerate(last.candidates):
        if cls == CLASS_FINITE and not c.srb:
            violations.append(f"candidate {k}: finite class but srb = false")
        if c.isolated and not c.srb:
            violations.append(f"candidate {k}: isolated but srb = false")
    return CardinalityReport(cls, sizes, counts, noncv, violations)
