"""Grid-discretized probability measures and the series weak* metric.

A :class:`DiscreteMeasure` puts nonnegative mass on the cells of a
:class:`GridPartition` of an axis-aligned box or torus. Integrals of test
functions are evaluated at cell centers, and the distance between two
measures is

    dist(mu, nu) = sum_{i=1..I} 2**-i * |int g_i dmu - int g_i dnu|

over the enumerated family of :class:`TestFunctionFamily`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, IncompatibleError

DEFAULT_TRUNCATION = 24
WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class DomainDescriptor:
    """Axis-aligned box; periodic axes are identified end to end."""

    bounds: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        periodic = tuple(bool(p) for p in self.periodic)
        if not bounds:
            raise ValueError("domain needs at least one axis")
        if len(bounds) != len(periodic):
            raise ValueError("bounds and periodic flags differ in length")
        for k, (a, b) in enumerate(bounds):
            if not a < b:
                raise ValueError(f"axis {k}: lower bound {a} must be below upper bound {b}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "periodic", periodic)

    @classmethod
    def torus(cls, dimension: int) -> "DomainDescriptor":
        return cls(((0.0, 1.0),) * dimension, (True,) * dimension)

    @classmethod
    def box(cls, bounds: Sequence[tuple[float, float]]) -> "DomainDescriptor":
        return cls(tuple(bounds), (False,) * len(bounds))

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    @property
    def lo(self) -> np.ndarray:
        return np.array([a for a, _ in self.bounds])

    @property
    def length(self) -> np.ndarray:
        return np.array([b - a for a, b in self.bounds])

    def normalize(self, point) -> np.ndarray:
        """Wrap periodic coordinates and check the others lie in ``[a, b]``."""
        p = np.asarray(point, dtype=np.float64).reshape(-1)
        if p.shape[0] != self.dimension:
            raise DomainError(f"point has {p.shape[0]} coordinates, domain has {self.dimension}")
        out = p.copy()
        for k, ((a, b), per) in enumerate(zip(self.bounds, self.periodic)):
            x = float(p[k])
            if not math.isfinite(x):
                raise DomainError(f"coordinate {k} is not finite: {x}")
            if per:
                length = b - a
                t = x - a
                t = t - length * math.floor(t / length)
                if t >= length:
                    t = t - length
                out[k] = a + t
            elif x < a or x > b:
                raise DomainError(f"coordinate {k} = {x} outside [{a}, {b}]")
        return out

    def project(self, axes: Sequence[int]) -> "DomainDescriptor":
        return DomainDescriptor(
            tuple(self.bounds[k] for k in axes), tuple(self.periodic[k] for k in axes)
        )

    def to_dict(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds], "periodic": list(self.periodic)}


@dataclass(frozen=True)
class GridPartition:
    """Uniform grid of half-open, lower-closed cells, flattened in C order."""

    domain: DomainDescriptor
    resolution: tuple[int, ...]
    _centers: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        res = tuple(int(r) for r in self.resolution)
        if len(res) != self.domain.dimension:
            raise ValueError("resolution must give one cell count per axis")
        if any(r < 1 for r in res):
            raise ValueError("resolution entries must be positive")
        object.__setattr__(self, "resolution", res)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def widths(self) -> np.ndarray:
        return self.domain.length / np.array(self.resolution, dtype=np.float64)

    def cell_of(self, point) -> int:
        """Flat index of the cell containing ``point``."""
        p = self.domain.normalize(point)
        flat = 0
        for k, ((a, b), r) in enumerate(zip(self.domain.bounds, self.resolution)):
            i = int(math.floor((p[k] - a) * r / (b - a)))
            # the closed upper face of a non-periodic axis belongs to the last cell
            i = min(max(i, 0), r - 1)
            flat = flat * r + i
        return flat

    def cells_of(self, points: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`cell_of` for already-normalized points, shape (n, d)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        res = np.array(self.resolution)
        idx = np.floor((pts - self.domain.lo) * res / self.domain.length).astype(np.int64)
        idx = np.clip(idx, 0, res - 1)
        return np.ravel_multi_index(tuple(idx.T), self.resolution)

    def centers(self) -> np.ndarray:
        """Cell centers, shape (n_cells, d), in flat-index order."""
        if "c" not in self._centers:
            axes = [
                a + (np.arange(r) + 0.5) * (b - a) / r
                for (a, b), r in zip(self.domain.bounds, self.resolution)
            ]
            mesh = np.meshgrid(*axes, indexing="ij")
            self._centers["c"] = np.stack([m.reshape(-1) for m in mesh], axis=1)
        return self._centers["c"]

    def center_of(self, cell: int) -> np.ndarray:
        return self.centers()[cell]

    def project(self, axes: Sequence[int]) -> "GridPartition":
        return GridPartition(self.domain.project(axes), tuple(self.resolution[k] for k in axes))

    def to_dict(self) -> dict:
        d = self.domain.to_dict()
        d["resolution"] = list(self.resolution)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "GridPartition":
        return cls(
            DomainDescriptor(tuple(tuple(b) for b in data["bounds"]), tuple(data["periodic"])),
            tuple(data["resolution"]),
        )


class DiscreteMeasure:
    """Probability vector over the cells of a partition, stored sparsely.

    ``cells`` is sorted and duplicate free; ``weights`` are nonnegative and
    sum to one within ``WEIGHT_TOL``. Instances are treated as immutable.
    """

    __slots__ = ("partition", "cells", "weights", "_cache")

    def __init__(self, partition: GridPartition, cells, weights, *, renormalize=False):
        cells = np.asarray(cells, dtype=np.int64).reshape(-1)
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if cells.shape != weights.shape:
            raise ValueError("cells and weights differ in length")
        if cells.size == 0:
            raise ValueError("a probability measure needs at least one atom")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        if np.any(cells < 0) or np.any(cells >= partition.n_cells):
            raise ValueError("cell index out of range")
        order = np.argsort(cells, kind="stable")
        cells, weights = cells[order], weights[order]
        if np.any(np.diff(cells) == 0):
            raise ValueError("duplicate cell indices")
        total = float(weights.sum())
        if renormalize:
            if total <= 0:
                raise ValueError("cannot renormalize zero mass")
            weights = weights / total
        elif abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        cells.setflags(write=False)
        weights.setflags(write=False)
        self.partition = partition
        self.cells = cells
        self.weights = weights
        self._cache = {}

    @classmethod
    def from_dense(cls, partition: GridPartition, dense, *, renormalize=True) -> "DiscreteMeasure":
        dense = np.asarray(dense, dtype=np.float64).reshape(-1)
        if dense.shape[0] != partition.n_cells:
            raise ValueError("dense vector does not match the partition")
        nz = np.flatnonzero(dense)
        return cls(partition, nz, dense[nz], renormalize=renormalize)

    @classmethod
    def from_counts(cls, partition: GridPartition, counts) -> "DiscreteMeasure":
        counts = np.asarray(counts).reshape(-1)
        nz = np.flatnonzero(counts)
        n = counts[nz].sum()
        return cls(partition, nz, counts[nz] / n)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.partition.n_cells)
        out[self.cells] = self.weights
        return out

    def weight_of(self, cell: int) -> float:
        pos = np.searchsorted(self.cells, cell)
        if pos < self.cells.size and self.cells[pos] == cell:
            return float(self.weights[pos])
        return 0.0

    def atoms(self) -> list[tuple[int, float]]:
        return [(int(c), float(w)) for c, w in zip(self.cells, self.weights)]

    def __len__(self):
        return int(self.cells.size)

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.partition == other.partition
            and np.array_equal(self.cells, other.cells)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None

    def __repr__(self):
        return f"DiscreteMeasure(atoms={len(self)}, resolution={self.partition.resolution})"

    def to_dict(self) -> dict:
        return {"partition": self.partition.to_dict(), "cells": [[c, w] for c, w in self.atoms()]}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        partition = GridPartition.from_dict(data["partition"])
        cells = [int(c) for c, _ in data["cells"]]
        weights = [float(w) for _, w in data["cells"]]
        return cls(partition, cells, weights)


def _check_same_partition(measures: Iterable[DiscreteMeasure]) -> GridPartition:
    measures = list(measures)
    first = measures[0].partition
    for m in measures[1:]:
        if m.partition != first:
            raise IncompatibleError("measures live on different partitions")
    return first


def dirac(p, partition: GridPartition) -> DiscreteMeasure:
    """Unit mass on the cell that contains ``p``."""
    return DiscreteMeasure(partition, [partition.cell_of(p)], [1.0])


def uniform_measure(partition: GridPartition) -> DiscreteMeasure:
    n = partition.n_cells
    return DiscreteMeasure(partition, np.arange(n), np.full(n, 1.0 / n), renormalize=True)


def convex_combination(measures: Sequence[DiscreteMeasure], lambdas: Sequence[float]) -> DiscreteMeasure:
    if len(measures) == 0 or len(measures) != len(lambdas):
        raise ValueError("need one coefficient per measure")
    lam = np.asarray(lambdas, dtype=np.float64)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("coefficients must be nonnegative")
    if abs(float(lam.sum()) - 1.0) > WEIGHT_TOL:
        raise ValueError(f"coefficients sum to {float(lam.sum())!r}, not 1")
    partition = _check_same_partition(measures)
    cells = np.concatenate([m.cells for m in measures])
    weights = np.concatenate([l * m.weights for l, m in zip(lam, measures)])
    uniq, inverse = np.unique(cells, return_inverse=True)
    summed = np.zeros(uniq.size)
    np.add.at(summed, inverse, weights)
    keep = summed > 0
    if not np.any(keep):
        keep[:] = True
    return DiscreteMeasure(partition, uniq[keep], summed[keep], renormalize=True)


def marginal(mu: DiscreteMeasure, axes: Sequence[int]) -> DiscreteMeasure:
    """Push ``mu`` forward onto the listed axes (kept in ascending order)."""
    axes = sorted(set(int(a) for a in axes))
    d = mu.partition.domain.dimension
    if not axes:
        raise ValueError("marginal needs at least one axis")
    if axes[0] < 0 or axes[-1] >= d:
        raise ValueError(f"axes must lie in 0..{d - 1}")
    target = mu.partition.project(axes)
    multi = np.unravel_index(mu.cells, mu.partition.resolution)
    flat = np.ravel_multi_index(tuple(multi[k] for k in axes), target.resolution)
    uniq, inverse = np.unique(flat, return_inverse=True)
    summed = np.zeros(uniq.size)
    np.add.at(summed, inverse, mu.weights)
    return DiscreteMeasure(target, uniq, summed, renormalize=True)


def product_measure(factors: Sequence[DiscreteMeasure]) -> DiscreteMeasure:
    """Product of measures on consecutive axis groups."""
    dense = factors[0].dense()
    bounds, periodic, res = [], [], []
    for f in factors:
        bounds += f.partition.domain.bounds
        periodic += f.partition.domain.periodic
        res += f.partition.resolution
    for f in factors[1:]:
        dense = np.multiply.outer(dense, f.dense())
    partition = GridPartition(DomainDescriptor(tuple(bounds), tuple(periodic)), tuple(res))
    return DiscreteMeasure.from_dense(partition, dense.reshape(-1))


class TestFunctionFamily:
    """Enumerated trigonometric functions ``g_i : M -> [0, 1]``.

    With ``u_j = (x_j - a_j) / (b_j - a_j)`` and angle scale ``c_j = 2*pi`` on
    periodic axes, ``pi`` otherwise, term ``i`` is
    ``(1 + cos(sum_j c_j k_j u_j + phase)) / 2`` with phase in ``{0, pi/2}``.
    Index 1 is the constant 1/2. Frequency vectors are canonical (first
    nonzero entry positive) and ordered by max-norm, then by the number of
    nonzero entries, then in descending lexicographic order; the two phases
    of each vector are adjacent.
    """

    __test__ = False  # not a pytest class

    def __init__(self, domain: DomainDescriptor):
        self.domain = domain
        self._terms: list[tuple[tuple[int, ...], int]] = [((0,) * domain.dimension, 1)]
        self._shell = 0
        self._matrices: dict = {}

    def _grow(self, count: int) -> None:
        d = self.domain.dimension
        while len(self._terms) < count:
            self._shell += 1
            m = self._shell
            shell = []
            for k in itertools.product(range(-m, m + 1), repeat=d):
                if max(abs(v) for v in k) != m:
                    continue
                first = next(v for v in k if v != 0)
                if first < 0:
                    continue
                shell.append(k)
            shell.sort(key=lambda k: (sum(1 for v in k if v), tuple(-v for v in k)))
            for k in shell:
                self._terms.append((k, 0))
                self._terms.append((k, 1))

    def term(self, i: int) -> tuple[tuple[int, ...], float]:
        """Frequency vector and phase of the ``i``-th function (1-based)."""
        if i < 1:
            raise ValueError("test functions are indexed from 1")
        self._grow(i)
        k, sel = self._terms[i - 1]
        return k, (0.0 if sel == 0 else math.pi / 2)

    def lipschitz(self, i: int) -> float:
        k, _ = self.term(i)
        return math.pi * math.sqrt(sum(v * v for v in k)) / float(self.domain.length.min())

    def weight(self, i: int) -> float:
        return 2.0 ** -i

    def evaluate(self, i: int, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[1] != self.domain.dimension:
            raise IncompatibleError("points do not match the family's dimension")
        self._grow(i)
        k, sel = self._terms[i - 1]
        if not any(k):
            return np.full(pts.shape[0], 0.5)
        scale = np.array([2 * math.pi if p else math.pi for p in self.domain.periodic])
        u = (pts - self.domain.lo) / self.domain.length
        theta = u @ (scale * np.array(k, dtype=np.float64))
        if sel == 0:
            return 0.5 * (1.0 + np.cos(theta))
        return 0.5 * (1.0 - np.sin(theta))

    def matrix(self, partition: GridPartition, truncation: int) -> np.ndarray:
        """Values ``g_i(center_c)``, shape (truncation, n_cells); cached."""
        if partition.domain != self.domain:
            raise IncompatibleError("partition and family have different domains")
        key = (partition.resolution, truncation)
        if key not in self._matrices:
            centers = partition.centers()
            mat = np.stack([self.evaluate(i, centers) for i in range(1, truncation + 1)])
            mat.setflags(write=False)
            self._matrices[key] = mat
        return self._matrices[key]


_FAMILIES: dict = {}


def family_for(domain: DomainDescriptor) -> TestFunctionFamily:
    """Shared family instance per domain, so evaluation matrices are cached once."""
    fam = _FAMILIES.get(domain)
    if fam is None:
        fam = _FAMILIES[domain] = TestFunctionFamily(domain)
    return fam


def _check_family(mu: DiscreteMeasure, family: TestFunctionFamily) -> None:
    if mu.partition.domain != family.domain:
        raise IncompatibleError("measure and family have different domains")


def integrate(g_index: int, mu: DiscreteMeasure, family: TestFunctionFamily) -> float:
    """``sum_c w_c * g_i(center_c)``."""
    _check_family(mu, family)
    if not any(family.term(g_index)[0]):
        return 0.5  # total mass is 1; avoid rounding in the weight sum
    values = family.evaluate(g_index, mu.partition.centers()[mu.cells])
    return float(np.dot(mu.weights, values))


class WeakStarMetric:
    """Truncated series metric with cached per-measure integral vectors."""

    def __init__(self, family: TestFunctionFamily, truncation: int = DEFAULT_TRUNCATION):
        if truncation < 1:
            raise ValueError("truncation must be at least 1")
        self.family = family
        self.truncation = int(truncation)
        self.coefficients = 2.0 ** -np.arange(1, self.truncation + 1)

    def embed(self, mu: DiscreteMeasure) -> np.ndarray:
        """Vector of the first ``truncation`` integrals of ``mu``."""
        key = (id(self.family), self.truncation)
        cached = mu._cache.get(key)
        if cached is not None:
            return cached
        _check_family(mu, self.family)
        mat = self.family.matrix(mu.partition, self.truncation)
        vec = mat[:, mu.cells] @ mu.weights
        vec[0] = 0.5  # constant term, exact
        vec.setflags(write=False)
        mu._cache[key] = vec
        return vec

    def between(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(self.coefficients * np.abs(a - b)))

    def distance(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
        if mu.partition != nu.partition:
            raise IncompatibleError("measures live on different partitions")
        return self.between(self.embed(mu), self.embed(nu))

    def pairwise(self, embedded: np.ndarray) -> np.ndarray:
        """Distance matrix of stacked embeddings, shape (n, truncation)."""
        e = np.asarray(embedded)
        out = np.zeros((e.shape[0], e.shape[0]))
        for j in range(e.shape[0]):
            out[:, j] = np.abs(e - e[j]) @ self.coefficients
        return out

    def to_many(self, embedded: np.ndarray, target: np.ndarray) -> np.ndarray:
        return np.abs(np.asarray(embedded) - target) @ self.coefficients


def weak_star_distance(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    family: TestFunctionFamily,
    truncation: int = DEFAULT_TRUNCATION,
) -> float:
    """``sum_{i<=I} 2**-i |int g_i dmu - int g_i dnu|``; lies in ``[0, 1 - 2**-I]``."""
    return WeakStarMetric(family, truncation).distance(mu, nu)
