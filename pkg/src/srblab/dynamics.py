"""Registry of dynamical systems with a uniform step interface.

Every system exposes ``lift`` (domain point -> internal state), ``step``
(state -> state) and ``observe`` (state -> domain point). For the affine
systems all three are trivial; ``bowen_eye`` keeps its state in log
coordinates so that orbits can approach the heteroclinic cycle far below
double-precision resolution without collapsing onto a saddle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from . import _pykernels
from ._backend import kernels
from .errors import DomainError, OrbitDivergenceError, RegistryError
from .measure import DomainDescriptor

SYSTEM_NAMES = (
    "identity",
    "tripling",
    "cat",
    "contraction_half",
    "skew_cat",
    "bowen_eye",
    "affine_custom",
)

CAT_MATRIX = ((1.0, 1.0), (1.0, 2.0))


def _identity(x):
    return x


@dataclass(frozen=True)
class AffineKernel:
    matrix: np.ndarray
    offset: np.ndarray


@dataclass(frozen=True)
class BowenKernel:
    alpha: float
    beta: float
    dt: float
    substeps: int


@dataclass(frozen=True)
class OdeTimeMap:
    """Time-``h`` map of a vector field by fixed-step classical RK4."""

    vector_field: Callable[[np.ndarray], np.ndarray]
    dt: float
    h: float

    def __post_init__(self):
        if not (self.dt > 0 and self.h > 0):
            raise ValueError("dt and h must be positive")
        ratio = self.h / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ValueError(f"h = {self.h} is not a positive integer multiple of dt = {self.dt}")

    @property
    def substeps(self) -> int:
        return int(round(self.h / self.dt))

    def __call__(self, state):
        s = np.asarray(state, dtype=np.float64)
        f, dt = self.vector_field, self.dt
        for _ in range(self.substeps):
            k1 = f(s)
            k2 = f(s + 0.5 * dt * k1)
            k3 = f(s + 0.5 * dt * k2)
            k4 = f(s + dt * k3)
            s = s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return s


@dataclass(frozen=True)
class MapSystem:
    """A named map ``f: M -> M`` on a box or torus."""

    name: str
    domain: DomainDescriptor
    step: Callable[[Any], Any]
    parameters: Mapping[str, Any] = field(default_factory=dict)
    formula: str = ""
    lift: Callable[[np.ndarray], Any] = _identity
    observe: Callable[[Any], np.ndarray] = _identity
    kernel: Optional[object] = None
    metadata: Mapping[str, Any] = field(default_factory=dict)
    # restricts Lebesgue sampling to an invariant region (None = whole domain)
    region: Optional[Callable[[np.ndarray], bool]] = None

    def lift_point(self, point):
        p = self.domain.normalize(point)
        if self.region is not None and not self.region(p, closed=True):
            raise DomainError(f"{self.name}: point {p.tolist()} outside the invariant region")
        return self.lift(p)


def _affine_step(matrix, offset, domain):
    mat = [[float(v) for v in row] for row in np.asarray(matrix)]
    off = [float(v) for v in offset]
    lo = [a for a, _ in domain.bounds]
    length = [b - a for a, b in domain.bounds]
    per = list(domain.periodic)
    rows = range(len(off))

    def step(x):
        cur = [float(v) for v in x]
        out = np.empty(len(off))
        for i in rows:
            acc = 0.0
            row = mat[i]
            for k in rows:
                acc = acc + row[k] * cur[k]
            v = acc + off[i]
            if per[i] and math.isfinite(v):
                v = _pykernels._wrap(v, lo[i], length[i])
            out[i] = v
        return out

    return step


def _make_affine(name, matrix, offset, domain, parameters, formula):
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    offset = np.ascontiguousarray(offset, dtype=np.float64)
    d = domain.dimension
    if matrix.shape != (d, d) or offset.shape != (d,):
        raise ValueError(f"{name}: matrix must be {d}x{d} and offset length {d}")
    return MapSystem(
        name=name,
        domain=domain,
        step=_affine_step(matrix, offset, domain),
        parameters=dict(parameters),
        formula=formula,
        kernel=AffineKernel(matrix, offset),
    )


# --- heteroclinic cycle ("Bowen eye") -------------------------------------
#
# u+ = y - 1 + x**2 and u- = y + 1 - x**2 vanish on the upper and lower arcs
# of the eye |y| <= 1 - x**2, which meet at the saddles A = (-1, 0) and
# B = (1, 0). The field
#     F = a(x) u- J grad(u+) + b(x) u+ J grad(u-),  J(p, q) = (q, -p),
# with a = 1 + alpha x, b = 1 - beta x keeps both arcs invariant, and along
# orbits d/dt log|u+| = 4 x b, d/dt log|u-| = -4 x a. The flow is integrated
# in the state (x, log|u+|, log|u-|, sign u+, sign u-).

BOWEN_A = (-1.0, 0.0)
BOWEN_B = (1.0, 0.0)
BOWEN_C = (0.0, 0.0)


def bowen_vector_field(alpha: float, beta: float):
    """Planar field in ``(x, y)`` coordinates."""

    def field_xy(pt):
        x, y = float(pt[0]), float(pt[1])
        up = y - 1.0 + x * x
        um = y + 1.0 - x * x
        a = 1.0 + alpha * x
        b = 1.0 - beta * x
        return np.array([a * um + b * up, 2.0 * x * (b * up - a * um)])

    return field_xy


def bowen_saddle_data(alpha: float, beta: float) -> dict:
    a = lambda x: 1.0 + alpha * x  # noqa: E731
    b = lambda x: 1.0 - beta * x  # noqa: E731
    # eigenvalues from the linearization at each saddle
    lam_u_a, lam_s_a = 4.0 * a(-1.0), -4.0 * b(-1.0)
    lam_s_b, lam_u_b = -4.0 * a(1.0), 4.0 * b(1.0)
    c_a = abs(lam_s_a) / lam_u_a
    c_b = abs(lam_s_b) / lam_u_b
    return {
        "A": list(BOWEN_A),
        "B": list(BOWEN_B),
        "C": list(BOWEN_C),
        "eigenvalues_A": [lam_u_a, lam_s_a],
        "eigenvalues_B": [lam_u_b, lam_s_b],
        "ratio_A": c_a,
        "ratio_B": c_b,
        "ratio_product": c_a * c_b,
    }


def _in_eye(p, closed=False):
    x, y = float(p[0]), float(p[1])
    up = y - 1.0 + x * x
    um = y + 1.0 - x * x
    if closed:
        return abs(x) <= 1.0 and up <= 0.0 <= um
    return abs(x) < 1.0 and up < 0.0 < um


def _bowen_lift(p):
    x, y = float(p[0]), float(p[1])
    up = y - 1.0 + x * x
    um = y + 1.0 - x * x
    lp = math.log(-up) if up < 0 else -math.inf
    lq = math.log(um) if um > 0 else -math.inf
    return np.array([x, lp, lq, -1.0, 1.0])


def _bowen_observe(s):
    return np.array([s[0], 0.5 * (s[3] * math.exp(s[1]) + s[4] * math.exp(s[2]))])


def _make_bowen(params):
    alpha = float(params.get("alpha", 0.5))
    beta = float(params.get("beta", 0.5))
    dt = float(params.get("dt", 1e-3))
    h = float(params.get("h", 0.5))
    if not (0.0 <= alpha < 1.0 and 0.0 <= beta < 1.0) or alpha + beta <= 0.0:
        raise ValueError("bowen_eye: need 0 <= alpha, beta < 1 and alpha + beta > 0")
    ode = OdeTimeMap(bowen_vector_field(alpha, beta), dt, h)
    n_sub = ode.substeps
    data = bowen_saddle_data(alpha, beta)
    if data["ratio_product"] <= 1.0:
        raise ValueError("bowen_eye: the cycle is not attracting (ratio product <= 1)")

    def step(s):
        x, p, q = _pykernels._bowen_rk4(
            float(s[0]), float(s[1]), float(s[2]), float(s[3]), float(s[4]),
            alpha, beta, dt, n_sub,
        )
        return np.array([x, p, q, s[3], s[4]])

    return MapSystem(
        name="bowen_eye",
        domain=DomainDescriptor.box([(-2.0, 2.0), (-2.0, 2.0)]),
        step=step,
        parameters={"alpha": alpha, "beta": beta, "dt": dt, "h": h},
        formula=(
            "time-h map of x' = a u- + b u+, y' = 2x (b u+ - a u-), "
            "u+ = y - 1 + x^2, u- = y + 1 - x^2, a = 1 + alpha x, b = 1 - beta x"
        ),
        lift=_bowen_lift,
        observe=_bowen_observe,
        kernel=BowenKernel(alpha, beta, dt, n_sub),
        metadata={**data, "ode": ode, "invariant_region": "closed eye |y| <= 1 - x^2"},
        region=_in_eye,
    )


def make_system(name: str, params: Optional[Mapping[str, Any]] = None) -> MapSystem:
    """Build one of the registered systems."""
    params = dict(params or {})
    if name == "identity":
        dim = int(params.pop("dimension", 2))
        if not 1 <= dim <= 3:
            raise ValueError("identity: dimension must be 1, 2 or 3")
        _reject_extra(name, params)
        return _make_affine(
            name, np.eye(dim), np.zeros(dim), DomainDescriptor.torus(dim),
            {"dimension": dim}, "x -> x",
        )
    if name == "tripling":
        factor = params.pop("factor", 3)
        _reject_extra(name, params)
        if int(factor) != factor or factor < 2:
            raise ValueError("tripling: factor must be an integer >= 2")
        factor = int(factor)
        return _make_affine(
            name, [[float(factor)]], [0.0], DomainDescriptor.torus(1),
            {"factor": factor}, f"x -> {factor} x mod 1",
        )
    if name == "cat":
        _reject_extra(name, params)
        return _make_affine(
            name, CAT_MATRIX, [0.0, 0.0], DomainDescriptor.torus(2),
            {}, "(x, y) -> (x + y, x + 2y) mod 1",
        )
    if name == "contraction_half":
        rate = float(params.pop("rate", 0.5))
        _reject_extra(name, params)
        if not 0.0 < rate < 1.0:
            raise ValueError("contraction_half: rate must lie in (0, 1)")
        return _make_affine(
            name, [[rate, 0.0], [0.0, 1.0]], [0.0, 0.0],
            DomainDescriptor.box([(0.0, 1.0), (0.0, 1.0)]),
            {"rate": rate}, f"(x, y) -> ({rate} x, y)",
        )
    if name == "skew_cat":
        _reject_extra(name, params)
        mat = np.zeros((3, 3))
        mat[0, 0] = 1.0
        mat[1:, 1:] = CAT_MATRIX
        return _make_affine(
            name, mat, np.zeros(3), DomainDescriptor.torus(3),
            {}, "(x, y, z) -> (x, y + z, y + 2z) mod 1",
        )
    if name == "bowen_eye":
        extra = set(params) - {"alpha", "beta", "dt", "h"}
        _reject_extra(name, {k: params[k] for k in extra})
        return _make_bowen(params)
    if name == "affine_custom":
        try:
            matrix = np.asarray(params.pop("matrix"), dtype=np.float64)
        except KeyError:
            raise ValueError("affine_custom: 'matrix' is required") from None
        matrix = np.atleast_2d(matrix)
        d = matrix.shape[0]
        offset = params.pop("offset", [0.0] * d)
        bounds = params.pop("bounds", [[0.0, 1.0]] * d)
        periodic = params.pop("periodic", [True] * d)
        _reject_extra(name, params)
        domain = DomainDescriptor(tuple(tuple(b) for b in bounds), tuple(periodic))
        return _make_affine(
            name, matrix, offset, domain,
            {"matrix": matrix.tolist(), "offset": list(offset), "bounds": bounds,
             "periodic": list(periodic)},
            "x -> M x + c (mod 1 on periodic axes)",
        )
    raise RegistryError(f"unknown system {name!r}; known: {', '.join(SYSTEM_NAMES)}")


def _reject_extra(name, params):
    if params:
        raise ValueError(f"{name}: unknown parameter(s) {sorted(params)}")


def iterate(system: MapSystem, x0, n: int, visitor: Optional[Callable[[int, np.ndarray], None]] = None):
    """Apply ``system.step`` ``n`` times starting from ``x0``.

    ``visitor(j, point)`` sees ``f^j(x0)`` for ``j = 0..n`` in order. Raises
    :class:`OrbitDivergenceError` carrying the failing step index.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    state = system.lift_point(x0)
    point = system.observe(state)
    if visitor is not None:
        visitor(0, point)
    for j in range(1, n + 1):
        state = system.step(state)
        point = np.asarray(system.observe(state), dtype=np.float64)
        if not np.all(np.isfinite(point)):
            raise OrbitDivergenceError(f"{system.name}: non-finite state at step {j}", j, point)
        try:
            point = system.domain.normalize(point)
        except DomainError as exc:
            raise OrbitDivergenceError(f"{system.name}: left the domain at step {j}", j, point) from exc
        if visitor is not None:
            visitor(j, point)
    return point


def iterate_many(system: MapSystem, points: np.ndarray, n: int, backend=None):
    """Vectorized ``n``-fold iteration of an affine system over many starts.

    Returns ``(final_points, violations)`` where ``violations`` counts visited
    points outside the domain after wrapping. Each row equals
    ``iterate(system, row, n)`` bit for bit.
    """
    if not isinstance(system.kernel, AffineKernel):
        raise TypeError("iterate_many needs an affine system")
    impl = backend or kernels
    dom = system.domain
    pts = np.array(points, dtype=np.float64, order="C", ndmin=2)
    if pts.shape[1] != dom.dimension:
        raise ValueError("points do not match the system dimension")
    bad = impl.affine_many(
        pts, system.kernel.matrix, system.kernel.offset,
        np.ascontiguousarray(dom.lo), np.ascontiguousarray(dom.length),
        np.ascontiguousarray(dom.periodic, dtype=np.uint8), int(n),
    )
    return pts, int(bad)


def run_orbit_counts(system: MapSystem, x0, partition, checkpoints: Sequence[int], burn_in: int = 0,
                     backend=None):
    """Visit counts per cell at each checkpoint along one orbit.

    Returns ``(counts, filled, fail_at)``: ``counts`` has shape
    ``(len(checkpoints), n_cells)``, ``filled`` is the number of rows reached
    before any divergence and ``fail_at`` the failing step (-1 if none).
    Divergence is reported, not raised; the caller inspects ``filled``.
    """
    impl = backend or kernels
    checks = np.ascontiguousarray(checkpoints, dtype=np.int64)
    counts = np.zeros((checks.size, partition.n_cells), dtype=np.int64)
    dom = partition.domain
    if dom != system.domain:
        raise ValueError("partition domain differs from the system domain")
    lo = np.ascontiguousarray(dom.lo)
    length = np.ascontiguousarray(dom.length)
    res = np.ascontiguousarray(partition.resolution, dtype=np.int64)
    state = np.ascontiguousarray(system.lift_point(x0), dtype=np.float64)
    kern = system.kernel
    if isinstance(kern, AffineKernel):
        per = np.ascontiguousarray(dom.periodic, dtype=np.uint8)
        final, status, fail_at = impl.affine_orbit(
            state, kern.matrix, kern.offset, lo, length, per, res, int(burn_in), checks, counts
        )
    elif isinstance(kern, BowenKernel):
        final, status, fail_at = impl.bowen_orbit(
            state, kern.alpha, kern.beta, kern.dt, kern.substeps, lo, length, res,
            int(burn_in), checks, counts
        )
    else:
        raise TypeError(f"{system.name} has no orbit kernel")
    if status != 0:
        filled = int(np.searchsorted(checks, fail_at - burn_in, side="right"))
        return counts, filled, fail_at
    return counts, checks.size, -1
