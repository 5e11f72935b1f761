from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srblab import _backend
from srblab.dynamics import (
    BOWEN_A,
    BOWEN_B,
    BOWEN_C,
    SYSTEM_NAMES,
    OdeTimeMap,
    bowen_saddle_data,
    bowen_vector_field,
    iterate,
    iterate_many,
    make_system,
    run_orbit_counts,
)
from srblab.errors import DomainError, OrbitDivergenceError, RegistryError
from srblab.measure import GridPartition


def cat_rational(p, n):
    x, y = p
    for _ in range(n):
        x, y = (x + y) % 1, (x + 2 * y) % 1
    return x, y


def test_registry_has_seven_systems():
    assert len(SYSTEM_NAMES) == 7
    for name in SYSTEM_NAMES:
        params = {"matrix": [[1.0]]} if name == "affine_custom" else {}
        assert make_system(name, params).name == name


def test_registry_errors():
    with pytest.raises(RegistryError):
        make_system("doubling")
    with pytest.raises(ValueError):
        make_system("contraction_half", {"rate": 1.5})
    with pytest.raises(ValueError):
        make_system("cat", {"speed": 2})
    with pytest.raises(ValueError):
        make_system("bowen_eye", {"dt": 0.3, "h": 0.5})


def test_cat_fixed_point():
    assert make_system("cat").step(np.array([0.0, 0.0])).tolist() == [0.0, 0.0]


def test_contraction_step():
    out = make_system("contraction_half").step(np.array([0.8, 0.3]))
    assert out.tolist() == [0.4, 0.3]


def test_tripling_one_third():
    assert make_system("tripling").step(np.array([1 / 3])).tolist() == [0.0]


def test_identity_iterate():
    s = make_system("identity")
    x0 = np.array([0.37, 0.91])
    assert np.array_equal(iterate(s, x0, 1000), x0)


def test_contraction_closed_form():
    s = make_system("contraction_half")
    assert iterate(s, [1.0, 0.5], 10).tolist() == [2.0 ** -10, 0.5]


def test_cat_rational_oracle():
    """[DERIVED] exact rational arithmetic on (1/10, 2/10), three steps."""
    exact = cat_rational((Fraction(1, 10), Fraction(2, 10)), 3)
    assert exact == (Fraction(1, 10), Fraction(2, 5))
    got = iterate(make_system("cat"), [0.1, 0.2], 3)
    assert got == pytest.approx([float(v) for v in exact], abs=1e-15)


def test_visitor_sees_every_point():
    seen = []
    iterate(make_system("contraction_half"), [1.0, 0.25], 4, visitor=lambda j, p: seen.append((j, p[0])))
    assert seen == [(0, 1.0), (1, 0.5), (2, 0.25), (3, 0.125), (4, 0.0625)]


def test_divergence_carries_index():
    s = make_system("affine_custom", {"matrix": [[2.0]], "bounds": [[0.0, 1.0]],
                                      "periodic": [False]})
    with pytest.raises(OrbitDivergenceError) as info:
        iterate(s, [0.3], 10)
    assert info.value.index == 2  # 0.3 -> 0.6 -> 1.2


def test_divergence_nonfinite():
    s = make_system("affine_custom", {"matrix": [[1e10]], "bounds": [[-1e308, 1e308]],
                                      "periodic": [False]})
    with pytest.raises(OrbitDivergenceError) as info:
        iterate(s, [1e280], 5)
    assert info.value.index == 3


def test_determinism():
    s = make_system("cat")
    a = [], []
    for out in a:
        iterate(s, [0.123, 0.456], 500, visitor=lambda j, p, out=out: out.append(p.copy()))
    assert all(np.array_equal(p, q) for p, q in zip(*a))


def test_iterate_many_matches_scalar():
    s = make_system("skew_cat")
    pts = np.random.default_rng(2).random((50, 3))
    out, bad = iterate_many(s, pts, 200)
    assert bad == 0
    for row, start in zip(out, pts):
        assert np.array_equal(row, iterate(s, start, 200))


def test_iterate_many_backends_agree():
    s = make_system("cat")
    pts = np.random.default_rng(4).random((300, 2))
    a, ba = iterate_many(s, pts, 100, backend=_backend._pykernels)
    if _backend._ckernels is not None:
        b, bb = iterate_many(s, pts, 100, backend=_backend._ckernels)
        assert np.array_equal(a, b) and ba == bb


def test_iterate_many_counts_escapes():
    s = make_system("affine_custom", {"matrix": [[2.0]], "bounds": [[0.0, 1.0]],
                                      "periodic": [False]})
    _, bad = iterate_many(s, np.array([[0.3], [0.1]]), 3)
    assert bad == 2  # 0.3 -> 0.6, 1.2, 2.4 ; 0.1 stays inside
    # pure fallback matches
    _, bad_py = iterate_many(s, np.array([[0.3], [0.1]]), 3, backend=_backend._pykernels)
    assert bad_py == 2


@pytest.mark.slow
def test_domain_closure_million_starts():
    s = make_system("cat")
    pts = np.random.default_rng(7).random((1_000_000, 2))
    _, bad = iterate_many(s, pts, 1000)
    assert bad == 0


@pytest.mark.parametrize("name", ["tripling", "contraction_half", "skew_cat", "identity"])
def test_domain_closure_other_maps(name):
    s = make_system(name)
    d = s.domain.dimension
    pts = np.random.default_rng(8).random((20_000, d))
    _, bad = iterate_many(s, pts, 1000)
    assert bad == 0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_contraction_invariant(x, y):
    s = make_system("contraction_half")
    xs = []
    iterate(s, [x, y], 60, visitor=lambda j, p: (xs.append(p[0]), p[1] == y or pytest.fail()))
    assert all(b <= a for a, b in zip(xs, xs[1:]))
    assert xs[-1] <= 2.0 ** -60


# --- Bowen eye ------------------------------------------------------------

def test_bowen_saddles_fixed():
    s = make_system("bowen_eye")
    for p in (BOWEN_A, BOWEN_B):
        q = s.observe(s.step(s.lift_point(p)))
        assert np.max(np.abs(q - np.asarray(p))) <= 1e-8


def numeric_jacobian(f, p, h=1e-6):
    p = np.asarray(p, dtype=float)
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        cols.append((np.asarray(f(p + e)) - np.asarray(f(p - e))) / (2 * h))
    return np.array(cols).T


def test_bowen_eigenvalues_match_metadata():
    data = bowen_saddle_data(0.5, 0.5)
    field = bowen_vector_field(0.5, 0.5)
    for key, p in (("A", BOWEN_A), ("B", BOWEN_B)):
        ev = np.sort(np.linalg.eigvals(numeric_jacobian(field, p)).real)
        assert ev == pytest.approx(
            sorted(data[f"eigenvalues_{key}"]), abs=1e-6)
    assert data["ratio_A"] == pytest.approx(3.0)
    assert data["ratio_B"] == pytest.approx(3.0)
    assert data["ratio_product"] > 1.0
    # C repels
    ev = np.linalg.eigvals(numeric_jacobian(field, BOWEN_C))
    assert np.all(ev.real > 0)


def test_bowen_heteroclinic_arcs_invariant():
    """The arc y = 1 - x^2 is a trajectory: the field is tangent to it."""
    field = bowen_vector_field(0.5, 0.5)
    for x in np.linspace(-0.9, 0.9, 7):
        vx, vy = field([x, 1 - x * x])
        assert vy == pytest.approx(-2 * x * vx, abs=1e-12)


def test_bowen_log_coordinates_match_plain_rk4():
    s = make_system("bowen_eye", {"dt": 1e-3, "h": 0.5})
    ode = s.metadata["ode"]
    assert isinstance(ode, OdeTimeMap) and ode.substeps == 500
    p = np.array([0.3, 0.2])
    state = s.lift_point(p)
    xy = p.copy()
    for _ in range(4):
        state = s.step(state)
        xy = ode(xy)
    assert np.max(np.abs(s.observe(state) - xy)) <= 1e-8


def test_bowen_lift_outside_eye():
    s = make_system("bowen_eye")
    with pytest.raises(DomainError):
        s.lift_point([1.5, 0.0])
    with pytest.raises(DomainError):
        s.lift_point([0.0, 1.5])


def test_ode_time_map_validates():
    with pytest.raises(ValueError):
        OdeTimeMap(lambda p: p, 0.3, 0.5)
    with pytest.raises(ValueError):
        OdeTimeMap(lambda p: p, -1.0, 0.5)


@pytest.mark.parametrize("name,x0,params", [
    ("cat", (0.1234, 0.5678), {}),
    ("skew_cat", (0.3, 0.1, 0.7), {}),
    ("tripling", (0.271828,), {}),
    ("bowen_eye", (0.3, 0.2), {"dt": 0.01}),
])
def test_backends_bit_identical(name, x0, params):
    if _backend._ckernels is None:
        pytest.skip("compiled backend not built")
    s = make_system(name, params)
    part = GridPartition(s.domain, (8,) * s.domain.dimension)
    checks = [10, 100, 1000]
    a = run_orbit_counts(s, x0, part, checks, burn_in=7, backend=_backend._ckernels)
    b = run_orbit_counts(s, x0, part, checks, burn_in=7, backend=_backend._pykernels)
    assert np.array_equal(a[0], b[0]) and a[1:] == b[1:]


def test_kernel_matches_python_step():
    s = make_system("bowen_eye", {"dt": 0.01})
    part = GridPartition(s.domain, (25, 25))
    x0 = (0.3, 0.2)
    counts, filled, _ = run_orbit_counts(s, x0, part, [200])
    state = s.lift_point(x0)
    manual = np.zeros(part.n_cells, dtype=np.int64)
    for _ in range(200):
        manual[part.cell_of(s.observe(state))] += 1
        state = s.step(state)
    assert filled == 1 and np.array_equal(counts[0], manual)
