import cmath
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from horohopf import disk as dk
from horohopf.errors import CapacityError, InvalidPresetError, NumericDegeneracyError

angles = st.floats(0, 2 * math.pi)
circle = angles.map(lambda t: complex(math.cos(t), math.sin(t)))


def interior(max_r=0.95):
    return st.builds(lambda r, t: r * cmath.exp(1j * t), st.floats(0, max_r), angles)


maps = st.builds(
    lambda p, q, ell, rot: dk.MobiusMap.hyperbolic(cmath.exp(1j * p), cmath.exp(1j * (p + q)), ell)
    @ dk.MobiusMap(cmath.exp(0.5j * rot), 0),
    angles,
    st.floats(0.3, 2 * math.pi - 0.3),
    st.floats(0.01, 4.0),
    angles,
)


def _mp_distance(x, y):
    mpmath.mp.dps = 40
    x, y = mpmath.mpc(x), mpmath.mpc(y)
    return float(mpmath.acosh(1 + 2 * abs(x - y) ** 2 / ((1 - abs(x) ** 2) * (1 - abs(y) ** 2))))


# -- Mobius maps -----------------------------------------------------------------


def test_identity_map():
    e = dk.MobiusMap.identity()
    for z in (0j, 0.3 + 0.1j, -0.9j, 1 + 0j):
        assert dk.mobius_apply(e, z) == z


@given(maps)
def test_origin_image_formula(g):
    assert abs(dk.mobius_apply(g, 0j) - g.b / g.a.conjugate()) <= 1e-12


@given(maps, maps)
def test_composition_matches_matrix_product(g, h):
    rng = np.random.default_rng(0)
    z = np.sqrt(rng.random(1000)) * 0.99 * np.exp(2j * np.pi * rng.random(1000))
    gh = g @ h
    m = g.matrix @ h.matrix
    direct = (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])
    assert np.max(np.abs(dk.mobius_apply(gh, z) - direct)) <= 1e-10
    assert np.max(np.abs(dk.mobius_apply(gh, z) - dk.mobius_apply(g, dk.mobius_apply(h, z)))) <= 1e-10


@given(maps, interior(), circle)
def test_maps_preserve_disk_and_circle(g, z, xi):
    assert abs(dk.mobius_apply(g, z)) < 1
    assert abs(abs(dk.mobius_apply(g, xi)) - 1) <= 1e-12


def test_degenerate_denominator():
    g = dk.MobiusMap.hyperbolic(-1, 1, 1.0)
    pole = -g.a.conjugate() / g.b.conjugate()
    with pytest.raises(NumericDegeneracyError):
        dk.mobius_apply(g, pole)


def test_unit_determinant_after_many_compositions():
    rng = np.random.default_rng(5)
    g = dk.MobiusMap.identity()
    raw = np.eye(2, dtype=complex)
    for _ in range(10_000):
        step = dk.MobiusMap(cmath.exp(1j * rng.uniform(0, math.pi)), 0) @ dk.MobiusMap.hyperbolic(-1, 1, 0.01)
        g = g @ step
        raw = raw @ step.matrix
        assert abs(abs(g.a) ** 2 - abs(g.b) ** 2 - 1) <= 1e-12
    raw /= np.sqrt(np.linalg.det(raw))
    z = 0.3 - 0.2j
    direct = (raw[0, 0] * z + raw[0, 1]) / (raw[1, 0] * z + raw[1, 1])
    assert abs(dk.mobius_apply(g, z) - direct) <= 1e-8


# -- distance and Busemann -----------------------------------------------------------


def test_distance_examples():
    assert dk.hyp_distance(0j, 0j) == 0
    assert dk.hyp_distance(0j, 0.5 + 0j) == pytest.approx(math.log(3), abs=1e-12)


@given(interior(), interior())
def test_distance_symmetric_and_matches_high_precision(x, y):
    d = dk.hyp_distance(x, y)
    assert d == dk.hyp_distance(y, x)
    assert d == pytest.approx(_mp_distance(x, y), abs=1e-7)


@given(maps, interior(0.9), interior(0.9))
def test_distance_isometry_invariant(g, x, y):
    assert dk.hyp_distance(g(x), g(y)) == pytest.approx(dk.hyp_distance(x, y), abs=1e-9)


def test_busemann_examples():
    assert dk.busemann_poisson(1 + 0j, 0.3j, 0.3j) == 0
    assert dk.busemann_poisson(1 + 0j, 0j, 0.5 + 0j) == pytest.approx(-math.log(3), abs=1e-12)
    assert dk.busemann_poisson(-1 + 0j, 0j, 0.5 + 0j) == pytest.approx(math.log(3), abs=1e-12)


def test_busemann_degenerate():
    with pytest.raises(NumericDegeneracyError):
        dk.busemann_poisson(1 + 0j, 1 - 1e-13 + 0j, 0j)


@given(circle, interior(0.9), interior(0.9))
def test_busemann_finite_differences(xi, x, y):
    # z_n on the geodesic ray to xi with d(0, z_n) >= 20
    for n in (21, 25, 29):
        z = math.tanh(n / 2) * xi
        fd = dk.hyp_distance(y, z) - dk.hyp_distance(x, z)
        assert fd == pytest.approx(dk.busemann_poisson(xi, x, y), abs=1e-6)


@given(circle, interior(), interior(), interior())
def test_busemann_cocycle_and_lipschitz(xi, x, y, z):
    b = dk.busemann_poisson
    assert abs(b(xi, x, y) + b(xi, y, z) + b(xi, z, x)) <= 1e-9
    assert abs(b(xi, x, y)) <= dk.hyp_distance(x, y) + 1e-9


@given(maps, circle, interior(0.9), interior(0.9))
def test_busemann_isometry_invariant(g, xi, x, y):
    gxi = dk.mobius_apply(g, xi)
    gxi /= abs(gxi)
    assert dk.busemann_poisson(gxi, g(x), g(y)) == pytest.approx(dk.busemann_poisson(xi, x, y), abs=1e-9)


# -- visual density ----------------------------------------------------------------


def test_visual_density_identity():
    assert dk.visual_density(dk.MobiusMap.identity(), cmath.exp(0.7j)) == pytest.approx(1, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_visual_density_is_probability(seed):
    rng = np.random.default_rng(seed)
    g = dk.MobiusMap.hyperbolic(cmath.exp(1j * rng.uniform(0, 6)), cmath.exp(1j * rng.uniform(0, 6)), rng.uniform(0.1, 3))
    theta = np.linspace(0, 2 * np.pi, 40_000, endpoint=False)
    vals = [dk.visual_density(g, complex(np.cos(t), np.sin(t))) for t in theta]
    assert np.mean(vals) == pytest.approx(1, abs=1e-6)


@given(maps, circle)
def test_visual_density_conformal(g, xi):
    lhs = math.log(dk.visual_density(g, xi))
    assert lhs == pytest.approx(dk.busemann_poisson(xi, g(0j), 0j), abs=1e-9)


@given(maps, maps, circle)
def test_visual_density_composition(g, h, xi):
    # d(gh).lambda/d lambda (xi) = dg.lambda/d lambda (xi) * dh.lambda/d lambda (g^-1 xi)
    ginv_xi = dk.mobius_apply(g.inverse(), xi)
    lhs = dk.visual_density(g @ h, xi)
    rhs = dk.visual_density(g, xi) * dk.visual_density(h, ginv_xi)
    assert lhs == pytest.approx(rhs, rel=1e-8)


# -- presets ----------------------------------------------------------------------


def test_lattice_relations():
    s, t = dk.preset("lattice-psl2z").generators
    e = np.eye(2)
    for m in ((s @ s).matrix, (s @ t @ s @ t @ s @ t).matrix):
        assert min(np.abs(m - e).max(), np.abs(m + e).max()) <= 1e-10


def test_schottky_default_separated():
    sch = dk.preset("schottky")
    assert len(sch.generators) == 2
    circles = [g.isometric_circle() for g in sch.generators] + [g.inverse().isometric_circle() for g in sch.generators]
    for i in range(4):
        for j in range(i + 1, 4):
            (c1, r1), (c2, r2) = circles[i], circles[j]
            assert abs(c1 - c2) > r1 + r2


def test_schottky_nearly_equal_axes_rejected():
    with pytest.raises(InvalidPresetError):
        dk.preset("schottky", {"axes": [[math.pi, 0.0], [math.pi + 0.05, 0.05]], "lengths": [4, 4]})


def test_unknown_preset():
    with pytest.raises(InvalidPresetError):
        dk.preset("modular")


# -- orbit balls ---------------------------------------------------------------------


def _ball_keys(ball):
    keys = set()
    for a, b in zip(ball.a, ball.b):
        if a.real < 0 or (a.real == 0 and a.imag < 0):
            a, b = -a, -b
        keys.add(tuple(round(v, 6) for v in (a.real, a.imag, b.real, b.imag)))
    return keys


def test_ball_below_translation_length_is_identity():
    ball = dk.orbit_ball(dk.preset("schottky"), 7.5)
    assert len(ball) == 1 and ball.displacement[0] == 0


@pytest.mark.parametrize("L", range(1, 6))
def test_schottky_ball_matches_free_count(L):
    ell = 8
    n = len(dk.orbit_ball(dk.preset("schottky"), ell * L + ell / 2))
    free = 1 + 4 * (3**L - 1) // 2
    assert abs(n - free) <= 0.1 * free


def test_schottky_short_translation_drifts_from_free_count():
    # with length 4 the count leaves the +-10% band by L = 3 (see the README)
    sch = dk.preset("schottky", {"lengths": [4, 4]})
    n = len(dk.orbit_ball(sch, 14))
    assert n > 1.1 * (1 + 4 * (3**3 - 1) // 2)


def test_ball_dedup_idempotent(lattice_ball):
    again = dk.orbit_ball(dk.preset("lattice-psl2z"), 10)
    assert len(again) == len(lattice_ball)
    assert np.array_equal(again.displacement, lattice_ball.displacement)
    assert _ball_keys(again) == _ball_keys(lattice_ball)
    assert len(_ball_keys(lattice_ball)) == len(lattice_ball)


def test_ball_monotone(lattice_ball):
    small = dk.orbit_ball(dk.preset("lattice-psl2z"), 6)
    assert _ball_keys(small) <= _ball_keys(lattice_ball)
    assert len(lattice_ball.restrict(6)) == len(small)


def _psl2z_count(r):
    # integer matrices with ad - bc = 1 and a^2+b^2+c^2+d^2 = 2cosh d(i, gi) <= 2cosh r, modulo +-I
    bound = 2 * math.cosh(r) + 1e-9
    m = math.isqrt(int(bound)) + 1
    n = 0
    for a in range(-m, m + 1):
        for b in range(-m, m + 1):
            for c in range(-m, m + 1):
                s = a * a + b * b + c * c
                if s > bound:
                    continue
                for d in range(-m, m + 1):
                    if a * d - b * c == 1 and s + d * d <= bound:
                        n += 1
    return n // 2


@pytest.mark.parametrize("r", [3, 5, 7])
def test_lattice_ball_matches_integer_count(r):
    assert len(dk.orbit_ball(dk.preset("lattice-psl2z"), r)) == _psl2z_count(r)


def test_ball_contents_within_radius(schottky_ball):
    assert schottky_ball.displacement[0] == 0
    assert np.all(schottky_ball.displacement <= 48)
    assert np.all(np.diff(schottky_ball.displacement) >= 0)
    # oracle: every reduced word up to length 6 multiplied out at 50 digits
    mpmath.mp.dps = 50
    gens = []
    for g in dk.preset("schottky").generators:
        m = mpmath.matrix([[g.a, g.b], [mpmath.conj(g.b), mpmath.conj(g.a)]])
        gens += [m, mpmath.inverse(m)]
    layer = [(mpmath.eye(2), None)]
    dists = [0.0]
    for _ in range(6):
        nxt = []
        for m, last in layer:
            for j, h in enumerate(gens):
                if last is not None and j == last ^ 1:
                    continue
                p = m * h
                a2, b2 = abs(p[0, 0]) ** 2, abs(p[0, 1]) ** 2
                d = float(mpmath.acosh((a2 + b2) / (a2 - b2)))
                nxt.append((p, j))
                dists.append(d)
        layer = nxt
    # powers of one generator sit exactly on the radius; compare away from it
    ours = schottky_ball.displacement[schottky_ball.displacement < 48 - 1e-6]
    dists = np.sort([d for d in dists if d < 48 - 1e-6])
    assert len(dists) == len(ours)
    assert np.max(np.abs(dists - ours)) <= 1e-9


def test_capacity_error_partial():
    with pytest.raises(CapacityError) as info:
        dk.orbit_ball(dk.preset("lattice-psl2z"), 10, cap=500)
    partial = info.value.partial
    assert partial is not None and 0 < len(partial)
    assert np.all(partial.displacement <= 10)


def test_ball_csv(tmp_path):
    ball = dk.orbit_ball(dk.preset("schottky"), 20)
    path = tmp_path / "ball.csv"
    ball.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "a_re,a_im,b_re,b_im,displacement"
    assert len(lines) == len(ball) + 1


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        dk.orbit_ball(dk.preset("schottky"), 0)


@given(maps, circle)
def test_orbit_busemann_matches_point_formula(g, xi):
    model = dk.DiskModel()
    assert model.orbit_busemann(g, xi) == pytest.approx(dk.busemann_poisson(xi, g(0j), 0j), abs=1e-9)


@pytest.mark.parametrize("theta", [0.3, 1.7, 3.0, 5.5])
def test_orbit_busemann_deep(theta):
    # boost of length 40 along the real axis; g(0) = tanh(20) rounds to 1
    g = dk.MobiusMap.hyperbolic(-1, 1, 40.0)
    xi = cmath.exp(1j * theta)
    mpmath.mp.dps = 60
    r = mpmath.tanh(20)
    p = (1 - r**2) / (1 - 2 * r * mpmath.cos(theta) + r**2)
    assert dk.DiskModel().orbit_busemann(g, xi) == pytest.approx(float(mpmath.log(p)), abs=1e-9)
