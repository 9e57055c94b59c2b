"""Poincare disk model: Mobius isometries, Poisson-kernel Busemann cocycle,
the visual stream and orbit balls of Fuchsian group presets.

Disk isometries are stored as pairs ``(a, b)`` with ``|a|^2 - |b|^2 = 1``
acting by ``z -> (a z + b) / (conj(b) z + conj(a))``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InvalidPresetError, NumericDegeneracyError, UnsupportedBoundaryPointError
from .hyperbolic import OrbitProfile

__all__ = [
    "MobiusMap",
    "hyp_distance",
    "poisson_kernel",
    "busemann_poisson",
    "visual_density",
    "ray_distance",
    "DiskModel",
    "GroupPreset",
    "preset",
    "OrbitBall",
    "orbit_ball",
    "DiskOrbit",
]

DEGENERACY = 1e-14
# beyond this |a|^2 the determinant |a|^2 - |b|^2 is lost to rounding
RESOLVABLE = 1e8


@dataclass(frozen=True)
class MobiusMap:
    a: complex = 1.0
    b: complex = 0.0

    def __post_init__(self):
        a, b = complex(self.a), complex(self.b)
        if abs(a) ** 2 >= RESOLVABLE:
            # |a|^2 - |b|^2 cancels catastrophically; keep the entries
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
            return
        det = abs(a) ** 2 - abs(b) ** 2
        if det <= 0:
            raise NumericDegeneracyError(f"|a|^2 - |b|^2 = {det} is not positive")
        s = math.sqrt(det)
        object.__setattr__(self, "a", a / s)
        object.__setattr__(self, "b", b / s)

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0)

    @classmethod
    def from_sl2(cls, m):
        """Convert a complex 2x2 matrix preserving the unit disk."""
        m = np.asarray(m, dtype=complex)
        return cls._from_unimodular(m / np.sqrt(np.linalg.det(m)))

    @classmethod
    def _from_unimodular(cls, m):
        alpha, beta, gamma, delta = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
        lam = np.sqrt(alpha / np.conj(delta))
        a, b, c = alpha / lam, beta / lam, gamma / lam
        if abs(c - np.conj(b)) > 1e-8 * max(1.0, abs(a)):
            raise InvalidPresetError("matrix does not preserve the unit disk")
        return cls(complex(a), complex(b))

    @classmethod
    def hyperbolic(cls, repelling, attracting, length):
        """Translation by ``length`` along the geodesic from ``repelling`` to
        ``attracting`` (both on the unit circle)."""
        p, q = complex(repelling), complex(attracting)
        if abs(p - q) < 1e-12:
            raise InvalidPresetError("axis endpoints coincide")
        # conj^-1 diag(e, f) conj with conj = [[1, -q], [1, -p]], written
        # out so the determinant is 1 without a cancelling numeric det
        e, f = math.exp(-length / 2), math.exp(length / 2)
        m = np.array([[q * f - p * e, p * q * (e - f)], [f - e, q * e - p * f]], dtype=complex) / (q - p)
        return cls._from_unimodular(m)

    @property
    def matrix(self):
        a, b = self.a, self.b
        return np.array([[a, b], [b.conjugate(), a.conjugate()]])

    def __call__(self, z):
        return mobius_apply(self, z)

    def __matmul__(self, other):
        a1, b1, a2, b2 = self.a, self.b, other.a, other.b
        return MobiusMap(a1 * a2 + b1 * b2.conjugate(), a1 * b2 + b1 * a2.conjugate())

    def inverse(self):
        return MobiusMap(self.a.conjugate(), -self.b)

    @property
    def origin_image(self):
        return self.b / self.a.conjugate()

    @property
    def displacement(self):
        """``d(0, g(0))`` via ``cosh d = |a|^2 + |b|^2``."""
        return math.acosh(max(1.0, abs(self.a) ** 2 + abs(self.b) ** 2))

    def isometric_circle(self):
        """Center and radius of ``{|conj(b) z + conj(a)| = 1}``."""
        if abs(self.b) < 1e-15:
            raise InvalidPresetError("rotations have no isometric circle")
        return -self.a.conjugate() / self.b.conjugate(), 1 / abs(self.b)


def mobius_apply(g, z):
    """Apply ``g`` to a point or array of points in the closed disk."""
    a, b = g.a, g.b
    z = np.asarray(z, dtype=complex) if not isinstance(z, (complex, float, int)) else complex(z)
    den = b.conjugate() * z + a.conjugate()
    if np.any(np.abs(den) < DEGENERACY):
        raise NumericDegeneracyError("Mobius denominator vanishes")
    return (a * z + b) / den


def hyp_distance(x, y):
    """Hyperbolic distance in the Poincare disk (curvature -1)."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    num = 2 * np.abs(x - y) ** 2
    den = (1 - np.abs(x) ** 2) * (1 - np.abs(y) ** 2)
    out = np.arccosh(1 + num / den)
    return float(out) if out.ndim == 0 else out


def poisson_kernel(z, xi):
    """``P(z, xi) = (1 - |z|^2) / |z - xi|^2``."""
    z = np.asarray(z, dtype=complex)
    dist = np.abs(z - xi)
    if np.any(dist < 1e-12):
        raise NumericDegeneracyError("point too close to the boundary point")
    out = (1 - np.abs(z) ** 2) / dist**2
    return float(out) if out.ndim == 0 else out


def busemann_poisson(xi, x, y):
    """Exact disk Busemann cocycle ``log P(x, xi) - log P(y, xi)``."""
    return float(np.log(poisson_kernel(x, xi)) - np.log(poisson_kernel(y, xi)))


def visual_density(g, xi):
    """``d g.lambda / d lambda (xi)`` for normalized arc length lambda.

    Evaluated as ``P(g(0), xi) = 1 / |conj(a) xi - b|^2``, which stays
    accurate for orbit points close to the circle.
    """
    den = abs(g.a.conjugate() * xi - g.b) ** 2
    if den < DEGENERACY:
        raise NumericDegeneracyError("boundary point too close to g(0)")
    return 1.0 / den


def ray_distance(z, xi):
    """Distance from ``z`` to the geodesic ray from 0 towards ``xi``."""
    w = np.asarray(z, dtype=complex) * np.conj(xi) / abs(xi)
    r2 = np.abs(w) ** 2
    to_line = np.arcsinh(2 * np.abs(w.imag) / (1 - r2))
    to_origin = 2 * np.arctanh(np.sqrt(r2))
    out = np.where(w.real >= 0, to_line, to_origin)
    return float(out) if out.ndim == 0 else out


def _unit(xi):
    xi = complex(xi)
    if abs(xi) == 0:
        raise NumericDegeneracyError("boundary point must be nonzero")
    return xi / abs(xi)


def _circle_point(xi, tol=1e-9):
    """Validate a boundary point of the disk model."""
    try:
        xi = complex(xi)
    except (TypeError, ValueError):
        raise UnsupportedBoundaryPointError(f"{xi!r} is not a point of the unit circle") from None
    if not math.isfinite(abs(xi)) or abs(abs(xi) - 1) > tol:
        raise UnsupportedBoundaryPointError(f"{xi!r} is not on the unit circle")
    return xi / abs(xi)


class DiskModel:
    """The Poincare disk as a space model; boundary points are complex
    numbers of modulus one."""

    basepoint = 0j
    delta = math.log(2)  # ideal quadrilaterals realize log 2
    defect = 0
    exact = False
    # 1 - exp(-n) stays distinguishable from 1 well past this
    max_approach = 30

    def distance(self, x, y):
        return hyp_distance(x, y)

    def boundary_approach(self, xi, n):
        return (1 - math.exp(-n)) * _circle_point(xi)

    def exact_busemann(self, xi, x, y):
        return busemann_poisson(_circle_point(xi), x, y)

    def act(self, g, z):
        return complex(mobius_apply(g, z))

    def orbit_busemann(self, g, xi):
        """``beta_xi(g 0, 0)`` from the matrix of ``g``.

        The point ``g(0)`` alone cannot resolve ``1 - |g(0)|^2`` once the
        displacement passes about 16; here that factor is ``1/|a|^2``.
        """
        xi = _circle_point(xi)
        gap = abs(g.origin_image - xi)
        if gap < DEGENERACY:
            raise NumericDegeneracyError("boundary point too close to g(0)")
        return -2 * math.log(abs(g.a)) - 2 * math.log(gap)

    def act_boundary(self, g, xi):
        return _unit(mobius_apply(g, _unit(xi)))

    def ray_distance(self, xi, z):
        return ray_distance(z, _unit(xi))


# -- presets ---------------------------------------------------------------


@dataclass
class GroupPreset:
    name: str
    params: dict
    generators: list
    # "word": free group, elements keyed by reduced words (no dedup needed)
    # "sl2z": integer matrices in the upper half plane
    # "float": rounded matrix entries
    key_kind: str = "float"
    integer_generators: list = field(default_factory=list)


def _sl2z_to_disk(p, q, r, s):
    """Conjugate an SL(2,R) matrix by the Cayley map ``z -> (z-i)/(z+i)``."""
    return ((p + s) + 1j * (q - r)) / 2, ((p - s) - 1j * (q + r)) / 2


def _schottky(params):
    axes = params.get("axes", [[math.pi, 0.0], [-math.pi / 2, math.pi / 2]])
    lengths = params.get("lengths", [8.0, 8.0])
    if len(axes) != len(lengths) or not axes:
        raise InvalidPresetError("schottky needs one translation length per axis")
    gens = [
        MobiusMap.hyperbolic(cmath.exp(1j * p), cmath.exp(1j * q), float(ell))
        for (p, q), ell in zip(axes, lengths)
    ]
    circles = []
    for g in gens:
        circles.append(g.isometric_circle())
        circles.append(g.inverse().isometric_circle())
    for i in range(len(circles)):
        for j in range(i + 1, len(circles)):
            (c1, r1), (c2, r2) = circles[i], circles[j]
            if abs(c1 - c2) <= r1 + r2:
                raise InvalidPresetError(
                    f"isometric circles {i} and {j} overlap; ping-pong check failed"
                )
    return gens


def preset(name, params=None):
    """Build a named group preset (``lattice-psl2z`` or ``schottky``)."""
    params = dict(params or {})
    if name == "lattice-psl2z":
        ints = [(0, -1, 1, 0), (1, 1, 0, 1)]  # S, T
        gens = [MobiusMap(*_sl2z_to_disk(*m)) for m in ints]
        return GroupPreset(name, params, gens, key_kind="sl2z", integer_generators=ints)
    if name == "schottky":
        return GroupPreset(name, params, _schottky(params), key_kind="word")
    raise InvalidPresetError(f"unknown preset {name!r}")


# -- orbit balls -----------------------------------------------------------


@dataclass
class OrbitBall:
    """Group elements ``g`` with ``d(0, g(0)) <= radius``, sorted by
    displacement; ``a`` and ``b`` hold the matrix entries."""

    radius: float
    a: np.ndarray
    b: np.ndarray
    displacement: np.ndarray

    def __len__(self):
        return len(self.a)

    def __iter__(self):
        for a, b in zip(self.a, self.b):
            yield MobiusMap(complex(a), complex(b))

    @property
    def points(self):
        return self.b / np.conj(self.a)

    def restrict(self, radius):
        n = int(np.searchsorted(self.displacement, radius, side="right"))
        return OrbitBall(radius, self.a[:n], self.b[:n], self.displacement[:n])

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a_re", "a_im", "b_re", "b_im", "displacement"])
            for a, b, d in zip(self.a, self.b, self.displacement):
                w.writerow([repr(a.real), repr(a.imag), repr(b.real), repr(b.imag), repr(d)])


def _canonical_sl2z(m):
    flip = (m[:, 2] < 0) | ((m[:, 2] == 0) & (m[:, 3] < 0))
    m = m.copy()
    m[flip] *= -1
    return m


def orbit_ball(group, radius, cap=2_000_000, slack=None):
    """Breadth-first enumeration of the orbit ball of radius ``radius``.

    Elements are grown by multiplying with generators and their inverses;
    nodes with displacement up to ``radius + slack`` are expanded so that
    geodesic words dipping slightly outside the ball are not lost.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    gens = list(group.generators)
    moves = []
    for i, g in enumerate(gens):
        moves.append((2 * i, g))
        moves.append((2 * i + 1, g.inverse()))
    if slack is None:
        slack = 2 * max(g.displacement for g in gens) + 1.0
    limit = radius + slack
    inv_move = lambda j: j ^ 1  # noqa: E731

    if group.key_kind == "sl2z":
        ints = []
        for p, q, r, s in group.integer_generators:
            ints += [(p, q, r, s), (s, -q, -r, p)]
        int_moves = np.array(ints, dtype=np.int64)

    fa = np.array([1.0 + 0j])
    fb = np.array([0.0 + 0j])
    flast = np.array([-1])
    fkey = np.array([[1, 0, 0, 1]], dtype=np.int64) if group.key_kind == "sl2z" else None
    seen = set()
    recent = layer_packed = np.zeros(0, dtype=np.int64)
    if group.key_kind == "sl2z":
        recent = layer_packed = _pack(_canonical_sl2z(fkey))
    elif group.key_kind == "float":
        seen.add(_float_key(1.0 + 0j, 0j))
    out_a, out_b, out_d = [fa], [fb], [np.zeros(1)]
    total = 1

    while len(fa):
        new_a, new_b, new_last, new_key = [], [], [], []
        for j, g in moves:
            mask = flast != inv_move(j)
            if not mask.any():
                continue
            a1, b1 = fa[mask], fb[mask]
            # right multiplication by the generator
            na = a1 * g.a + b1 * np.conj(g.b)
            nb = a1 * g.b + b1 * np.conj(g.a)
            new_a.append(na)
            new_b.append(nb)
            new_last.append(np.full(len(na), j))
            if fkey is not None:
                k1 = fkey[mask]
                p, q, r, s = int_moves[j]
                new_key.append(
                    np.stack(
                        [
                            k1[:, 0] * p + k1[:, 1] * r,
                            k1[:, 0] * q + k1[:, 1] * s,
                            k1[:, 2] * p + k1[:, 3] * r,
                            k1[:, 2] * q + k1[:, 3] * s,
                        ],
                        axis=1,
                    )
                )
        if not new_a:
            break
        na = np.concatenate(new_a)
        nb = np.concatenate(new_b)
        nlast = np.concatenate(new_last)
        # renormalize to the unit-determinant class where the determinant
        # is numerically resolvable
        small = np.abs(na) ** 2 < RESOLVABLE
        scale = np.sqrt(np.abs(na[small]) ** 2 - np.abs(nb[small]) ** 2)
        na[small] /= scale
        nb[small] /= scale
        disp = np.arccosh(np.maximum(1.0, np.abs(na) ** 2 + np.abs(nb) ** 2))
        keep = disp <= limit
        na, nb, nlast, disp = na[keep], nb[keep], nlast[keep], disp[keep]
        nkey = None
        if fkey is not None:
            # exact entries: recompute the disk matrix from the integer one
            nkey = _canonical_sl2z(np.concatenate(new_key)[keep])
            p, q, r, s = (nkey[:, i].astype(float) for i in range(4))
            na, nb = _sl2z_to_disk(p, q, r, s)

        if group.key_kind == "word":
            fresh = np.ones(len(na), dtype=bool)
        elif nkey is not None:
            if len(nkey) and np.abs(nkey).max() >= 2**15:
                partial = _finish(radius, out_a, out_b, out_d)
                raise CapacityError("matrix entries exceed the packed key range", partial=partial)
            packed = _pack(nkey)
            _, first = np.unique(packed, return_index=True)
            fresh = np.zeros(len(na), dtype=bool)
            fresh[first] = True
            # BFS: neighbours of layer n lie in layers n-1, n or n+1
            fresh &= ~np.isin(packed, recent)
            recent = np.concatenate([layer_packed, packed[fresh]])
            layer_packed = packed[fresh]
        else:
            fresh = np.zeros(len(na), dtype=bool)
            for i in range(len(na)):
                key = _float_key(na[i], nb[i])
                if key not in seen:
                    seen.add(key)
                    fresh[i] = True
        na, nb, nlast, disp = na[fresh], nb[fresh], nlast[fresh], disp[fresh]
        if nkey is not None:
            nkey = nkey[fresh]

        inside = disp <= radius
        total += int(inside.sum())
        out_a.append(na[inside])
        out_b.append(nb[inside])
        out_d.append(disp[inside])
        if total > cap:
            partial = _finish(radius, out_a, out_b, out_d)
            raise CapacityError(f"orbit ball exceeds cap={cap}", partial=partial)
        fa, fb, flast, fkey = na, nb, nlast, nkey
    return _finish(radius, out_a, out_b, out_d)


def _pack(keys):
    off = 2**15
    k = keys + off
    return (k[:, 0] << 48) | (k[:, 1] << 32) | (k[:, 2] << 16) | k[:, 3]


def _float_key(a, b):
    # the action factors through the projective group: fix the sign of a
    if a.real < 0 or (a.real == 0 and a.imag < 0):
        a, b = -a, -b
    return tuple(int(round(v * 1e8)) for v in (a.real, a.imag, b.real, b.imag))


def _finish(radius, out_a, out_b, out_d):
    a = np.concatenate(out_a)
    b = np.concatenate(out_b)
    d = np.concatenate(out_d)
    order = np.argsort(d, kind="stable")
    return OrbitBall(radius, a[order], b[order], d[order])


class DiskOrbit:
    """Orbit of the origin under an enumerated orbit ball."""

    exact = False

    def __init__(self, ball):
        self.ball = ball
        self.model = DiskModel()
        self._points = ball.points

    def profile(self, xi, r_max):
        xi = _unit(xi)
        n = int(np.searchsorted(self.ball.displacement, r_max, side="right"))
        a, b = self.ball.a[:n], self.ball.b[:n]
        # P(g0, xi) = 1/|conj(a) xi - b|^2 and the ray distance, both
        # from matrix entries to avoid cancellation in 1 - |g0|^2
        log_p = -2 * np.log(np.abs(np.conj(a) * xi - b))
        w = a * b * np.conj(xi)
        tube = np.where(w.real >= 0, np.arcsinh(2 * np.abs(w.imag)), self.ball.displacement[:n])
        return OrbitProfile(
            displacement=self.ball.displacement[:n],
            beta_out=-log_p,
            beta_back=log_p,
            tube=tube,
            multiplicity=np.ones(n, dtype=np.int64),
            exact=False,
        )

    def exact_decision(self, xi):
        return None
