"""Model-agnostic Gromov hyperbolic geometry.

A *space model* is any object exposing

``basepoint``
    the reference point o;
``distance(x, y)``
    the metric (exact integers for trees);
``boundary_approach(omega, n)``
    interior points z_n converging to the boundary point omega;
``exact_busemann(omega, x, y)``
    optional closed-form Busemann cocycle (``None`` when unavailable);
``delta``, ``defect``
    declared hyperbolicity constant and quasi-cocycle defect C;
``max_approach``
    optional: the largest resolvable ``n`` for ``boundary_approach``.

:class:`horohopf.freegroup.TreeModel` and :class:`horohopf.disk.DiskModel`
are the shipped implementations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral
from typing import Protocol, runtime_checkable

import numpy as np

__all__ = [
    "SpaceModel",
    "BusemannValue",
    "HoroballTest",
    "gromov_product",
    "delta_estimate",
    "busemann",
    "quasicocycle_defect",
    "horoball_member",
    "OrbitProfile",
]


@runtime_checkable
class SpaceModel(Protocol):
    basepoint: object
    delta: float
    defect: float

    def distance(self, x, y): ...

    def boundary_approach(self, omega, n): ...


@dataclass(frozen=True)
class BusemannValue:
    value: float
    exactness: str  # "exact" or "approximated"
    depth: int | None = None

    @property
    def exact(self):
        return self.exactness == "exact"

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class HoroballTest:
    member: bool
    beta: float
    boundary_case: bool = False

    def __bool__(self):
        return self.member


@dataclass
class OrbitProfile:
    """Per-class orbit statistics relative to a boundary point omega.

    Row ``i`` stands for ``multiplicity[i]`` group elements g sharing the
    displacement ``d(o, g o)``, ``beta_out = beta_omega(o, g o)``,
    ``beta_back = beta_omega(g o, o)`` and ``tube``, the distance from g o
    to the geodesic ray from o to omega.
    """

    displacement: np.ndarray
    beta_out: np.ndarray
    beta_back: np.ndarray
    tube: np.ndarray
    multiplicity: np.ndarray
    exact: bool = False

    @classmethod
    def from_rows(cls, rows, exact=True):
        cols = list(zip(*rows)) if rows else [(), (), (), (), ()]
        dtype = np.int64 if exact else float
        arrays = [np.array(c, dtype=dtype) for c in cols[:4]]
        # counts past int64 (radius ~40 and up in F_k) stay Python ints
        big = any(m > 2**62 for m in cols[4])
        return cls(*arrays, np.array(cols[4], dtype=object if big else np.int64), exact=exact)

    def __len__(self):
        return len(self.displacement)


def _half(total):
    if isinstance(total, Integral):
        return Fraction(int(total), 2)
    return total / 2


def gromov_product(model, x, y, o=None):
    """``(x|y)_o = [d(o,x) + d(o,y) - d(x,y)] / 2``."""
    if o is None:
        o = model.basepoint
    d = model.distance
    return _half(d(o, x) + d(o, y) - d(x, y))


def _distance_matrix(model, points):
    n = len(points)
    rows = [[model.distance(points[i], points[j]) if i != j else 0 for j in range(n)] for i in range(n)]
    exact = all(isinstance(v, Integral) for row in rows for v in row)
    return np.array(rows, dtype=np.int64 if exact else float), exact


def delta_estimate(model, sample):
    """Empirical lower bound for the hyperbolicity constant.

    Returns the maximum over ordered quadruples ``(x, y, z, o)`` of
    ``min{(x|y)_o, (y|z)_o} - (x|z)_o`` clamped at 0.  Expanding the
    Gromov products, this equals half the gap between the largest and the
    second largest of the three pair sums ``d(x,z)+d(y,o)``,
    ``d(x,y)+d(z,o)``, ``d(x,o)+d(y,z)``, maximized over 4-subsets, which is
    what is computed.  Exact (``Fraction``) for integer metrics.
    """
    points = list(sample)
    if len(points) < 4:
        points += [points[-1]] * (4 - len(points)) if points else []
    if len(points) < 4:
        raise ValueError("sample must contain at least one point")
    D, exact = _distance_matrix(model, points)
    n = len(points)
    best = 0
    for i in range(n - 3):
        sub = D[i + 1 :, i + 1 :]
        di = D[i, i + 1 :]
        # j, k, l range over the points after i (only 4-subsets matter)
        s1 = di[:, None, None] + sub[None, :, :]  # d(i,j) + d(k,l)
        s2 = di[None, :, None] + sub[:, None, :]  # d(i,k) + d(j,l)
        s3 = di[None, None, :] + sub[:, :, None]  # d(i,l) + d(j,k)
        hi = np.maximum(np.maximum(s1, s2), s3)
        lo = np.minimum(np.minimum(s1, s2), s3)
        mid = s1 + s2 + s3 - hi - lo
        gap = (hi - mid).max()
        if gap > best:
            best = gap
    if exact:
        return Fraction(int(best), 2)
    return float(best) / 2


def busemann(model, omega, x, y, depth=20, prefer_exact=True, tol=1e-9, max_doublings=8):
    """Busemann (quasi-)cocycle ``beta_omega(x, y)``.

    Uses the model's closed form when available.  Otherwise the limsup of
    ``d(y, z_n) - d(x, z_n)`` is replaced by its maximum over the window
    ``n in [depth, 2 depth]``; the window is doubled until two consecutive
    windows agree within ``tol``.  Models may declare ``max_approach``, the
    last ``n`` at which ``boundary_approach`` is still resolvable; windows
    are clipped there.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    exact = getattr(model, "exact_busemann", None)
    if prefer_exact and exact is not None:
        return BusemannValue(exact(omega, x, y), "exact")

    cap = getattr(model, "max_approach", None)

    def window(lo):
        hi = 2 * lo if cap is None else min(2 * lo, cap)
        vals = []
        for n in range(min(lo, hi), hi + 1):
            z = model.boundary_approach(omega, n)
            vals.append(model.distance(y, z) - model.distance(x, z))
        return max(vals)

    current = window(depth)
    for _ in range(max_doublings):
        if cap is not None and 2 * depth >= cap:
            break
        depth *= 2
        nxt = window(depth)
        if abs(nxt - current) <= tol:
            return BusemannValue(nxt, "approximated", depth)
        current = nxt
    return BusemannValue(current, "approximated", depth)


def quasicocycle_defect(model, omega, x, y, z, depth=20, prefer_exact=True):
    """Cyclic sum ``beta(x,y) + beta(y,z) + beta(z,x)``; lies in ``[0, C]``."""
    b = lambda p, q: busemann(model, omega, p, q, depth, prefer_exact).value  # noqa: E731
    return b(x, y) + b(y, z) + b(z, x)


def horoball_member(model, omega, o, x, t=0, tol=1e-9, depth=20):
    """Is ``x`` in the level-``t`` horoball ``{beta_omega(o, x) <= t}``?

    Float-valued evaluations closer than ``tol`` to ``t`` are reported with
    ``boundary_case=True`` so that callers can count them separately.
    """
    val = busemann(model, omega, o, x, depth)
    beta = val.value
    if isinstance(beta, (Integral, Fraction)):
        return HoroballTest(beta <= t, beta)
    beta = float(beta)
    return HoroballTest(beta <= t, beta, boundary_case=math.isclose(beta, t, rel_tol=0, abs_tol=tol))
