"""Countable weighted actions and their exact Hopf decomposition.

A countable model is a group acting on a countable set of atoms with
positive rational masses.  Every atom lies in the purely atomic part, so
the continual part is empty and the decomposition reduces to sorting
orbits by the size of their stabilizers:

* trivial stabilizer: the free dissipative part ``D_free``;
* finite nontrivial stabilizer: ``D_cof \\ D_free`` (recurrent, but not
  infinitely recurrent);
* infinite stabilizer: ``D \\ D_cof`` (infinitely recurrent).

Supported groups are ``Z^d x Z/n_1 x ... x Z/n_s`` (:class:`AbelianGroup`)
and free groups (:class:`FreeGroup`).  Supported spaces are translation
lattices ``copies x Z^e x Z/m_1 x ...`` acted on through a homomorphism
given by generator images, the regular action of F_k on itself, and
permutation actions on finite sets.  All arithmetic is exact.

Examples
--------
>>> act = action_from_dict({
...     "group": {"type": "abelian", "rank": 1},
...     "space": {"type": "lattice", "rank": 1, "images": [[1]]},
...     "weights": {"kind": "geometric", "ratio": "1/2"},
... })
>>> rn_derivative(act, "a", (0, 0))
Fraction(1, 2)
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, prod

from . import freegroup as fg
from .errors import ConfigError, InvariantViolation, MalformedWordError

__all__ = [
    "AbelianGroup",
    "FreeGroup",
    "LatticeSpace",
    "FreeRegularSpace",
    "PermutationSpace",
    "GeometricWeights",
    "PolynomialWeights",
    "UniformFiniteWeights",
    "ReweightedWeights",
    "CountableWeightedAction",
    "SetSpec",
    "StabilizerInfo",
    "OrbitReport",
    "WanderingResult",
    "RecurrenceResult",
    "WanderingSetReport",
    "HopfPartition",
    "rn_derivative",
    "orbit_measure_partial",
    "orbit_measure_total",
    "classify_orbit",
    "is_wandering",
    "is_recurrent",
    "maximal_wandering_set",
    "hopf_partition",
    "reweighted",
    "action_from_dict",
    "canonical_battery",
    "write_orbit_csv",
]

D_FREE = "D_free"
D_COF = "D_cof\\D_free"
D_REST = "D\\D_cof"
CELLS = (D_FREE, D_COF, D_REST)


# -- groups ----------------------------------------------------------------


def _l1_ball(dim, s):
    """Integer vectors of dimension ``dim`` with L1 norm at most ``s``."""
    if dim == 0:
        yield ()
        return
    for x in range(-s, s + 1):
        for rest in _l1_ball(dim - 1, s - abs(x)):
            yield (x,) + rest


def _l1_sphere_count(dim, n):
    """``#{v in Z^dim : |v|_1 = n}``."""
    if n == 0:
        return 1
    return sum(2**i * comb(dim, i) * comb(n - 1, i - 1) for i in range(1, dim + 1))


class AbelianGroup:
    """``Z^rank x Z/n_1 x ... x Z/n_s`` with one generator per factor.

    Elements are integer tuples, torsion coordinates reduced into
    ``[0, n_i)``.  Generator ``i`` is the ``i``-th lower-case letter; the
    upper-case letter is its inverse.
    """

    def __init__(self, rank=0, torsion=()):
        torsion = tuple(int(n) for n in torsion)
        if rank < 0 or any(n < 2 for n in torsion):
            raise ConfigError("abelian group needs rank >= 0 and torsion orders >= 2")
        if rank + len(torsion) > 26:
            raise ConfigError("at most 26 generators are supported")
        self.rank = int(rank)
        self.torsion = torsion
        self.ngens = self.rank + len(torsion)
        self.symbols = tuple("abcdefghijklmnopqrstuvwxyz"[: self.ngens])
        self.identity = (0,) * self.ngens

    def __repr__(self):
        parts = ["Z"] * self.rank + [f"Z/{n}" for n in self.torsion]
        return " x ".join(parts) or "trivial"

    @property
    def infinite(self):
        return self.rank > 0

    @property
    def order(self):
        return None if self.infinite else prod(self.torsion)

    def _reduce(self, g):
        g = list(g)
        for j, n in enumerate(self.torsion):
            g[self.rank + j] %= n
        return tuple(g)

    def generator(self, i):
        return self._reduce(tuple(int(i == j) for j in range(self.ngens)))

    def parse(self, word):
        g = [0] * self.ngens
        for ch in word:
            i = ord(ch.lower()) - 97
            if not ch.isascii() or not ch.isalpha() or i >= self.ngens:
                raise MalformedWordError(f"symbol {ch!r} is not a generator of {self!r}")
            g[i] += -1 if ch.isupper() else 1
        return self._reduce(g)

    def word(self, g):
        out = []
        for i, x in enumerate(g):
            ch = self.symbols[i]
            if i >= self.rank:
                n = self.torsion[i - self.rank]
                x = x if x <= n // 2 else x - n
            out.append(ch * x if x >= 0 else ch.upper() * -x)
        return "".join(out)

    def length(self, g):
        n = sum(abs(x) for x in g[: self.rank])
        return n + sum(min(x, m - x) for x, m in zip(g[self.rank :], self.torsion))

    def multiply(self, g, h):
        return self._reduce(tuple(x + y for x, y in zip(g, h)))

    def inverse(self, g):
        return self._reduce(tuple(-x for x in g))

    def key(self, g):
        return fg.word_key(self.word(g))

    def elements_of_torsion(self):
        return itertools.product(*[range(n) for n in self.torsion])

    def ball(self, radius):
        out = []
        for tau in self.elements_of_torsion():
            ell = sum(min(j, n - j) for j, n in zip(tau, self.torsion))
            if ell <= radius:
                out += [v + tau for v in _l1_ball(self.rank, radius - ell)]
        out.sort(key=self.key)
        return out


class FreeGroup:
    """Free group F_k; elements are reduced words."""

    identity = ""
    infinite = True
    order = None

    def __init__(self, rank):
        if rank < 1:
            raise ConfigError("free group rank must be >= 1")
        self.rank = int(rank)
        self.ngens = self.rank
        self.symbols = tuple(fg.alphabet(rank)[::2])

    def __repr__(self):
        return f"F_{self.rank}"

    def generator(self, i):
        return self.symbols[i]

    def parse(self, word):
        return fg.reduce(word, self.rank)

    def word(self, g):
        return g

    def length(self, g):
        return len(g)

    def multiply(self, g, h):
        return fg.multiply(g, h)

    def inverse(self, g):
        return fg.inverse(g)

    def key(self, g):
        return fg.word_key(g)

    def ball(self, radius):
        return fg.ball(self.rank, radius)


# -- spaces ----------------------------------------------------------------


@dataclass(frozen=True)
class LatticeSpace:
    """``copies x Z^rank x Z/m_1 x ...``; points are tuples
    ``(copy, free coordinates..., torsion coordinates...)``.

    The norm of a point is the L1 norm of its free coordinates.
    """

    rank: int = 1
    torsion: tuple = ()
    copies: int = 1

    @property
    def finite(self):
        return self.rank == 0

    @property
    def size(self):
        return self.copies * prod(self.torsion) if self.finite else None

    @property
    def dim(self):
        return self.rank + len(self.torsion)

    def norm(self, x):
        return sum(abs(c) for c in x[1 : 1 + self.rank])

    def key(self, x):
        return (self.norm(x), x)

    def contains(self, x):
        if not isinstance(x, tuple) or len(x) != 1 + self.dim:
            return False
        if not 0 <= x[0] < self.copies:
            return False
        return all(0 <= c < m for c, m in zip(x[1 + self.rank :], self.torsion))

    def points(self, radius):
        tors = list(itertools.product(*[range(m) for m in self.torsion]))
        out = [(c,) + v + t for c in range(self.copies) for v in _l1_ball(self.rank, radius) for t in tors]
        out.sort(key=self.key)
        return out

    def count_at(self, n):
        return self.copies * prod(self.torsion) * _l1_sphere_count(self.rank, n)

    def geometric_sum(self, r):
        return self.copies * prod(self.torsion) * ((1 + r) / (1 - r)) ** self.rank

    def polynomial_tail(self, p, radius):
        """Upper bound for the sum of ``(1+|x|)^-p`` over ``|x| > radius``."""
        if self.rank == 0:
            return Fraction(0)
        if p <= self.rank:
            raise ConfigError(f"polynomial weights need power > {self.rank} on this lattice")
        e = self.rank
        return Fraction(self.copies * prod(self.torsion) * 2**e, p - e) * Fraction(1 + radius) ** (e - p)


@dataclass(frozen=True)
class FreeRegularSpace:
    """F_k as a set (points are reduced words), norm = word length."""

    k: int = 2
    finite = False
    size = None

    def norm(self, x):
        return len(x)

    def key(self, x):
        return fg.word_key(x)

    def contains(self, x):
        return isinstance(x, str) and fg.reduce(x, self.k) == x

    def points(self, radius):
        return fg.ball(self.k, radius)

    def count_at(self, n):
        return 1 if n == 0 else 2 * self.k * (2 * self.k - 1) ** (n - 1)

    def geometric_sum(self, r):
        if r * (2 * self.k - 1) >= 1:
            raise ConfigError(f"geometric ratio must be < 1/{2 * self.k - 1} on F_{self.k}")
        return 1 + 2 * self.k * r / (1 - (2 * self.k - 1) * r)

    def polynomial_tail(self, p, radius):
        raise ConfigError("polynomial weights are not summable on a free group")


@dataclass(frozen=True)
class PermutationSpace:
    """The finite set ``{0, ..., size - 1}``; every point has norm 0."""

    size: int = 1
    finite = True

    def norm(self, x):
        return 0

    def key(self, x):
        return (0, x)

    def contains(self, x):
        return isinstance(x, int) and 0 <= x < self.size

    def points(self, radius):
        return list(range(self.size))

    def count_at(self, n):
        return self.size if n == 0 else 0

    def geometric_sum(self, r):
        return Fraction(self.size)

    def polynomial_tail(self, p, radius):
        return Fraction(0)


# -- weights ---------------------------------------------------------------
#
# A bound weight family knows, besides m(x), the supremum of m beyond a
# norm radius and an upper bound for the mass beyond it.  These feed the
# certified finiteness checks in ``classify_orbit``.


@dataclass
class GeometricWeights:
    """``m(x) = c r^|x|`` normalized to total mass 1."""

    space: object
    ratio: Fraction
    normalized = True
    tail_exact = True

    def __post_init__(self):
        self.ratio = Fraction(self.ratio)
        if not 0 < self.ratio < 1:
            raise ConfigError("geometric ratio must lie in (0, 1)")
        self.scale = 1 / Fraction(self.space.geometric_sum(self.ratio))

    def describe(self):
        return {"kind": "geometric", "ratio": str(self.ratio)}

    def __call__(self, x):
        return self.scale * self.ratio ** self.space.norm(x)

    def sup_beyond(self, radius):
        if self.space.finite:
            return Fraction(0)
        return self.scale * self.ratio ** (radius + 1)

    def tail(self, radius):
        inside = sum(self.space.count_at(n) * self.ratio**n for n in range(radius + 1))
        return 1 - self.scale * inside

    @property
    def total(self):
        return Fraction(1)


@dataclass
class PolynomialWeights:
    """``m(x) = (1 + |x|)^-p``, left unnormalized; summable for ``p > rank``."""

    space: object
    power: int
    normalized = False
    tail_exact = False

    def __post_init__(self):
        if int(self.power) != self.power or self.power < 1:
            raise ConfigError("polynomial power must be a positive integer")
        self.power = int(self.power)
        self.space.polynomial_tail(self.power, 0)  # validates summability

    def describe(self):
        return {"kind": "polynomial", "power": self.power}

    def __call__(self, x):
        return Fraction(1, (1 + self.space.norm(x)) ** self.power)

    def sup_beyond(self, radius):
        if self.space.finite:
            return Fraction(0)
        return Fraction(1, (2 + radius) ** self.power)

    def tail(self, radius):
        return self.space.polynomial_tail(self.power, radius)

    @property
    def total(self):
        if self.space.finite:
            return sum(self(x) for x in self.space.points(0))
        return None


@dataclass
class UniformFiniteWeights:
    """Equal masses on a finite space, total mass 1."""

    space: object
    normalized = True
    tail_exact = True

    def __post_init__(self):
        if not self.space.finite:
            raise ConfigError("uniform-finite weights need a finite space")
        self.mass = Fraction(1, self.space.size)

    def describe(self):
        return {"kind": "uniform-finite"}

    def __call__(self, x):
        return self.mass

    def sup_beyond(self, radius):
        return Fraction(0)

    def tail(self, radius):
        return Fraction(0)

    @property
    def total(self):
        return Fraction(1)


@dataclass
class ReweightedWeights:
    """``u(x) m(x)`` with a deterministic pseudo-random ``u(x)`` in ``[1/2, 2]``."""

    base: object
    seed: int = 0
    normalized = False
    tail_exact = False

    @property
    def space(self):
        return self.base.space

    def describe(self):
        return {"kind": "reweighted", "seed": self.seed, "base": self.base.describe()}

    def factor(self, x):
        h = hashlib.sha256(f"{self.seed}:{x!r}".encode()).digest()
        return Fraction(100 + int.from_bytes(h[:8], "big") % 301, 200)

    def __call__(self, x):
        return self.factor(x) * self.base(x)

    def sup_beyond(self, radius):
        return 2 * self.base.sup_beyond(radius)

    def tail(self, radius):
        t = self.base.tail(radius)
        return None if t is None else 2 * t

    @property
    def total(self):
        if self.space.finite:
            return sum(self(x) for x in self.space.points(0))
        return None


# -- integer lattices ------------------------------------------------------


class _IntLattice:
    """Subgroup of Z^n spanned by integer rows, in echelon form."""

    def __init__(self, rows, ncols):
        self.ncols = ncols
        rows = [list(r) for r in rows if any(r)]
        basis = []
        for col in range(ncols):
            while True:
                active = [r for r in rows if r[col] != 0]
                if len(active) <= 1:
                    break
                piv = min(active, key=lambda r: abs(r[col]))
                nxt = [piv]
                for r in rows:
                    if r is piv:
                        continue
                    q = r[col] // piv[col]
                    r2 = [a - q * b for a, b in zip(r, piv)]
                    if any(r2):
                        nxt.append(r2)
                rows = nxt
            active = [r for r in rows if r[col] != 0]
            if active:
                piv = active[0]
                basis.append((col, piv))
                rows = [r for r in rows if r is not piv]
        self.basis = basis

    def contains(self, v):
        v = list(v)
        for col, row in self.basis:
            if v[col] % row[col]:
                return False
            q = v[col] // row[col]
            v = [a - q * b for a, b in zip(v, row)]
        return not any(v)


def _rational_rank(rows):
    m = [[Fraction(x) for x in r] for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        piv = next((i for i in range(rank, len(m)) if m[i][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for i in range(len(m)):
            if i != rank and m[i][col] != 0:
                f = m[i][col] / m[rank][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[rank])]
        rank += 1
    return rank


def _solve_unique(a_rows, target):
    """Solve ``v . A = target`` for v in Q^d, A given by d rows of full
    rank d.  Returns None when inconsistent."""
    d = len(a_rows)
    if d == 0:
        return () if not any(target) else None
    e = len(target)
    # equations: for each column c, sum_i v_i A[i][c] = target[c]
    aug = [[Fraction(a_rows[i][c]) for i in range(d)] + [Fraction(target[c])] for c in range(e)]
    row = 0
    pivots = []
    for col in range(d):
        piv = next((i for i in range(row, e) if aug[i][col] != 0), None)
        if piv is None:
            continue
        aug[row], aug[piv] = aug[piv], aug[row]
        aug[row] = [x / aug[row][col] for x in aug[row]]
        for i in range(e):
            if i != row and aug[i][col] != 0:
                f = aug[i][col]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[row])]
        pivots.append(col)
        row += 1
    if any(aug[i][d] != 0 for i in range(row, e)):
        return None
    v = [Fraction(0)] * d
    for i, col in enumerate(pivots):
        v[col] = aug[i][d]
    return tuple(v)


# -- the action ------------------------------------------------------------


@dataclass(frozen=True)
class StabilizerInfo:
    kind: str  # "trivial", "finite" or "infinite"
    certified: bool
    elements: tuple | None = None  # the whole stabilizer when finite

    @property
    def nontrivial(self):
        return self.kind != "trivial"


@dataclass
class CountableWeightedAction:
    """A group acting on a countable set of weighted atoms.

    Parameters
    ----------
    group : AbelianGroup or FreeGroup
    space : LatticeSpace, FreeRegularSpace or PermutationSpace
    weights : callable
        Bound weight family (see ``GeometricWeights`` and friends).
    images : list of tuple, optional
        Lattice spaces only: the translation vector of each generator.
    perms : list of tuple, optional
        Permutation spaces only: the image list of each generator.
    invariant : bool
        Declares the weights G-invariant; checked by :meth:`validate`.
    """

    group: object
    space: object
    weights: object
    images: tuple | None = None
    perms: tuple | None = None
    invariant: bool = False
    name: str = ""
    _lattice: object = field(default=None, repr=False)
    _inverse_perms: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        sp = self.space
        if isinstance(sp, LatticeSpace):
            if not isinstance(self.group, AbelianGroup):
                raise ConfigError("lattice spaces need an abelian group")
            if self.images is None or len(self.images) != self.group.ngens:
                raise ConfigError("one image vector per group generator is required")
            self.images = tuple(tuple(int(c) for c in v) for v in self.images)
            if any(len(v) != sp.dim for v in self.images):
                raise ConfigError(f"image vectors must have length {sp.dim}")
            tors_rows = [
                tuple(m if j == sp.rank + i else 0 for j in range(sp.dim)) for i, m in enumerate(sp.torsion)
            ]
            self._lattice = _IntLattice(list(self.images) + tors_rows, sp.dim)
            tors_only = _IntLattice(tors_rows, sp.dim)
            for j, n in enumerate(self.group.torsion):
                v = self.images[self.group.rank + j]
                if not tors_only.contains([n * c for c in v]):
                    raise ConfigError(f"image of generator {self.group.symbols[self.group.rank + j]} has wrong order")
        elif isinstance(sp, FreeRegularSpace):
            if not isinstance(self.group, FreeGroup) or self.group.rank != sp.k:
                raise ConfigError("the regular space needs the matching free group")
        elif isinstance(sp, PermutationSpace):
            if self.perms is None or len(self.perms) != self.group.ngens:
                raise ConfigError("one permutation per group generator is required")
            self.perms = tuple(tuple(int(i) for i in p) for p in self.perms)
            if any(sorted(p) != list(range(sp.size)) for p in self.perms):
                raise ConfigError("generator images must be permutations of the space")
            inv = []
            for p in self.perms:
                q = [0] * sp.size
                for i, j in enumerate(p):
                    q[j] = i
                inv.append(tuple(q))
            self._inverse_perms = tuple(inv)
            if isinstance(self.group, AbelianGroup):
                self._check_abelian_relations()
        else:
            raise ConfigError(f"unsupported space {sp!r}")

    def _check_abelian_relations(self):
        ps = self.perms
        for i, j in itertools.combinations(range(len(ps)), 2):
            if any(ps[i][ps[j][x]] != ps[j][ps[i][x]] for x in range(self.space.size)):
                raise ConfigError("generator permutations must commute for an abelian group")
        g = self.group
        for j, n in enumerate(g.torsion):
            p = ps[g.rank + j]
            for x in range(self.space.size):
                y = x
                for _ in range(n):
                    y = p[y]
                if y != x:
                    raise ConfigError("torsion generator permutation has the wrong order")

    # - evaluation

    def weight(self, x):
        return self.weights(x)

    def key(self, x):
        return self.space.key(x)

    def _shift(self, g):
        vec = [0] * self.space.dim
        for c, img in zip(g, self.images):
            if c:
                vec = [a + c * b for a, b in zip(vec, img)]
        return vec

    def _translate(self, vec, x):
        sp = self.space
        y = [a + b for a, b in zip(x[1:], vec)]
        for j, m in enumerate(sp.torsion):
            y[sp.rank + j] %= m
        return (x[0],) + tuple(y)

    def act(self, g, x):
        """Image of the point ``x`` under the group element ``g``."""
        sp = self.space
        if isinstance(sp, LatticeSpace):
            return self._translate(self._shift(g), x)
        if isinstance(sp, FreeRegularSpace):
            return fg.reduce(g + x)
        word = self.group.word(g)
        for ch in reversed(word):
            i = ord(ch.lower()) - 97
            x = (self._inverse_perms if ch.isupper() else self.perms)[i][x]
        return x

    def act_word(self, word, x):
        return self.act(self.group.parse(word), x)

    def points(self, radius):
        return self.space.points(radius)

    # - orbits

    def same_orbit(self, x, y):
        sp = self.space
        if isinstance(sp, LatticeSpace):
            if x[0] != y[0]:
                return False
            return self._lattice.contains([b - a for a, b in zip(x[1:], y[1:])])
        if isinstance(sp, FreeRegularSpace):
            return True
        return y in self._finite_orbit(x)

    def _finite_orbit(self, x):
        seen = {x}
        todo = [x]
        while todo:
            z = todo.pop()
            for p in self.perms + self._inverse_perms:
                w = p[z]
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return seen

    def orbit_finite(self, x):
        sp = self.space
        if isinstance(sp, LatticeSpace):
            return sp.finite
        return isinstance(sp, PermutationSpace)

    def orbit_points(self, x, radius):
        """Orbit points of norm at most ``radius`` in canonical order."""
        if isinstance(self.space, PermutationSpace):
            return sorted(self._finite_orbit(x), key=self.key)
        return [y for y in self.points(radius) if self.same_orbit(x, y)]

    def stabilizer(self, x):
        """Exact stabilizer type of ``x`` (all shipped actions certify it)."""
        g, sp = self.group, self.space
        if isinstance(sp, FreeRegularSpace):
            return StabilizerInfo("trivial", True, (g.identity,))
        if isinstance(sp, PermutationSpace):
            if g.infinite:
                # finite orbit, infinite group: finite-index stabilizer
                return StabilizerInfo("infinite", True)
            elems = tuple(h for h in g.ball(sum(g.torsion)) if self.act(h, x) == x)
            return StabilizerInfo("trivial" if len(elems) == 1 else "finite", True, elems)
        # translation actions: the stabilizer is the kernel of the shift map
        free_rows = [v[: sp.rank] for v in self.images[: g.rank]]
        if g.rank and _rational_rank(free_rows) < g.rank:
            return StabilizerInfo("infinite", True)
        kernel = []
        for tau in g.elements_of_torsion():
            t_vec = [0] * sp.dim
            for c, img in zip(tau, self.images[g.rank :]):
                t_vec = [a + c * b for a, b in zip(t_vec, img)]
            v = _solve_unique(free_rows, [-c for c in t_vec[: sp.rank]])
            if v is None or any(c.denominator != 1 for c in v):
                continue
            elem = tuple(int(c) for c in v) + tuple(tau)
            if self._lattice_zero(self._shift(elem)):
                kernel.append(elem)
        kernel.sort(key=g.key)
        return StabilizerInfo("trivial" if len(kernel) == 1 else "finite", True, tuple(kernel))

    def _lattice_zero(self, vec):
        sp = self.space
        if any(vec[: sp.rank]):
            return False
        return all(c % m == 0 for c, m in zip(vec[sp.rank :], sp.torsion))

    def search_ball(self, radius, cap=200_000):
        """The group ball ``B_r`` for the largest ``r <= radius`` of size at most ``cap``."""
        r = radius
        while r > 0:
            b = self.group.ball(r)
            if len(b) <= cap:
                return r, b
            r -= 1
        return 0, [self.group.identity]

    def validate(self, radius=6):
        """Check the structural invariants on the points of norm <= radius.

        Raises
        ------
        InvariantViolation
            Non-positive weights, broken bijections, a wrong normalization
            or weights declared invariant that are not.
        """
        pts = self.points(radius)
        g = self.group
        for x in pts:
            if self.weight(x) <= 0:
                raise InvariantViolation(f"non-positive weight at {x!r}")
        for i in range(g.ngens):
            s = g.generator(i)
            s_inv = g.inverse(s)
            for x in pts:
                y = self.act(s, x)
                if not self.space.contains(y) or self.act(s_inv, y) != x:
                    raise InvariantViolation(f"generator {g.symbols[i]} is not a bijection at {x!r}")
                if self.invariant and self.weight(y) != self.weight(x):
                    raise InvariantViolation(
                        f"weights declared invariant but m({y!r}) != m({x!r}) under {g.symbols[i]}"
                    )
        if self.space.finite and self.weights.normalized:
            total = sum(self.weight(x) for x in pts)
            if total != 1:
                raise InvariantViolation(f"normalized weights sum to {total}")
        return True


@dataclass(frozen=True)
class SetSpec:
    """A finite subset ``A`` of the space."""

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if len(set(members)) != len(members):
            raise ValueError("set members must be distinct")
        object.__setattr__(self, "members", members)

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def __contains__(self, x):
        return x in self.members


def _check_set(action, A):
    if not isinstance(A, SetSpec):
        A = SetSpec(tuple(A))
    for x in A:
        if not action.space.contains(x):
            raise ValueError(f"{x!r} is not a point of the space")
        if action.weight(x) <= 0:
            raise InvariantViolation(f"set member {x!r} has non-positive weight")
    return A


# -- basic operations ------------------------------------------------------


def rn_derivative(action, g, x):
    """Atomic Radon-Nikodym derivative ``m(g x) / m(x)``.

    ``g`` is a word over the generator symbols (upper case for inverses).
    """
    elem = action.group.parse(g) if isinstance(g, str) else g
    return action.weight(action.act(elem, x)) / action.weight(x)


def orbit_measure_partial(action, x, radius):
    """Partial sums ``sum_{y in B_r x} m(y)/m(x)`` for ``r = 0..radius``.

    Orbit points reached by several group elements are counted once.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    g = action.group
    mx = action.weight(x)
    seen = set()
    total = Fraction(0)
    sums = []
    by_len = {}
    for h in g.ball(radius):
        by_len.setdefault(g.length(h), []).append(h)
    for r in range(radius + 1):
        for h in by_len.get(r, []):
            y = action.act(h, x)
            if y not in seen:
                seen.add(y)
                total += action.weight(y) / mx
        sums.append(total)
    return sums


def orbit_measure_total(action, x, radius=20):
    """``mu_x(G x)`` as an exact value or a certified bracket.

    Returns ``(low, high)``; ``low == high`` when the total is exact.
    ``high`` is None when the weight family has no tail bound.
    """
    mx = action.weight(x)
    if action.orbit_finite(x):
        s = sum(action.weight(y) for y in _whole_finite_orbit(action, x)) / mx
        return s, s
    inside = sum(action.weight(y) for y in action.orbit_points(x, radius))
    tail = action.weights.tail(radius)
    if action.weights.tail_exact and _orbit_is_whole_copy(action, x):
        # the orbit exhausts its copy, whose mass is known in closed form
        total = action.weights.total / getattr(action.space, "copies", 1)
        return total / mx, total / mx
    if tail is None:
        return inside / mx, None
    return inside / mx, (inside + tail) / mx


def _orbit_is_whole_copy(action, x):
    sp = action.space
    if isinstance(sp, FreeRegularSpace):
        return True
    if isinstance(sp, LatticeSpace):
        return all(action._lattice.contains([int(i == j) for j in range(sp.dim)]) for i in range(sp.dim))
    return False


# -- orbit classification --------------------------------------------------


@dataclass
class OrbitReport:
    base_point: object
    stabilizer_elements: list
    freeness: str  # "free", "cofinite", "infinite-stabilizer" or "...-suspected"
    certified: bool
    mu_partial: list
    mu_total: tuple
    verdict: str  # "dissipative" or "conservative-nonfree"
    cell: str
    equivalences_checked: dict
    search_radius: int = 0

    def as_dict(self):
        low, high = self.mu_total
        return {
            "base_point": repr(self.base_point),
            "stabilizer_elements": list(self.stabilizer_elements),
            "freeness": self.freeness,
            "certified": self.certified,
            "verdict": self.verdict,
            "cell": self.cell,
            "mu_partial_last": str(self.mu_partial[-1]) if self.mu_partial else None,
            "mu_total_low": str(low),
            "mu_total_high": None if high is None else str(high),
            "equivalences": dict(self.equivalences_checked),
        }


DEFAULT_T_GRID = (Fraction(1, 1000), Fraction(1, 100), Fraction(1, 10), Fraction(1, 2), Fraction(1))


def _finite_level_set(action, x, t, limit=10_000):
    """Certified ``#{y in G x : mu_x(y) >= t}``, or None when no radius
    certifies finiteness within ``limit``."""
    mx = action.weight(x)
    if action.orbit_finite(x):
        return sum(1 for y in _whole_finite_orbit(action, x) if action.weight(y) >= t * mx)
    radius = 0
    while action.weights.sup_beyond(radius) >= t * mx:
        radius += 1
        if radius > limit:
            return None
    return sum(1 for y in action.orbit_points(x, radius) if action.weight(y) >= t * mx)


def _whole_finite_orbit(action, x):
    if isinstance(action.space, PermutationSpace):
        return sorted(action._finite_orbit(x), key=action.key)
    return [y for y in action.points(0) if action.same_orbit(x, y)]


def _max_weight_atoms(action, x, limit=10_000):
    """Certified set of maximal-weight atoms of the orbit, or None."""
    if action.orbit_finite(x):
        pts = _whole_finite_orbit(action, x)
    else:
        radius = action.space.norm(x)
        while True:
            pts = action.orbit_points(x, radius)
            best = max(action.weight(y) for y in pts)
            if action.weights.sup_beyond(radius) < best:
                break
            radius += 1
            if radius > limit:
                return None
    best = max(action.weight(y) for y in pts)
    return [y for y in pts if action.weight(y) == best]


def _freeness(info):
    if info.kind == "trivial":
        return "free"
    if info.kind == "finite":
        return "cofinite"
    return "infinite-stabilizer" if info.certified else "infinite-stabilizer-suspected"


def _cell(info):
    return {"trivial": D_FREE, "finite": D_COF, "infinite": D_REST}[info.kind]


def classify_orbit(action, x, depth=20, t_grid=DEFAULT_T_GRID):
    """Stabilizer search, finiteness conditions and verdict for the orbit of ``x``.

    The three equivalent finiteness conditions are evaluated independently:
    (iii) the orbit measure ``mu_x`` is finite (certified by a tail bound),
    (iv) each level set ``{y : mu_x(y) >= t}`` is finite for ``t`` in
    ``t_grid``, and (v) the set of maximal-weight atoms is finite and
    nonempty.  A condition that cannot be certified is reported as None.
    """
    info = action.stabilizer(x)
    r, ball = action.search_ball(depth)
    found = [h for h in ball if h != action.group.identity and action.act(h, x) == x]
    stab_words = [action.group.word(h) for h in found]

    partial = orbit_measure_partial(action, x, min(depth, r))
    low, high = orbit_measure_total(action, x, depth)
    cond_iii = None if high is None else True
    levels = [_finite_level_set(action, x, Fraction(t)) for t in t_grid]
    cond_iv = None if any(n is None for n in levels) else True
    atoms = _max_weight_atoms(action, x)
    cond_v = None if atoms is None else len(atoms) > 0
    conds = {"iii": cond_iii, "iv": cond_iv, "v": cond_v}
    conds["agree"] = len(set(conds.values())) == 1
    conds["level_set_sizes"] = levels
    conds["max_weight_atoms"] = None if atoms is None else len(atoms)

    if info.kind == "trivial" and found:
        raise InvariantViolation(f"stabilizer search contradicts freeness at {x!r}")
    freeness = _freeness(info)
    verdict = "dissipative" if freeness == "free" else "conservative-nonfree"
    return OrbitReport(
        base_point=x,
        stabilizer_elements=stab_words,
        freeness=freeness,
        certified=info.certified,
        mu_partial=partial,
        mu_total=(low, high),
        verdict=verdict,
        cell=_cell(info),
        equivalences_checked=conds,
        search_radius=r,
    )


# -- wandering and recurrent sets ------------------------------------------


@dataclass
class WanderingResult:
    wandering: bool
    witness: tuple | None  # (g, h, point): point lies in gA and hA
    certified: bool
    radius: int


def _exact_wandering(action, A):
    members = list(A)
    for x in members:
        if action.stabilizer(x).nontrivial:
            return False
    for x, y in itertools.combinations(members, 2):
        if action.same_orbit(x, y):
            return False
    return True


def is_wandering(action, A, radius=10):
    """Are the translates ``gA``, ``g`` in ``B_radius``, pairwise disjoint?

    The search returns a witness ``(g, h, point)``.  The exact answer
    (points in distinct orbits with trivial stabilizers) is computed as
    well; when it says "not wandering" but the ball is too small to show
    it, the search radius is doubled until a witness appears.
    """
    A = _check_set(action, A)
    exact = _exact_wandering(action, A)
    r = radius
    while True:
        witness = _wandering_witness(action, A, r)
        if witness is not None or exact or r >= 8 * max(radius, 1):
            break
        r *= 2
    if witness is not None and exact:
        raise InvariantViolation("wandering search contradicts the exact orbit structure")
    return WanderingResult(witness is None, witness, certified=(witness is None) == exact, radius=r)


def _wandering_witness(action, A, radius):
    g = action.group
    seen = {}
    for h in action.search_ball(radius)[1]:
        for x in A:
            y = action.act(h, x)
            if y in seen and seen[y] != h:
                return (g.word(h), g.word(seen[y]), y)
            seen.setdefault(y, h)
    return None


@dataclass
class RecurrenceResult:
    mode: str
    per_point: dict
    aggregate: bool
    witnesses: dict
    certified: bool
    return_counts: dict = field(default_factory=dict)


def is_recurrent(action, A, mode="once", radius=10, schedule=None):
    """Recurrence of the points of ``A`` to ``A``.

    ``mode="once"``: some ``g != e`` in ``B_radius`` maps ``x`` into ``A``.
    ``mode="infinitely"``: the return set ``{g : g x in A}`` is infinite.
    Both are decided exactly from the stabilizer and orbit structure; the
    search witnesses and return counts along ``schedule`` are reported
    alongside and must agree with the exact answer.
    """
    if mode not in ("once", "infinitely"):
        raise ValueError("mode must be 'once' or 'infinitely'")
    A = _check_set(action, A)
    g = action.group
    schedule = schedule or sorted({max(1, radius // 4), max(1, radius // 2), radius})
    per_point, witnesses, counts = {}, {}, {}
    certified = True
    top, ball = action.search_ball(max(schedule))
    for x in A:
        info = action.stabilizer(x)
        returns = [h for h in ball if action.act(h, x) in A]
        counts[x] = [sum(1 for h in returns if g.length(h) <= r) for r in schedule if r <= top]
        nontrivial = [h for h in returns if h != g.identity]
        if mode == "once":
            exact = info.nontrivial or any(y != x and action.same_orbit(x, y) for y in A)
            found = [h for h in nontrivial if g.length(h) <= radius]
            if found:
                witnesses[x] = g.word(found[0])
            if bool(found) != exact:
                certified = False
        else:
            exact = info.kind == "infinite"
            grows = len(counts[x]) >= 2 and counts[x][-1] > counts[x][-2]
            if nontrivial:
                witnesses[x] = g.word(nontrivial[-1])
            if grows != exact:
                certified = False
            certified = certified and info.certified
        per_point[x] = exact
    return RecurrenceResult(mode, per_point, all(per_point.values()), witnesses, certified, counts)


@dataclass
class WanderingSetReport:
    members: SetSpec
    refused: list
    covered: bool
    overlaps: int
    search_radius: int


def maximal_wandering_set(action, radius=10):
    """One representative per free orbit among the points of norm <= radius.

    The representative is the point with the smallest canonical label.
    Points in non-free orbits are refused and listed.  The report checks
    that translates of the representatives tile the enumerated free points
    exactly once.
    """
    reps, refused = [], []
    free_pts = []
    for x in action.points(radius):
        if action.stabilizer(x).nontrivial:
            refused.append(x)
            continue
        free_pts.append(x)
        if not any(action.same_orbit(x, y) for y in reps):
            reps.append(x)
    reps.sort(key=action.key)
    search = 2 * radius + max((action.space.norm(x) for x in reps), default=0)
    r, ball = action.search_ball(search)
    hits = {}
    for h in ball:
        for x in reps:
            y = action.act(h, x)
            hits[y] = hits.get(y, 0) + 1
    covered = all(hits.get(y, 0) >= 1 for y in free_pts)
    overlaps = sum(1 for y in free_pts if hits.get(y, 0) > 1)
    return WanderingSetReport(SetSpec(tuple(reps)), refused, covered, overlaps, r)


# -- the partition ---------------------------------------------------------


@dataclass
class HopfPartition:
    cells: dict
    orbit_cells: dict
    checks: dict
    reports: list

    @property
    def all_passed(self):
        return all(self.checks.values())

    def signature(self):
        return {c: sorted(map(repr, self.cells[c])) for c in CELLS}


def _orbit_representatives(action, points):
    reps = []
    for x in points:
        for i, y in enumerate(reps):
            if action.same_orbit(x, y):
                if action.key(x) < action.key(y):
                    reps[i] = x
                break
        else:
            reps.append(x)
    return sorted(reps, key=action.key)


def hopf_partition(action, depth=10, order_seed=None):
    """Assign every enumerated orbit to ``D_free``, ``D_cof \\ D_free`` or
    ``D \\ D_cof`` and verify the behavior promised for each cell.

    Countable models are purely atomic, so the continual part is empty.
    ``order_seed`` shuffles the enumeration; the result must not change.
    """
    pts = list(action.points(depth))
    if order_seed is not None:
        random.Random(order_seed).shuffle(pts)
    reps = _orbit_representatives(action, pts)
    cells = {c: [] for c in CELLS}
    orbit_cells = {}
    reports = []
    for x in reps:
        rep = classify_orbit(action, x, depth)
        reports.append(rep)
        cells[rep.cell].append(x)
        orbit_cells[x] = rep.cell

    radius = max(depth, 10)
    checks = {}
    if cells[D_FREE]:
        w = is_wandering(action, SetSpec(tuple(cells[D_FREE])), radius)
        checks["D_free admits a wandering set"] = w.wandering
    for x in cells[D_COF]:
        s = SetSpec((x,))
        once = is_recurrent(action, s, "once", radius).aggregate
        inf = is_recurrent(action, s, "infinitely", radius).aggregate
        wand = is_wandering(action, s, radius).wandering
        checks[f"{x!r} recurrent once"] = once
        checks[f"{x!r} not infinitely recurrent"] = not inf
        checks[f"{x!r} no wandering singleton"] = not wand
    for x in cells[D_REST]:
        checks[f"{x!r} infinitely recurrent"] = is_recurrent(action, SetSpec((x,)), "infinitely", radius).aggregate
    checks["equivalences agree"] = all(r.equivalences_checked["agree"] for r in reports)
    return HopfPartition(cells, orbit_cells, checks, reports)


def reweighted(action, seed=0):
    """The same action with masses multiplied by factors in ``[1/2, 2]``."""
    return CountableWeightedAction(
        group=action.group,
        space=action.space,
        weights=ReweightedWeights(action.weights, seed),
        images=action.images,
        perms=action.perms,
        invariant=False,
        name=f"{action.name} (reweighted {seed})",
    )


# -- configuration ---------------------------------------------------------

_ACTION_KEYS = {"name", "group", "space", "weights", "invariant"}


def _reject_unknown(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def action_from_dict(doc):
    """Build an action from its JSON description.

    ``{"group": {"type": "abelian", "rank": 1, "torsion": [2]},
    "space": {"type": "lattice", "rank": 1, "torsion": [], "copies": 1,
    "images": [[1], [0]]}, "weights": {"kind": "geometric", "ratio":
    "1/2"}, "invariant": false}``.  Other space types are ``regular`` and
    ``permutation`` (with ``size`` and ``perms``); other weight kinds are
    ``polynomial`` (with ``power``) and ``uniform-finite``.
    """
    _reject_unknown(doc, _ACTION_KEYS, "action")
    try:
        gdoc, sdoc, wdoc = doc["group"], doc["space"], doc["weights"]
    except KeyError as exc:
        raise ConfigError(f"action is missing {exc.args[0]!r}") from None

    _reject_unknown(gdoc, {"type", "rank", "torsion"}, "group")
    gtype = gdoc.get("type")
    if gtype == "abelian":
        group = AbelianGroup(int(gdoc.get("rank", 0)), gdoc.get("torsion", ()))
    elif gtype == "free":
        group = FreeGroup(int(gdoc.get("rank", 2)))
    else:
        raise ConfigError(f"unknown group type {gtype!r}")

    stype = sdoc.get("type") if isinstance(sdoc, dict) else None
    images = perms = None
    if stype == "lattice":
        _reject_unknown(sdoc, {"type", "rank", "torsion", "copies", "images"}, "space")
        space = LatticeSpace(int(sdoc.get("rank", 1)), tuple(sdoc.get("torsion", ())), int(sdoc.get("copies", 1)))
        if space.copies < 1 or space.rank < 0 or any(int(m) < 2 for m in space.torsion):
            raise ConfigError("invalid lattice space")
        images = sdoc.get("images")
    elif stype == "regular":
        _reject_unknown(sdoc, {"type"}, "space")
        if not isinstance(group, FreeGroup):
            raise ConfigError("the regular space needs a free group")
        space = FreeRegularSpace(group.rank)
    elif stype == "permutation":
        _reject_unknown(sdoc, {"type", "size", "perms"}, "space")
        space = PermutationSpace(int(sdoc.get("size", 0)))
        if space.size < 1:
            raise ConfigError("permutation space needs size >= 1")
        perms = sdoc.get("perms")
    else:
        raise ConfigError(f"unknown space type {stype!r}")

    _reject_unknown(wdoc, {"kind", "ratio", "power"}, "weights")
    kind = wdoc.get("kind")
    try:
        if kind == "geometric":
            weights = GeometricWeights(space, Fraction(str(wdoc.get("ratio", "1/2"))))
        elif kind == "polynomial":
            weights = PolynomialWeights(space, wdoc.get("power", 2))
        elif kind == "uniform-finite":
            weights = UniformFiniteWeights(space)
        else:
            raise ConfigError(f"unknown weight kind {kind!r}")
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad weights spec: {exc}") from None
    return CountableWeightedAction(
        group, space, weights, images=images, perms=perms, invariant=bool(doc.get("invariant", False)), name=doc.get("name", "")
    )


CANONICAL_ACTIONS = [
    {
        "name": "Z on Z by translation",
        "group": {"type": "abelian", "rank": 1},
        "space": {"type": "lattice", "rank": 1, "images": [[1]]},
        "weights": {"kind": "geometric", "ratio": "1/2"},
    },
    {
        "name": "Z on Z/5 by rotation",
        "group": {"type": "abelian", "rank": 1},
        "space": {"type": "lattice", "rank": 0, "torsion": [5], "images": [[1]]},
        "weights": {"kind": "uniform-finite"},
        "invariant": True,
    },
    {
        "name": "Z x Z/2 on Z through the Z factor",
        "group": {"type": "abelian", "rank": 1, "torsion": [2]},
        "space": {"type": "lattice", "rank": 1, "images": [[1], [0]]},
        "weights": {"kind": "geometric", "ratio": "1/2"},
    },
    {
        "name": "Z on two copies of Z",
        "group": {"type": "abelian", "rank": 1},
        "space": {"type": "lattice", "rank": 1, "copies": 2, "images": [[1]]},
        "weights": {"kind": "geometric", "ratio": "1/3"},
    },
]

EXTRA_ACTIONS = [
    {
        "name": "Z^2 on Z^2 by translation",
        "group": {"type": "abelian", "rank": 2},
        "space": {"type": "lattice", "rank": 2, "images": [[1, 0], [0, 1]]},
        "weights": {"kind": "polynomial", "power": 3},
    },
    {
        "name": "Z on Z by steps of 2",
        "group": {"type": "abelian", "rank": 1},
        "space": {"type": "lattice", "rank": 1, "images": [[2]]},
        "weights": {"kind": "geometric", "ratio": "2/3"},
    },
    {
        "name": "F_2 on itself",
        "group": {"type": "free", "rank": 2},
        "space": {"type": "regular"},
        "weights": {"kind": "geometric", "ratio": "1/5"},
    },
    {
        "name": "F_2 on 4 points",
        "group": {"type": "free", "rank": 2},
        "space": {"type": "permutation", "size": 4, "perms": [[1, 0, 2, 3], [0, 2, 3, 1]]},
        "weights": {"kind": "uniform-finite"},
        "invariant": True,
    },
    {
        "name": "Z/2 x Z/3 on 6 points",
        "group": {"type": "abelian", "rank": 0, "torsion": [2, 3]},
        "space": {"type": "lattice", "rank": 0, "torsion": [2, 3], "images": [[1, 0], [0, 1]]},
        "weights": {"kind": "uniform-finite"},
        "invariant": True,
    },
    {
        "name": "Z x Z/2 on Z x Z/2 (free)",
        "group": {"type": "abelian", "rank": 1, "torsion": [2]},
        "space": {"type": "lattice", "rank": 1, "torsion": [2], "images": [[1, 0], [0, 1]]},
        "weights": {"kind": "geometric", "ratio": "1/2"},
    },
]


def canonical_battery(extended=True):
    """The shipped test battery of actions."""
    docs = CANONICAL_ACTIONS + (EXTRA_ACTIONS if extended else [])
    return [action_from_dict(d) for d in docs]


def write_orbit_csv(path, rows):
    """One row per orbit; ``rows`` are ``(action_name, OrbitReport)`` pairs."""
    cols = ["action", "base_point", "cell", "freeness", "certified", "verdict", "mu_total_low", "mu_total_high", "iii", "iv", "v", "agree"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for name, rep in rows:
            d = rep.as_dict()
            eq = d["equivalences"]
            w.writerow([name, d["base_point"], d["cell"], d["freeness"], d["certified"], d["verdict"], d["mu_total_low"], d["mu_total_high"], eq["iii"], eq["iv"], eq["v"], eq["agree"]])
