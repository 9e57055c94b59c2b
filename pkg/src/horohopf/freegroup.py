"""Free groups, their boundary rays and Stallings core graphs.

Words are plain strings over ``a, b, c, ...`` with the upper-case letter
standing for the inverse generator, so ``"aB"`` is a b^-1.  All tree
quantities are exact integers or :class:`fractions.Fraction`.
"""

from __future__ import annotations

import string
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import MalformedWordError, UnsupportedBoundaryPointError
from .hyperbolic import OrbitProfile

__all__ = [
    "alphabet",
    "reduce",
    "inverse",
    "multiply",
    "word_key",
    "ball",
    "common_prefix",
    "EventuallyPeriodic",
    "SampledRay",
    "parse_ray",
    "StallingsGraph",
    "stallings_fold",
    "contains",
    "enumerate_ball",
    "tree_busemann",
    "cylinder_mass",
    "stream_density",
    "sample_uniform_ray",
    "HoroDecision",
    "decide_ep_horospheric",
    "TreeModel",
    "SubgroupOrbit",
]


def alphabet(k):
    """Return the ``2k`` letters of F_k ordered ``a, A, b, B, ...``."""
    if not 1 <= k <= 26:
        raise ValueError(f"rank must be in 1..26, got {k}")
    out = []
    for ch in string.ascii_lowercase[:k]:
        out += [ch, ch.upper()]
    return tuple(out)


def _check_letters(letters, k):
    for ch in letters:
        if ch not in string.ascii_letters:
            raise MalformedWordError(f"invalid symbol {ch!r}")
        if k is not None and ord(ch.lower()) - ord("a") >= k:
            raise MalformedWordError(f"symbol {ch!r} is not a generator of F_{k}")


def reduce(letters, k=None):
    """Freely reduce a word given as a string or iterable of letters."""
    if not isinstance(letters, str):
        letters = "".join(letters)
    _check_letters(letters, k)
    stack = []
    for ch in letters:
        if stack and stack[-1] == ch.swapcase():
            stack.pop()
        else:
            stack.append(ch)
    return "".join(stack)


def inverse(w):
    return w[::-1].swapcase()


def multiply(*words):
    return reduce("".join(words))


def word_key(w):
    """Canonical total order: shorter first, then letterwise ``a<A<b<B``."""
    return (len(w), tuple(2 * (ord(ch.lower()) - 97) + ch.isupper() for ch in w))


def ball(k, radius):
    """All reduced words of length at most ``radius`` in canonical order."""
    letters = alphabet(k)
    out = [""]
    layer = [""]
    for _ in range(radius):
        nxt = []
        for w in layer:
            for ch in letters:
                if not w or w[-1] != ch.swapcase():
                    nxt.append(w + ch)
        out += nxt
        layer = nxt
    return out


def common_prefix(w, ray):
    """Length of the common prefix of a finite word and a word or ray."""
    other = ray if isinstance(ray, str) else ray.head(len(w))
    n = 0
    for x, y in zip(w, other):
        if x != y:
            break
        n += 1
    return n


# -- boundary rays ---------------------------------------------------------


def _primitive_root(v):
    n = len(v)
    for d in range(1, n + 1):
        if n % d == 0 and v[:d] * (n // d) == v:
            return v[:d]
    return v


@dataclass(frozen=True)
class EventuallyPeriodic:
    """The ray ``prefix . period . period ...`` in canonical form.

    Construction canonicalizes: the period is replaced by its primitive
    root and the prefix is shortened as far as possible.
    """

    prefix: str
    period: str

    def __post_init__(self):
        u, v = self.prefix, self.period
        _check_letters(u + v, None)
        if not v:
            raise MalformedWordError("period must be nonempty")
        if reduce(v) != v or v[-1] == v[0].swapcase():
            raise MalformedWordError(f"period {v!r} is not cyclically reduced")
        if reduce(u) != u or (u and u[-1] == v[0].swapcase()):
            raise MalformedWordError(f"{u!r}.{v!r}^inf is not reduced as written")
        v = _primitive_root(v)
        while u and u[-1] == v[-1]:
            u = u[:-1]
            v = v[-1] + v[:-1]
        object.__setattr__(self, "prefix", u)
        object.__setattr__(self, "period", v)

    def letter(self, i):
        """0-based letter ``i`` of the ray."""
        if i < len(self.prefix):
            return self.prefix[i]
        return self.period[(i - len(self.prefix)) % len(self.period)]

    def head(self, n):
        u, v = self.prefix, self.period
        if n <= len(u):
            return u[:n]
        m = n - len(u)
        return u + v * (m // len(v)) + v[: m % len(v)]

    def translate(self, g):
        """The ray ``g . omega`` (left multiplication)."""
        reps = len(g) // len(self.period) + 2
        return EventuallyPeriodic(reduce(g + self.prefix + self.period * reps), self.period)

    @property
    def rank(self):
        letters = set((self.prefix + self.period).lower())
        return max(ord(ch) - 96 for ch in letters)

    def __str__(self):
        return f"{self.prefix}({self.period})"


class SampledRay:
    """A uniformly distributed non-backtracking ray, generated lazily.

    Letters are produced in fixed blocks from a numpy generator seeded by
    ``seed`` (an int or :class:`numpy.random.SeedSequence`) so that every
    prefix is reproducible regardless of how it is requested.
    """

    _BLOCK = 64

    def __init__(self, k, seed):
        self.k = k
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._letters = []
        self._letter_set = alphabet(k)

    def _extend(self, n):
        letters = self._letter_set
        span = 2 * self.k * (2 * self.k - 1)
        while len(self._letters) < n:
            # one draw per letter; r mod 2k and r mod (2k-1) are both uniform
            for r in self._rng.integers(0, span, size=self._BLOCK):
                if not self._letters:
                    self._letters.append(letters[r % (2 * self.k)])
                else:
                    back = self._letters[-1].swapcase()
                    choices = [ch for ch in letters if ch != back]
                    self._letters.append(choices[r % (2 * self.k - 1)])

    def letter(self, i):
        self._extend(i + 1)
        return self._letters[i]

    def head(self, n):
        self._extend(n)
        return "".join(self._letters[:n])

    def translate(self, g):
        raise NotImplementedError("sampled rays are not closed under translation")

    @property
    def rank(self):
        return self.k

    def __repr__(self):
        return f"SampledRay(k={self.k}, seed={self.seed!r})"

    def __str__(self):
        return f"sampled:{self.head(12)}..."


def parse_ray(text):
    """Parse ``"u(v)"`` into an :class:`EventuallyPeriodic` ray, e.g. ``"b(a)"``."""
    text = text.strip()
    if not text.endswith(")") or "(" not in text:
        raise MalformedWordError(f"ray {text!r} must look like 'prefix(period)'")
    u, v = text[:-1].split("(", 1)
    return EventuallyPeriodic(u, v)


def sample_uniform_ray(k, seed, length=1):
    """Sample a ray from the uniform boundary measure; ``length`` letters are
    materialized immediately (more are produced on demand)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    ray = SampledRay(k, seed)
    ray.head(length)
    return ray


# -- Stallings graphs ------------------------------------------------------


@dataclass(frozen=True)
class StallingsGraph:
    """Folded core graph; vertex 0 is the base vertex.

    ``edges`` maps ``(vertex, letter)`` to the target vertex and contains
    both orientations of every edge.
    """

    k: int
    n_vertices: int
    edges: dict = field(hash=False)

    base = 0

    def out(self, v):
        return {x: w for (u, x), w in self.edges.items() if u == v}

    def step(self, v, letter):
        return self.edges.get((v, letter))

    def read(self, w, start=0):
        """Read ``w`` from ``start``; return (end vertex or None, letters read)."""
        v = start
        for i, ch in enumerate(w):
            nxt = self.edges.get((v, ch))
            if nxt is None:
                return None, i
            v = nxt
        return v, len(w)

    def degree(self, v):
        return sum(1 for (u, _x) in self.edges if u == v)

    def return_path(self, v):
        """A shortest word leading from ``v`` back to the base vertex."""
        prev = {v: None}
        queue = deque([v])
        while queue:
            u = queue.popleft()
            if u == self.base:
                break
            for x in alphabet(self.k):
                w = self.edges.get((u, x))
                if w is not None and w not in prev:
                    prev[w] = (u, x)
                    queue.append(w)
        if self.base not in prev:
            raise ValueError(f"vertex {v} is disconnected from the base")
        path = []
        u = self.base
        while prev[u] is not None:
            u, x = prev[u]
            path.append(x)
        return "".join(reversed(path))

    def to_text(self):
        """Adjacency dump: a header line then one ``src letter dst`` line per
        positively labelled edge."""
        lines = [f"# stallings k={self.k} vertices={self.n_vertices} base=0"]
        for (u, x), w in sorted(self.edges.items(), key=lambda e: (e[0][0], word_key(e[0][1]), e[1])):
            if x.islower():
                lines.append(f"{u} {x} {w}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        k = n = None
        edges = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("k="):
                        k = int(tok[2:])
                    elif tok.startswith("vertices="):
                        n = int(tok[9:])
                continue
            u, x, w = line.split()
            edges[(int(u), x)] = int(w)
            edges[(int(w), x.upper())] = int(u)
        return cls(k, n, edges)


def stallings_fold(generators, k=None):
    """Fold the wedge of loops spelled by ``generators`` into a core graph."""
    words = [reduce(g, k) for g in generators]
    words = [w for w in words if w]
    if k is None:
        k = max((ord(ch.lower()) - 96 for w in words for ch in w), default=1)
    n = 1
    raw = []  # (u, positive letter, v)
    for w in words:
        path = [0] + list(range(n, n + len(w) - 1)) + [0]
        n += len(w) - 1
        for i, ch in enumerate(w):
            u, v = path[i], path[i + 1]
            raw.append((u, ch, v) if ch.islower() else (v, ch.lower(), u))

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        x, y = find(x), find(y)
        if x == y:
            return
        if y == 0:
            x, y = y, x
        parent[y] = x

    changed = True
    while changed:
        changed = False
        table = {}
        for u, x, v in raw:
            u, v = find(u), find(v)
            for key, tgt in (((u, x), v), ((v, x.upper()), u)):
                prior = table.get(key)
                if prior is not None and find(prior) != find(tgt):
                    union(prior, tgt)
                    changed = True
                else:
                    table[key] = tgt

    edges = {}
    for u, x, v in raw:
        u, v = find(u), find(v)
        edges[(u, x)] = v
        edges[(v, x.upper())] = u

    # prune hanging trees: every non-base vertex must have degree >= 2
    while True:
        deg = {}
        for (u, _x) in edges:
            deg[u] = deg.get(u, 0) + 1
        leaves = {u for u, d in deg.items() if d == 1 and u != 0}
        if not leaves:
            break
        edges = {(u, x): v for (u, x), v in edges.items() if u not in leaves and v not in leaves}

    # canonical relabelling by BFS from the base in letter order
    letters = alphabet(k)
    order = {0: 0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for x in letters:
            v = edges.get((u, x))
            if v is not None and v not in order:
                order[v] = len(order)
                queue.append(v)
    relabelled = {(order[u], x): order[v] for (u, x), v in edges.items()}
    return StallingsGraph(k, len(order), relabelled)


def contains(graph, w):
    """Membership of a word in the subgroup read by ``graph``."""
    end, _ = graph.read(reduce(w, graph.k))
    return end == graph.base


def enumerate_ball(graph, radius):
    """Subgroup elements of length at most ``radius``, canonically ordered."""
    letters = alphabet(graph.k)
    found = [""]
    stack = [("", graph.base)]
    while stack:
        w, v = stack.pop()
        if len(w) == radius:
            continue
        for x in letters:
            if w and w[-1] == x.swapcase():
                continue
            nxt = graph.edges.get((v, x))
            if nxt is None:
                continue
            if nxt == graph.base:
                found.append(w + x)
            stack.append((w + x, nxt))
    return sorted(found, key=word_key)


# -- Busemann cocycle and the uniform stream -------------------------------


def tree_busemann(omega, x, y):
    """Exact Busemann cocycle ``beta_omega(x, y)`` on the Cayley tree."""
    return (len(y) - 2 * common_prefix(y, omega)) - (len(x) - 2 * common_prefix(x, omega))


def cylinder_mass(k, w):
    """Uniform measure of the cylinder of rays starting with ``w``."""
    if k < 2:
        raise ValueError("the uniform stream needs k >= 2")
    if not w:
        return Fraction(1)
    return Fraction(1, 2 * k * (2 * k - 1) ** (len(w) - 1))


def stream_density(k, g, omega):
    """``d g.lambda / d lambda (omega)`` for the uniform boundary measure,
    computed as a ratio of cylinder masses once it has stabilized."""
    g = reduce(g, k)
    n = len(g) + 1
    head = omega.head(n)
    return cylinder_mass(k, reduce(inverse(g) + head)) / cylinder_mass(k, head)


@dataclass
class HoroDecision:
    in_big_horospheric: bool
    exit_position: int | None = None
    witnesses: list = field(default_factory=list)

    def as_dict(self):
        return {
            "in_big_horospheric": self.in_big_horospheric,
            "exit_position": self.exit_position,
            "witnesses": [{"h": h, "beta": b} for h, b in self.witnesses],
        }


def decide_ep_horospheric(graph, omega, n_witnesses=6):
    """Exact membership of an eventually periodic ray in the big horospheric
    limit set of the subgroup read by ``graph``.

    The ray belongs to the set exactly when it can be read forever from the
    base vertex.  Otherwise ``exit_position`` is the 1-based index of the
    first letter with no matching edge.
    """
    if not isinstance(omega, EventuallyPeriodic):
        raise TypeError("exact decisions need an eventually periodic ray")
    u, v = omega.prefix, omega.period
    end, read = graph.read(u)
    if end is None:
        return HoroDecision(False, exit_position=read + 1)
    seen = set()
    pos = len(u)
    while end not in seen:
        seen.add(end)
        nxt, read = graph.read(v, end)
        if nxt is None:
            return HoroDecision(False, exit_position=pos + read + 1)
        end = nxt
        pos += len(v)

    witnesses = []
    step = max(1, len(v))
    c = len(u)
    for _ in range(n_witnesses):
        head = omega.head(c)
        vertex, _ = graph.read(head)
        h = reduce(head + graph.return_path(vertex))
        witnesses.append((h, len(h) - 2 * common_prefix(h, omega)))
        c += step * max(1, graph.n_vertices)
    return HoroDecision(True, witnesses=witnesses)


# -- model and orbit counting ----------------------------------------------


class TreeModel:
    """The Cayley tree of F_k as a space model (points are reduced words)."""

    delta = 0
    defect = 0
    exact = True

    def __init__(self, k):
        self.k = k
        self.basepoint = ""

    def distance(self, x, y):
        return len(reduce(inverse(x) + y))

    def _ray(self, omega):
        if not isinstance(omega, (EventuallyPeriodic, SampledRay)):
            raise UnsupportedBoundaryPointError(f"{omega!r} is not a boundary ray of F_{self.k}")
        if omega.rank > self.k:
            raise UnsupportedBoundaryPointError(f"ray {omega} uses letters outside F_{self.k}")
        return omega

    def boundary_approach(self, omega, n):
        return self._ray(omega).head(n)

    def exact_busemann(self, omega, x, y):
        return tree_busemann(self._ray(omega), x, y)

    def act(self, g, x):
        return reduce(g + x)

    def act_boundary(self, g, omega):
        return omega.translate(g)

    def ray_distance(self, omega, x):
        """Distance from ``x`` to the geodesic ray from the base to omega."""
        return len(x) - common_prefix(x, omega)


class SubgroupOrbit:
    """Orbit of the base vertex under H <= F_k, counted by transfer matrices.

    Every h in H factors uniquely as ``omega_c . s`` where ``c`` is the
    common prefix with the ray.  ``profile`` tabulates the number of such
    h for each pair ``(c, |s|)``, which determines the displacement
    ``c + |s|`` and the Busemann value ``|s| - c`` exactly; no element is
    ever enumerated.
    """

    exact = True

    def __init__(self, graph):
        self.graph = graph
        self.k = graph.k
        self.model = TreeModel(graph.k)
        self._tables = [None]
        self._succ = None

    def _paths(self, length):
        """``f[L][(v, x)]``: reduced paths of length L starting with edge
        ``(v, x)`` and ending at the base vertex."""
        g = self.graph
        if self._succ is None:
            self._succ = {
                (v, x): [(w, y) for (u, y) in g.edges if u == w and y != x.swapcase()]
                for (v, x), w in g.edges.items()
            }
        while len(self._tables) <= length:
            if len(self._tables) == 1:
                table = {key: int(w == g.base) for key, w in g.edges.items()}
            else:
                prev = self._tables[-1]
                table = {key: sum(prev[e] for e in nxt) for key, nxt in self._succ.items()}
            self._tables.append(table)
        return self._tables[length]

    def profile(self, omega, r_max):
        """Rows ``(displacement, beta_out, beta_back, tube, multiplicity)``.

        ``beta_out`` is beta_omega(o, h o) and ``beta_back`` is
        beta_omega(h o, o); tube is the distance to the ray o -> omega.
        """
        g = self.graph
        rows = []
        v = g.base
        head = omega.head(r_max + 1)
        for c in range(r_max + 1):
            if c > 0:
                v = g.step(v, head[c - 1])
                if v is None:
                    break
            if v == g.base:
                rows.append((c, -c, c, 0, 1))
            forbidden = {head[c]}
            if c > 0:
                forbidden.add(head[c - 1].swapcase())
            starts = [x for (u, x) in g.edges if u == v and x not in forbidden]
            for L in range(1, r_max - c + 1):
                table = self._paths(L)
                mult = sum(table[(v, x)] for x in starts)
                if mult:
                    rows.append((c + L, L - c, c - L, L, mult))
        return OrbitProfile.from_rows(rows, exact=True)

    def exact_decision(self, omega):
        if isinstance(omega, EventuallyPeriodic):
            return decide_ep_horospheric(self.graph, omega)
        return None
