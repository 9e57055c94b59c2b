"""Boundary-point classification into conservative and dissipative parts.

A boundary point omega is conservative for the boundary action of a
discrete group G exactly when it lies in the big horospheric limit set,
i.e. some horoball at omega contains infinitely many orbit points, and
equivalently when the Poincare-Busemann series

    S = sum_g exp(D * beta_omega(g o, o))

diverges.  Both are tested on truncated orbits: the occupancy table

    N(t, R) = #{g : d(o, g o) <= R, beta_omega(o, g o) <= t}

over a grid of levels t and a radius schedule, and the partial sums S(R).

Orbit objects (``SubgroupOrbit``, ``DiskOrbit`` or :class:`EnumeratedOrbit`)
supply ``profile(omega, r_max)`` and ``exact_decision(omega)``.
"""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from statistics import NormalDist

import numpy as np

from . import disk as dk
from . import freegroup as fg
from .errors import DecisionConflictError, InvariantViolation, StreamAuditError
from .hyperbolic import OrbitProfile, busemann

__all__ = [
    "StreamSpec",
    "tree_stream",
    "visual_stream",
    "reweighted_stream",
    "ClassifierParams",
    "OccupancyTable",
    "PointVerdict",
    "EnumeratedOrbit",
    "occupancy_table",
    "poincare_partial_sums",
    "classify_point",
    "small_horo_probe",
    "radial_probe",
    "AuditReport",
    "quasiconformality_audit",
    "TreeRaySampler",
    "CircleSampler",
    "MassEstimate",
    "LowConfidenceWarning",
    "wilson_interval",
    "monte_carlo_mass",
    "write_occupancy_csv",
]

LABELS = ("conservative", "dissipative", "inconclusive")


class LowConfidenceWarning(UserWarning):
    """More than 20% of the Monte Carlo samples were inconclusive."""


# -- streams ---------------------------------------------------------------


class _TreeDensity:
    def __init__(self, k):
        self.k = k

    def __call__(self, g, omega):
        return fg.stream_density(self.k, g, omega)


class _VisualDensity:
    def __call__(self, g, xi):
        return dk.visual_density(g, xi)


@dataclass(frozen=True)
class StreamSpec:
    """A quasi-conformal stream given by its dimension, defect and density.

    ``density(g, omega)`` returns ``d g.lambda / d lambda (omega)``, which
    must stay within a factor ``exp(defect)`` of
    ``exp(dimension * beta_omega(g o, o))``.  ``exact_base`` is set when
    ``exp(dimension)`` is an integer and densities are exact rationals.
    """

    dimension: float
    defect: float
    density: object
    exact_base: int | None = None
    name: str = "custom"


def tree_stream(k):
    """Uniform measure on the boundary of F_k: dimension log(2k-1), defect 0."""
    return StreamSpec(math.log(2 * k - 1), 0.0, _TreeDensity(k), exact_base=2 * k - 1, name=f"uniform-F{k}")


def visual_stream():
    """Normalized arc length on the circle: dimension 1, defect 0."""
    return StreamSpec(1.0, 0.0, _VisualDensity(), name="visual")


class _ReweightedDensity:
    """``u(g^-1 omega) / u(omega) * density`` for a bounded ``u`` in ``[1/2, 2]``.

    This is the density of the equivalent stream ``u . lambda``.
    """

    def __init__(self, base, seed, prefix=8):
        self.base = base
        self.seed = seed
        self.prefix = prefix

    def u(self, omega):
        if isinstance(omega, str):
            h = hashlib.sha256(f"{self.seed}:{omega}".encode()).digest()
            return Fraction(100 + int.from_bytes(h[:8], "big") % 301, 200)
        theta = math.atan2(omega.imag, omega.real)
        return 1.25 + 0.75 * math.sin(3 * theta + self.seed)

    def __call__(self, g, omega):
        if isinstance(g, str):
            m = self.prefix
            here = omega.head(m)
            moved = fg.reduce(fg.inverse(g) + omega.head(len(g) + m))[:m]
            return self.u(moved) / self.u(here) * self.base(g, omega)
        xi = complex(omega)
        moved = dk.mobius_apply(g.inverse(), xi)
        return self.u(moved) / self.u(xi) * self.base(g, omega)


def reweighted_stream(stream, seed=0):
    """The stream of the equivalent measure ``u . lambda`` with ``u`` in
    ``[1/2, 2]``; its defect grows by ``log 4``."""
    return StreamSpec(
        stream.dimension,
        stream.defect + math.log(4),
        _ReweightedDensity(stream.density, seed),
        exact_base=None,
        name=f"{stream.name}-reweighted{seed}",
    )


# -- parameters and records ------------------------------------------------


@dataclass
class ClassifierParams:
    """Finite surrogates for the quantifiers of the classification.

    Attributes
    ----------
    radius_schedule : increasing radii R_1 < ... < R_m (m >= 3)
    thresholds : horoball levels t (negative values feed the small
        horospheric probe)
    growth_window : new occupancy hits per step that count as growth
    cauchy_eps : bound on series increments for convergence
    c_grid : tube widths for the radial probe
    series : ``"busemann"`` sums exp(D beta); ``"density"`` sums the
        stream densities themselves (needs enumerated elements)
    """

    radius_schedule: tuple = (5, 10, 15, 20, 25, 30)
    thresholds: tuple = tuple(range(-10, 11))
    growth_window: int = 1
    cauchy_eps: float = 1e-5
    c_grid: tuple = (0, 1, 2, 4)
    sample_count: int = 1000
    seed: int = 0
    tolerance: float = 1e-9
    series: str = "busemann"
    use_exact: bool = True

    def __post_init__(self):
        self.radius_schedule = tuple(self.radius_schedule)
        self.thresholds = tuple(sorted(set(self.thresholds)))
        self.c_grid = tuple(sorted(set(self.c_grid)))
        sched = self.radius_schedule
        if len(sched) < 3 or any(b <= a for a, b in zip(sched, sched[1:])) or sched[0] < 0:
            raise ValueError("radius_schedule must be strictly increasing with at least 3 radii")
        if not self.cauchy_eps > 0:
            raise ValueError("cauchy_eps must be positive")
        if self.growth_window < 1:
            raise ValueError("growth_window must be >= 1")
        if not self.thresholds:
            raise ValueError("thresholds must be nonempty")
        if self.series not in ("busemann", "density"):
            raise ValueError("series must be 'busemann' or 'density'")

    @property
    def r_max(self):
        return self.radius_schedule[-1]


@dataclass
class OccupancyTable:
    """``counts[i, j] = N(thresholds[i], radii[j])``.

    For float models ``counts`` holds the certain count (level exceeded by
    more than the tolerance) and ``counts_max`` the count including
    boundary cases; they coincide when ``boundary_cases == 0``.
    """

    radii: tuple
    thresholds: tuple
    counts: np.ndarray
    counts_max: np.ndarray
    boundary_cases: int = 0

    def row(self, t):
        return self.counts[self.thresholds.index(t)]


@dataclass
class PointVerdict:
    ray: str
    radii: tuple
    thresholds: tuple
    occupancy: OccupancyTable
    series_partials: list
    label: str
    heuristic_label: str
    prefix_labels: list
    flags: dict = field(default_factory=dict)

    def to_record(self):
        def num(x):
            return str(x) if isinstance(x, Fraction) else float(x)

        rec = {
            "ray": self.ray,
            "label": self.label,
            "heuristic_label": self.heuristic_label,
            "radii": list(self.radii),
            "thresholds": list(self.thresholds),
            "occupancy": self.occupancy.counts.tolist(),
            "series_partials": [num(s) for s in self.series_partials],
            "prefix_labels": list(self.prefix_labels),
            "flags": dict(self.flags),
        }
        if self.occupancy.boundary_cases:
            rec["occupancy_max"] = self.occupancy.counts_max.tolist()
        return rec


# -- brute-force orbits ----------------------------------------------------


class EnumeratedOrbit:
    """Orbit given by an explicit list of group elements.

    Used as an independent oracle for the transfer-matrix counts of
    ``SubgroupOrbit`` and for density-mode series, which need the
    elements themselves.  Geometry comes from the generic model interface.
    """

    def __init__(self, model, elements, decider=None):
        self.model = model
        self.elements = list(elements)
        self.exact = bool(getattr(model, "exact", False))
        self._decider = decider
        o = model.basepoint
        self._points = [model.act(g, o) for g in self.elements]
        self.displacement = [model.distance(o, x) for x in self._points]

    @classmethod
    def from_graph(cls, graph, radius):
        elems = fg.enumerate_ball(graph, radius)
        return cls(fg.TreeModel(graph.k), elems, decider=partial(fg.decide_ep_horospheric, graph))

    @classmethod
    def from_ball(cls, ball):
        return cls(dk.DiskModel(), list(ball))

    def within(self, r_max):
        return [(g, d) for g, d in zip(self.elements, self.displacement) if d <= r_max]

    def profile(self, omega, r_max):
        model, o = self.model, self.model.basepoint
        rows = []
        for x, d in zip(self._points, self.displacement):
            if d > r_max:
                continue
            out = busemann(model, omega, o, x).value
            back = busemann(model, omega, x, o).value
            rows.append((d, out, back, model.ray_distance(omega, x), 1))
        return OrbitProfile.from_rows(rows, exact=self.exact)

    def exact_decision(self, omega):
        if self._decider is not None and isinstance(omega, fg.EventuallyPeriodic):
            return self._decider(omega)
        return None


def _elements_within(orbit, r_max):
    if isinstance(orbit, EnumeratedOrbit):
        return orbit.within(r_max)
    if isinstance(orbit, dk.DiskOrbit):
        ball = orbit.ball.restrict(r_max)
        return list(zip(ball, ball.displacement))
    raise TypeError("density-mode series need an orbit with enumerated elements")


# -- tables ----------------------------------------------------------------


def occupancy_table(orbit, omega, params, profile=None):
    """Horoball occupancy ``N(t, R)``, identity included.

    Exact for integer profiles.  For float profiles values of ``beta``
    within ``params.tolerance`` of a level are boundary cases: they are
    excluded from ``counts`` and included in ``counts_max``.
    """
    prof = profile if profile is not None else orbit.profile(omega, params.r_max)
    radii = np.array(params.radius_schedule)
    levels = np.array(params.thresholds, dtype=float)
    inside = (prof.displacement[:, None] <= radii[None, :]) * prof.multiplicity[:, None]
    if prof.exact:
        hit = (prof.beta_out[None, :] <= levels[:, None]).astype(np.int64)
        counts = hit @ inside
        return OccupancyTable(params.radius_schedule, params.thresholds, counts, counts.copy(), 0)
    tol = params.tolerance
    lo = (prof.beta_out[None, :] <= levels[:, None] - tol).astype(np.int64)
    hi = (prof.beta_out[None, :] <= levels[:, None] + tol).astype(np.int64)
    counts, counts_max = lo @ inside, hi @ inside
    boundary = int((hi - lo).sum())
    return OccupancyTable(params.radius_schedule, params.thresholds, counts, counts_max, boundary)


def poincare_partial_sums(orbit, omega, stream, params, profile=None):
    """Partial sums ``S(R)`` of the Poincare-Busemann series along the schedule.

    Exact rationals when the profile is exact and the stream has an
    integer base; otherwise floats accumulated in the log domain.  In
    ``density`` mode the terms are the stream densities ``d g.lambda /
    d lambda (omega)`` of the enumerated elements.
    """
    radii = params.radius_schedule
    if params.series == "density":
        pairs = _elements_within(orbit, params.r_max)
        terms = [(d, stream.density(g, omega)) for g, d in pairs]
        if all(isinstance(v, (Fraction, int)) for _, v in terms):
            return [sum((v for d, v in terms if d <= r), Fraction(0)) for r in radii]
        disp = np.array([d for d, _ in terms], dtype=float)
        logs = np.log(np.array([float(v) for _, v in terms]))
        return [_logsum_exp(logs[disp <= r]) for r in radii]

    prof = profile if profile is not None else orbit.profile(omega, params.r_max)
    if prof.exact and stream.exact_base:
        base = stream.exact_base
        shift = params.r_max
        out = []
        for r in radii:
            sel = prof.displacement <= r
            total = sum(int(m) * base ** (int(b) + shift) for m, b in zip(prof.multiplicity[sel], prof.beta_back[sel]))
            out.append(Fraction(total, base**shift))
        return out
    logs = np.log(prof.multiplicity.astype(float)) + stream.dimension * prof.beta_back.astype(float)
    return [_logsum_exp(logs[prof.displacement <= r]) for r in radii]


def _logsum_exp(logs):
    if len(logs) == 0:
        return 0.0
    return float(np.exp(np.logaddexp.reduce(logs)))


# -- labels ----------------------------------------------------------------


def _grows(row, window):
    """Growth by at least ``window`` on each of the last two steps."""
    return row[-1] - row[-2] >= window and row[-2] - row[-3] >= window


def _increments(partials):
    return [b - a for a, b in zip(partials, partials[1:])]


def _geometric_growth(partials, eps):
    inc = _increments(partials)
    if len(inc) < 3:
        return False
    a, b, c = inc[-3:]
    return a > 0 and b >= a and c >= b and c >= eps


def _label(counts_lo, counts_hi, partials, params):
    """Three-valued label from the first ``m`` schedule columns."""
    m = counts_lo.shape[1]
    w = params.growth_window
    if any(_grows(row, w) for row in counts_lo) or _geometric_growth(partials, params.cauchy_eps):
        return "conservative"
    h = m // 2
    # constant whichever way the boundary cases are resolved
    flat = bool(np.all(counts_lo[:, -1] == counts_lo[:, h]) and np.all(counts_hi[:, -1] == counts_hi[:, h]))
    small = all(abs(x) < params.cauchy_eps for x in _increments(partials)[h:])
    if flat and small:
        return "dissipative"
    return "inconclusive"


def small_horo_probe(table, params):
    """Growth at every level of the grid, the finite surrogate for the
    small horospheric limit set (exploratory only)."""
    return all(_grows(row, params.growth_window) for row in table.counts)


def radial_probe(orbit, omega, params, profile=None):
    """Growth of ``#{g : dist(g o, ray(o, omega)) <= c}`` for some ``c``."""
    prof = profile if profile is not None else orbit.profile(omega, params.r_max)
    for c in params.c_grid:
        near = prof.tube <= c + (0 if prof.exact else params.tolerance)
        row = [int(prof.multiplicity[near & (prof.displacement <= r)].sum()) for r in params.radius_schedule]
        if _grows(row, params.growth_window):
            return True
    return False


def _check_invariants(table, partials, stream, params):
    c = table.counts
    if np.any(np.diff(c, axis=0) < 0) or np.any(np.diff(c, axis=1) < 0):
        raise InvariantViolation("occupancy is not monotone in t and R")
    if any(b < a for a, b in zip(partials, partials[1:])):
        raise InvariantViolation("series partial sums decrease")
    for i, t in enumerate(table.thresholds):
        if t < 0:
            continue
        for j, s in enumerate(partials):
            floor = c[i, j] * math.exp(stream.dimension * (-t) - stream.defect)
            if float(s) < floor * (1 - 1e-12):
                raise InvariantViolation(f"S(R) < N(t, R) exp(-D t - C) at t={t}, R={table.radii[j]}")


def _ray_label(omega):
    if isinstance(omega, fg.SampledRay):
        return f"sampled:{omega.head(24)}"
    if isinstance(omega, (complex, float, int, np.complexfloating)):
        xi = complex(omega)
        return f"angle:{math.atan2(xi.imag, xi.real)!r}"
    return str(omega)


def classify_point(orbit, omega, stream, params, profile=None):
    """Classify one boundary point.

    conservative
        some level shows occupancy growth on each of the last two schedule
        steps, or the series increments grow geometrically;
    dissipative
        every level is constant over the last half of the schedule and the
        series increments there are below ``cauchy_eps``;
    inconclusive
        otherwise.

    An exact decision, when the orbit offers one, sets the final label.

    Raises
    ------
    DecisionConflictError
        A definite heuristic label contradicts the exact decision.
    InvariantViolation
        Occupancy or series monotonicity, or the series/occupancy
        inequality, fails.
    """
    prof = profile if profile is not None else orbit.profile(omega, params.r_max)
    table = occupancy_table(orbit, omega, params, prof)
    partials = poincare_partial_sums(orbit, omega, stream, params, prof)
    _check_invariants(table, partials, stream, params)

    m = len(params.radius_schedule)
    prefix = [_label(table.counts[:, :j], table.counts_max[:, :j], partials[:j], params) for j in range(3, m + 1)]
    heuristic = prefix[-1]
    label = heuristic
    decision = orbit.exact_decision(omega) if params.use_exact else None
    if decision is not None:
        label = "conservative" if decision.in_big_horospheric else "dissipative"
        if heuristic != "inconclusive" and heuristic != label:
            raise DecisionConflictError(
                f"exact decision {label} contradicts heuristic {heuristic} for {_ray_label(omega)}"
            )
    flags = {
        "small_horospheric_probe": small_horo_probe(table, params),
        "radial_probe": radial_probe(orbit, omega, params, prof),
        "exact_decision": None if decision is None else decision.as_dict(),
        "boundary_cases": table.boundary_cases,
    }
    return PointVerdict(
        ray=_ray_label(omega),
        radii=params.radius_schedule,
        thresholds=params.thresholds,
        occupancy=table,
        series_partials=partials,
        label=label,
        heuristic_label=heuristic,
        prefix_labels=prefix,
        flags=flags,
    )


# -- stream audit ----------------------------------------------------------


@dataclass
class AuditReport:
    max_deviation: float
    witness: tuple | None
    checked: int
    bound: float
    exact: bool

    @property
    def passed(self):
        return self.max_deviation <= self.bound


def quasiconformality_audit(stream, model, pairs, tol=1e-9, raise_on_fail=True):
    """Worst ``|log density(g, omega) - D beta_omega(g o, o)|`` over ``pairs``.

    Exact integer-power comparison is used for exact streams, so the tree
    audit reports 0 with no rounding at all.

    Raises
    ------
    StreamAuditError
        The worst deviation exceeds ``defect + tol`` (when ``raise_on_fail``).
    """
    o = model.basepoint
    # models whose points lose resolution near the boundary evaluate
    # beta_omega(g o, o) from g itself
    stable = getattr(model, "orbit_busemann", None)
    worst, witness, n = 0.0, None, 0
    exact = True
    for g, omega in pairs:
        n += 1
        dens = stream.density(g, omega)
        if stable is not None:
            beta = stable(g, omega)
        else:
            beta = busemann(model, omega, model.act(g, o), o).value
        if stream.exact_base and isinstance(dens, Fraction) and isinstance(beta, int):
            if dens == Fraction(stream.exact_base) ** beta:
                continue
            dev = abs(math.log(dens) - stream.dimension * beta)
        else:
            exact = False
            dev = abs(math.log(float(dens)) - stream.dimension * float(beta))
        if dev > worst:
            worst, witness = dev, (g, omega)
    report = AuditReport(worst, witness, n, stream.defect + tol, exact)
    if raise_on_fail and not report.passed:
        raise StreamAuditError(f"stream {stream.name} deviates by {worst} > {report.bound}", witness=witness)
    return report


# -- Monte Carlo -----------------------------------------------------------


def _seed_sequence(seed, i):
    return np.random.SeedSequence(seed, spawn_key=(i,))


class TreeRaySampler:
    """Rays of F_k distributed by the uniform boundary measure."""

    def __init__(self, k):
        self.k = k

    def __call__(self, seed, i):
        return fg.SampledRay(self.k, _seed_sequence(seed, i))


class CircleSampler:
    """Points of the unit circle distributed by normalized arc length."""

    def __call__(self, seed, i):
        u = np.random.default_rng(_seed_sequence(seed, i)).random()
        return complex(np.exp(2j * np.pi * u))


@dataclass
class MassEstimate:
    fraction: float
    interval: tuple
    conservative: int
    dissipative: int
    inconclusive: int
    samples: int
    fraction_by_radius: list
    records: list

    @property
    def inconclusive_rate(self):
        return self.inconclusive / self.samples if self.samples else 0.0

    @property
    def low_confidence(self):
        return self.inconclusive_rate > 0.2

    def summary(self):
        return {
            "fraction": self.fraction,
            "interval": list(self.interval),
            "samples": self.samples,
            "conservative": self.conservative,
            "dissipative": self.dissipative,
            "inconclusive": self.inconclusive,
            "inconclusive_rate": self.inconclusive_rate,
            "low_confidence": self.low_confidence,
            "fraction_by_radius": [list(p) for p in self.fraction_by_radius],
        }


def wilson_interval(successes, n, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = successes / n
    den = 1 + z * z / n
    center = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return (lo, hi)


_WORKER = {}


def _init_worker(orbit, sampler, stream, params):
    _WORKER.update(orbit=orbit, sampler=sampler, stream=stream, params=params)


def _sample_record(i):
    w = _WORKER
    omega = w["sampler"](w["params"].seed, i)
    v = classify_point(w["orbit"], omega, w["stream"], w["params"])
    rec = {"index": i}
    rec.update(v.to_record())
    return rec


def monte_carlo_mass(orbit, sampler, stream, params, workers=1):
    """Estimate the stream mass of the conservative part.

    Sample ``i`` is drawn from the seed sequence ``(params.seed, i)``, so
    records depend only on the seed, never on ``workers``.  The fraction
    counts conservative labels over all samples; inconclusive labels are
    reported separately and trigger :class:`LowConfidenceWarning` above 20%.
    """
    n = params.sample_count
    if workers <= 1:
        _init_worker(orbit, sampler, stream, params)
        records = [_sample_record(i) for i in range(n)]
    else:
        chunk = max(1, n // (4 * workers))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(orbit, sampler, stream, params)) as ex:
            records = list(ex.map(_sample_record, range(n), chunksize=chunk))
    records.sort(key=lambda r: r["index"])
    counts = {lab: sum(1 for r in records if r["label"] == lab) for lab in LABELS}
    by_radius = []
    for j, r in enumerate(params.radius_schedule[2:]):
        cons = sum(1 for rec in records if rec["prefix_labels"][j] == "conservative")
        by_radius.append((r, cons / n if n else 0.0))
    est = MassEstimate(
        fraction=counts["conservative"] / n if n else 0.0,
        interval=wilson_interval(counts["conservative"], n),
        conservative=counts["conservative"],
        dissipative=counts["dissipative"],
        inconclusive=counts["inconclusive"],
        samples=n,
        fraction_by_radius=by_radius,
        records=records,
    )
    if est.low_confidence:
        warnings.warn(
            f"{est.inconclusive} of {n} samples inconclusive ({est.inconclusive_rate:.1%})",
            LowConfidenceWarning,
            stacklevel=2,
        )
    return est


def write_occupancy_csv(path, verdicts):
    """Long-format CSV: one row per (ray, t, R)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ray", "t", "R", "count", "count_max"])
        for v in verdicts:
            tab = v.occupancy
            for i, t in enumerate(tab.thresholds):
                for j, r in enumerate(tab.radii):
                    w.writerow([v.ray, t, r, int(tab.counts[i, j]), int(tab.counts_max[i, j])])
