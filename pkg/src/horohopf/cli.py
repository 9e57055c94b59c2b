"""Command-line entry points.

Every command reads an optional JSON config, applies flag overrides,
writes the fully resolved config to ``<out>/resolved_config.json`` and
emits its reports into the same directory.  Replaying the resolved config
reproduces every JSONL body byte for byte; only the header line carries a
timestamp.

Exit codes: 0 success, 1 configuration error, 2 invariant violation,
3 stream audit failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import sys
import warnings
from fractions import Fraction

import numpy as np

from . import classifier as cl
from . import disk as dk
from . import ergodic as eg
from . import freegroup as fg
from .errors import ConfigError, HorohopfError, InvariantViolation, StreamAuditError
from .hyperbolic import delta_estimate

__all__ = ["main", "resolve_config", "COMMANDS"]

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_AUDIT = 0, 1, 2, 3

_COMMON = {"seed": 0, "workers": 1, "out": "horohopf-out"}

_ORBIT_DEFAULTS = {
    "model": "tree",
    "group": {"rank": 2, "generators": ["a", "b"]},
    "stream": {"reweight_seed": None},
    "params": {},
    "rays": None,
    "audit_pairs": 200,
}

COMMANDS = {
    "ergodic-lab": {"battery": "extended", "actions": None, "depth": 8, "reweight_seeds": []},
    "classify": dict(_ORBIT_DEFAULTS),
    "series": dict(_ORBIT_DEFAULTS),
    "hopf-mass": dict(_ORBIT_DEFAULTS),
    "delta-check": {"model": "tree", "group": {"rank": 2, "generators": ["a", "b"]}, "radius": 4, "sample_size": 40},
    "audit-stream": {
        "model": "tree",
        "group": {"rank": 2, "generators": ["a", "b"]},
        "stream": {"reweight_seed": None},
        "radius": 6,
        "pairs": 1000,
    },
    "fold": {"rank": 2, "generators": ["a"]},
}

# the config key that --radius-max overrides, per command
_RADIUS_KEY = {
    "ergodic-lab": "depth",
    "delta-check": "radius",
    "audit-stream": "radius",
}

_PARAM_FIELDS = {
    "radius_schedule",
    "thresholds",
    "growth_window",
    "cauchy_eps",
    "c_grid",
    "sample_count",
    "tolerance",
    "series",
    "use_exact",
}


# -- configuration ---------------------------------------------------------


def _reject_unknown(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"unknown {where} keys: {', '.join(extra)}")


def _truncate_schedule(schedule, r_max):
    sched = [r for r in schedule if r < r_max] + [r_max]
    if len(sched) < 3:
        raise ConfigError(f"--radius-max {r_max} leaves fewer than 3 schedule radii")
    return sched


def resolve_config(command, doc=None, seed=None, workers=None, out=None, radius_max=None):
    """Merge defaults, the config document and flag overrides.

    Raises
    ------
    ConfigError
        Unknown command or keys, or ill-typed values.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    doc = {} if doc is None else doc
    defaults = COMMANDS[command]
    _reject_unknown(doc, set(defaults) | set(_COMMON), "config")
    cfg = copy.deepcopy(_COMMON)
    cfg.update(copy.deepcopy(defaults))
    cfg.update(copy.deepcopy(doc))
    for key, val in (("seed", seed), ("workers", workers), ("out", out)):
        if val is not None:
            cfg[key] = val
    try:
        cfg["seed"] = int(cfg["seed"])
        cfg["workers"] = int(cfg["workers"])
    except (TypeError, ValueError):
        raise ConfigError("seed and workers must be integers") from None
    if cfg["workers"] < 1:
        raise ConfigError("workers must be >= 1")

    if "params" in defaults:
        _reject_unknown(cfg["params"], _PARAM_FIELDS, "params")
        params = {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in vars(cl.ClassifierParams()).items()
            if k in _PARAM_FIELDS
        }
        params.update(cfg["params"])
        if radius_max is not None:
            params["radius_schedule"] = _truncate_schedule(params["radius_schedule"], radius_max)
        cfg["params"] = params
    elif radius_max is not None:
        cfg[_RADIUS_KEY.get(command, "radius")] = radius_max
    if "stream" in defaults:
        _reject_unknown(cfg["stream"], {"reweight_seed"}, "stream")
    return cfg


def _params(cfg):
    p = dict(cfg["params"])
    try:
        return cl.ClassifierParams(seed=cfg["seed"], **p)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad classifier params: {exc}") from None


# -- builders --------------------------------------------------------------


def _tree_group(gdoc):
    _reject_unknown(gdoc, {"rank", "generators"}, "group")
    k = int(gdoc.get("rank", 2))
    gens = list(gdoc.get("generators", []))
    return k, fg.stallings_fold(gens, k)


def _disk_group(gdoc):
    _reject_unknown(gdoc, {"preset", "params"}, "group")
    return dk.preset(gdoc.get("preset", "schottky"), gdoc.get("params"))


def _build_orbit(cfg, r_max):
    """Return ``(orbit, model, stream_base, sampler, k)``."""
    if cfg["model"] == "tree":
        k, graph = _tree_group(cfg["group"])
        orbit = fg.SubgroupOrbit(graph)
        return orbit, fg.TreeModel(k), cl.tree_stream(k), cl.TreeRaySampler(k), k
    if cfg["model"] == "disk":
        group = _disk_group(cfg["group"])
        ball = dk.orbit_ball(group, r_max)
        return dk.DiskOrbit(ball), dk.DiskModel(), cl.visual_stream(), cl.CircleSampler(), None
    raise ConfigError(f"unknown model {cfg['model']!r}")


def _stream(cfg, base):
    seed = cfg["stream"].get("reweight_seed")
    return base if seed is None else cl.reweighted_stream(base, int(seed))


def _parse_rays(cfg, k):
    rays = cfg.get("rays")
    if rays is None:
        return None
    if cfg["model"] == "tree":
        out = [fg.parse_ray(str(r)) for r in rays]
        for r in out:
            if r.rank > k:
                raise ConfigError(f"ray {r} uses letters outside F_{k}")
        return out
    try:
        return [complex(math.cos(float(t)), math.sin(float(t))) for t in rays]
    except (TypeError, ValueError):
        raise ConfigError("disk rays are angles in radians") from None


def _audit_pairs(cfg, orbit, sampler, k, n):
    """Reproducible ``(g, omega)`` pairs for the stream audit."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"], spawn_key=(2**31,)))
    if k is not None:
        radius = int(cfg.get("radius", 6))
        words = fg.ball(k, radius)
        gs = [words[i] for i in rng.integers(0, len(words), size=n)]
    else:
        ball = orbit.ball
        gs = [dk.MobiusMap(complex(ball.a[i]), complex(ball.b[i])) for i in rng.integers(0, len(ball), size=n)]
    omegas = [sampler(cfg["seed"] + 1, i) for i in range(n)]
    return list(zip(gs, omegas))


def _run_audit(cfg, stream, model, orbit, sampler, k, n):
    pairs = _audit_pairs(cfg, orbit, sampler, k, n)
    return cl.quasiconformality_audit(stream, model, pairs)


# -- emission --------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (tuple, set)):
        return list(x)
    return repr(x)


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, default=_jsonable)


def _config_digest(cfg):
    # output location and worker count never change record bodies
    ident = {k: v for k, v in cfg.items() if k not in ("out", "workers")}
    return hashlib.sha256(_dumps(ident).encode()).hexdigest()


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2, default=_jsonable))
        fh.write("\n")


def _write_jsonl(path, command, cfg, records):
    header = {
        "record": "header",
        "command": command,
        "config_sha256": _config_digest(cfg),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    with open(path, "w") as fh:
        fh.write(_dumps(header) + "\n")
        for rec in records:
            fh.write(_dumps(rec) + "\n")


def _prepare_out(cfg):
    os.makedirs(cfg["out"], exist_ok=True)
    _write_json(os.path.join(cfg["out"], "resolved_config.json"), cfg)
    return cfg["out"]


def _label_counts(records):
    return {lab: sum(1 for r in records if r["label"] == lab) for lab in cl.LABELS}


# -- commands --------------------------------------------------------------


def cmd_ergodic_lab(cfg):
    """Run orbit classification, the Hopf partition and recurrence checks
    on a battery of actions; one CSV row per orbit."""
    out = _prepare_out(cfg)
    if cfg["actions"] is not None:
        docs = list(cfg["actions"])
    elif cfg["battery"] in ("canonical", "extended"):
        docs = eg.CANONICAL_ACTIONS + (eg.EXTRA_ACTIONS if cfg["battery"] == "extended" else [])
    else:
        raise ConfigError(f"unknown battery {cfg['battery']!r}")
    actions = [eg.action_from_dict(d) for d in docs]
    depth = int(cfg["depth"])
    rows, summary, failures = [], [], []
    for action in actions:
        action.validate()
        part = eg.hopf_partition(action, depth)
        for rep in part.reports:
            rows.append((action.name, rep))
        entry = {
            "action": action.name,
            "cells": part.signature(),
            "checks": part.checks,
            "all_passed": part.all_passed,
            "reweighted_agree": {},
        }
        for s in cfg["reweight_seeds"]:
            other = eg.hopf_partition(eg.reweighted(action, int(s)), depth)
            same = other.signature() == part.signature()
            entry["reweighted_agree"][str(s)] = same
            if not same:
                failures.append(f"{action.name}: reweighting with seed {s} changed the partition")
        if not part.all_passed:
            bad = [k for k, v in part.checks.items() if not v]
            failures.append(f"{action.name}: failed checks {bad}")
        summary.append(entry)
    eg.write_orbit_csv(os.path.join(out, "orbits.csv"), rows)
    _write_json(os.path.join(out, "partition.json"), summary)
    if failures:
        raise InvariantViolation("; ".join(failures))
    return EXIT_OK


def _classify_setup(cfg):
    params = _params(cfg)
    orbit, model, base, sampler, k = _build_orbit(cfg, params.r_max)
    stream = _stream(cfg, base)
    _run_audit(cfg, stream, model, orbit, sampler, k, int(cfg["audit_pairs"]))
    return params, orbit, stream, sampler, _parse_rays(cfg, k)


def _write_occupancy(out, records):
    with open(os.path.join(out, "occupancy.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ray", "t", "R", "count"])
        for rec in records:
            for i, t in enumerate(rec["thresholds"]):
                for j, r in enumerate(rec["radii"]):
                    w.writerow([rec["ray"], t, r, rec["occupancy"][i][j]])


def _verdict_records(cfg, params, orbit, stream, sampler, rays):
    if rays is None:
        est = cl.monte_carlo_mass(orbit, sampler, stream, params, workers=cfg["workers"])
        return est.records, est
    records = []
    for i, omega in enumerate(rays):
        rec = {"index": i}
        rec.update(cl.classify_point(orbit, omega, stream, params).to_record())
        records.append(rec)
    return records, None


def cmd_classify(cfg):
    """Classify explicit rays (or ``sample_count`` random ones)."""
    out = _prepare_out(cfg)
    params, orbit, stream, sampler, rays = _classify_setup(cfg)
    records, _ = _verdict_records(cfg, params, orbit, stream, sampler, rays)
    _write_jsonl(os.path.join(out, "verdicts.jsonl"), "classify", cfg, records)
    _write_occupancy(out, records)
    summary = _label_counts(records)
    summary["points"] = len(records)
    _write_json(os.path.join(out, "summary.json"), summary)
    return EXIT_OK


def cmd_series(cfg):
    """Partial sums of the Poincare-Busemann series along the schedule."""
    out = _prepare_out(cfg)
    params, orbit, stream, sampler, rays = _classify_setup(cfg)
    if rays is None:
        rays = [sampler(params.seed, i) for i in range(params.sample_count)]
    records = []
    for i, omega in enumerate(rays):
        partials = cl.poincare_partial_sums(orbit, omega, stream, params)
        records.append(
            {
                "index": i,
                "ray": cl._ray_label(omega),
                "radii": list(params.radius_schedule),
                "partials": [str(s) if isinstance(s, Fraction) else float(s) for s in partials],
            }
        )
    _write_jsonl(os.path.join(out, "series.jsonl"), "series", cfg, records)
    return EXIT_OK


def cmd_hopf_mass(cfg):
    """Monte Carlo estimate of the conservative mass."""
    out = _prepare_out(cfg)
    params, orbit, stream, sampler, _ = _classify_setup(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", cl.LowConfidenceWarning)
        est = cl.monte_carlo_mass(orbit, sampler, stream, params, workers=cfg["workers"])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _write_jsonl(os.path.join(out, "samples.jsonl"), "hopf-mass", cfg, est.records)
    _write_json(os.path.join(out, "mass.json"), est.summary())
    return EXIT_OK


def cmd_delta_check(cfg):
    """Empirical hyperbolicity constant on a sample of orbit points."""
    out = _prepare_out(cfg)
    rng = np.random.default_rng(cfg["seed"])
    n = int(cfg["sample_size"])
    if cfg["model"] == "tree":
        _reject_unknown(cfg["group"], {"rank", "generators"}, "group")
        k = int(cfg["group"].get("rank", 2))
        words = fg.ball(k, int(cfg["radius"]))
        pts = [words[i] for i in sorted(rng.choice(len(words), size=min(n, len(words)), replace=False))]
        model = fg.TreeModel(k)
    elif cfg["model"] == "disk":
        ball = dk.orbit_ball(_disk_group(cfg["group"]), float(cfg["radius"]))
        idx = sorted(rng.choice(len(ball), size=min(n, len(ball)), replace=False))
        pts = [complex(p) for p in ball.points[idx]]
        model = dk.DiskModel()
    else:
        raise ConfigError(f"unknown model {cfg['model']!r}")
    est = delta_estimate(model, pts)
    ok = float(est) <= float(model.delta) + 1e-9
    _write_json(
        os.path.join(out, "delta.json"),
        {"estimate": est, "model_delta": model.delta, "points": len(pts), "within_bound": ok},
    )
    if not ok:
        raise InvariantViolation(f"delta estimate {est} exceeds the model constant {model.delta}")
    return EXIT_OK


def cmd_audit_stream(cfg):
    """Compare stream densities against exp(D beta) on random pairs."""
    out = _prepare_out(cfg)
    if cfg["model"] == "tree":
        k, _ = _tree_group(cfg["group"])
        orbit, model, base, sampler = None, fg.TreeModel(k), cl.tree_stream(k), cl.TreeRaySampler(k)
    elif cfg["model"] == "disk":
        ball = dk.orbit_ball(_disk_group(cfg["group"]), float(cfg["radius"]))
        orbit, model, base, sampler, k = dk.DiskOrbit(ball), dk.DiskModel(), cl.visual_stream(), cl.CircleSampler(), None
    else:
        raise ConfigError(f"unknown model {cfg['model']!r}")
    stream = _stream(cfg, base)
    pairs = _audit_pairs(cfg, orbit, sampler, k, int(cfg["pairs"]))
    report = cl.quasiconformality_audit(stream, model, pairs, raise_on_fail=False)
    _write_json(
        os.path.join(out, "audit.json"),
        {
            "stream": stream.name,
            "max_deviation": report.max_deviation,
            "bound": report.bound,
            "checked": report.checked,
            "exact": report.exact,
            "passed": report.passed,
            "witness": None if report.witness is None else [str(x) for x in report.witness],
        },
    )
    if not report.passed:
        raise StreamAuditError(f"stream {stream.name} deviates by {report.max_deviation} > {report.bound}")
    return EXIT_OK


def cmd_fold(cfg):
    """Dump the Stallings graph of a finitely generated subgroup."""
    out = _prepare_out(cfg)
    k, graph = _tree_group({"rank": cfg["rank"], "generators": cfg["generators"]})
    text = graph.to_text()
    with open(os.path.join(out, "graph.txt"), "w") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")
    print(text, end="" if text.endswith("\n") else "\n")
    return EXIT_OK


_HANDLERS = {
    "ergodic-lab": cmd_ergodic_lab,
    "classify": cmd_classify,
    "series": cmd_series,
    "hopf-mass": cmd_hopf_mass,
    "delta-check": cmd_delta_check,
    "audit-stream": cmd_audit_stream,
    "fold": cmd_fold,
}


def _parser():
    p = argparse.ArgumentParser(prog="horohopf", description="Hopf decomposition experiments.")
    p.add_argument("command", choices=sorted(_HANDLERS))
    p.add_argument("--config", metavar="PATH", help="JSON config file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help="worker processes for sampling")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--radius-max", type=float, metavar="R", help="top radius (or depth)")
    return p


def _load(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None


def main(argv=None):
    args = _parser().parse_args(argv)
    r_max = args.radius_max
    if r_max is not None and float(r_max).is_integer():
        r_max = int(r_max)
    try:
        cfg = resolve_config(args.command, _load(args.config), args.seed, args.workers, args.out, r_max)
        return _HANDLERS[args.command](cfg)
    except StreamAuditError as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, HorohopfError, ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
