"""Batch front end: ``pointscatter <experiment> --config run.yaml``.

A run reads one YAML config, fills in every default, validates it against the
schema below and writes three files into the output directory, each named
after the first 12 hex digits of the config hash:

* ``<kind>-<hash>.config.yaml``  the resolved config (loads back to itself)
* ``<kind>-<hash>.records.csv``  one row per record (or ``.jsonl``)
* ``<kind>-<hash>.summary.json`` aggregates, versions, seed, wall time

Record streams depend only on the resolved config, never on ``--workers``
or the clock.  Failures print a JSON error object on stderr and exit with a
code that identifies the failure class (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__, arith
from .ensemble import (
    DisplacedLattice,
    EquidistConfig,
    RadialProfile,
    ScanConfig,
    ThetaConfig,
    UniformTorus,
    f_localization_test,
    localization_scan,
    run_equidistribution,
    run_theta,
    sample_positions,
    select_gap,
)
from .errors import (
    CoincidenceError,
    ConfigError,
    ConvergenceError,
    DefinednessError,
    DomainError,
    NumericError,
    PointScatterError,
    PoleError,
    ResourceError,
)
from .geometry import DirichletBox, FlatTorus
from .greens import DEFAULT_TOL, GreensEvaluator, default_cutoff
from .secular import ScattererSet, SecularSystem
from .wavefield import Eigenfunction, Mollifier, Observable

EXPERIMENTS = ("spectrum", "equidist", "lattice", "theta", "locscan", "field")

EXIT_CODES = {
    "ok": 0,
    "internal": 1,
    "config": 2,
    "resource": 3,
    "numeric": 4,
    "domain": 5,
    "io": 6,
}

TWO_PI = 2 * math.pi


class SchemaError(ConfigError):
    def __init__(self, msg, key=None):
        super().__init__(msg)
        self.key = key


# -- schema -------------------------------------------------------------------
#
# A schema is a dict of key -> Opt (a leaf) or key -> dict (a section).

class Opt:
    def __init__(self, kind, default, choices=None, nullable=False):
        self.kind, self.default, self.choices, self.nullable = kind, default, choices, nullable or default is None

    def check(self, value, key):
        if value is None:
            if self.nullable:
                return None
            raise SchemaError(f"{key} must not be null", key)
        try:
            out = _COERCE[self.kind](value)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{key}: expected {self.kind}, got {value!r}", key) from exc
        if self.choices is not None and out not in self.choices:
            raise SchemaError(f"{key} must be one of {list(self.choices)}, got {out!r}", key)
        return out


def _int(v):
    if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
        raise ValueError(v)
    return int(v)


def _float(v):
    if isinstance(v, bool):
        raise ValueError(v)
    out = float(v)
    if not math.isfinite(out):
        raise ValueError(v)
    return out


def _bool(v):
    if not isinstance(v, bool):
        raise ValueError(v)
    return v


def _str(v):
    if not isinstance(v, str):
        raise ValueError(v)
    return v


def _window(v):
    lo, hi = (_float(x) for x in v)
    if not 0 <= lo < hi:
        raise ValueError(v)
    return [lo, hi]


def _point(v):
    return [_float(x) for x in v]


def _points(v):
    return [_point(p) for p in v]


def _ivec(v):
    return [_int(x) for x in v]


def _ivecs(v):
    return [_ivec(z) for z in v]


def _pairs(v):
    out = []
    for pair in v:
        x, y = pair
        out.append([_point(x), _point(y)])
    return out


def _windows(v):
    return [_window(w) for w in v]


_COERCE = {
    "int": _int, "float": _float, "bool": _bool, "str": _str, "window": _window,
    "points": _points, "ivecs": _ivecs, "pairs": _pairs, "windows": _windows,
}


def _geometry(kind="torus", L=TWO_PI):
    return {"kind": Opt("str", kind, ("torus", "box")), "d": Opt("int", 2, (2, 3)), "L": Opt("float", L)}


def _uniform(N):
    return {"N": Opt("int", N), "t": Opt("float", 0.0)}


def _displaced():
    return {
        "L": Opt("float", 2.0), "d": Opt("int", 2, (2, 3)), "t": Opt("float", 0.0),
        "radius": Opt("float", 0.25), "power": Opt("int", 4),
    }


COMMON = {
    "experiment": Opt("str", None, EXPERIMENTS),
    "seed": Opt("int", 0),
    "tolerance": Opt("float", DEFAULT_TOL),
    "e_max": Opt("float", None),
    "output": {"dir": Opt("str", "."), "format": Opt("str", "csv", ("csv", "jsonl"))},
}

SCHEMAS = {
    "spectrum": {
        "geometry": _geometry(),
        "scatterers": {
            "positions": Opt("points", None),
            "N": Opt("int", 1),
            "t": Opt("float", 0.0),
            "radius": Opt("float", 0.25),
            "power": Opt("int", 4),
        },
        "gaps": {"start": Opt("int", 0), "count": Opt("int", 50)},
        "samples": Opt("int", 1),
    },
    "equidist": {
        "torus": {"d": Opt("int", 2, (2, 3)), "L": Opt("float", TWO_PI)},
        "process": _uniform(4),
        "window": Opt("window", [1000.0, 1100.0]),
        "observable": {
            "kind": Opt("str", "random", ("random", "cosine")),
            "n_modes": Opt("int", 5),
            "max_freq": Opt("int", 3),
            "seed": Opt("int", 0),
            "mean": Opt("float", 0.0),
            "zeta": Opt("ivecs", [[1, 0]]),
        },
        "zetas": Opt("ivecs", [[1, 0], [1, 1], [2, 1]]),
        "delta": Opt("float", 0.17),
        "M": Opt("int", 100),
        "gaps_per_sample": Opt("int", 1),
        "ratio_threshold": Opt("float", 10.0),
    },
    "lattice": {
        "mode": Opt("str", "circle", ("circle", "annulus")),
        "d": Opt("int", 2, (2, 3)),
        "circle": {"X_min": Opt("float", 100.0), "X_max": Opt("float", 1e6), "points": Opt("int", 50)},
        "annulus": {
            "lam_min": Opt("float", 100.0),
            "lam_max": Opt("float", 1e5),
            "points": Opt("int", 30),
            "delta": Opt("float", 0.17),
            "zetas": Opt("ivecs", [[1, 0]]),
        },
    },
    "theta": {
        "process": _displaced(),
        "gap": {"index": Opt("int", None), "window": Opt("window", [1000.0, 1100.0])},
        "pairs": Opt("pairs", [[[-1.0, -0.5], [1.0, -0.5]], [[-1.5, -1.5], [1.5, 1.5]]]),
        "mollifier": {"eps0": Opt("float", 0.25)},
        "template": {"kind": Opt("str", "exponential", ("exponential", "power")), "c": Opt("float", 1.0)},
        "M": Opt("int", 50),
    },
    "locscan": {
        "torus": {"d": Opt("int", 2, (2, 3)), "L": Opt("float", TWO_PI)},
        "process": _uniform(16),
        "windows": Opt("windows", [[5.0, 20.0], [1000.0, 10000.0]]),
        "M": Opt("int", 50),
        "gaps_per_sample": Opt("int", 1),
        "grid": Opt("int", None),
    },
    "field": {
        "geometry": _geometry(),
        "scatterers": {
            "positions": Opt("points", None),
            "N": Opt("int", 4),
            "t": Opt("float", 0.0),
            "radius": Opt("float", 0.25),
            "power": Opt("int", 4),
        },
        "sample": Opt("int", 0),
        "gap": Opt("int", 10),
        "root": Opt("int", 0),
        "grid": Opt("int", 128),
    },
}


def _resolve(schema, data, prefix=""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise SchemaError(f"{prefix or 'config'} must be a mapping", prefix or None)
    unknown = sorted(set(data) - set(schema))
    if unknown:
        key = prefix + str(unknown[0])
        raise SchemaError(f"unknown config key {key!r}", key)
    out = {}
    for key, spec in schema.items():
        path = prefix + key
        if isinstance(spec, dict):
            out[key] = _resolve(spec, data.get(key), path + ".")
        else:
            out[key] = spec.check(data.get(key, spec.default), path)
    return out


def resolve_config(kind: str, data: dict, seed=None, out_dir=None, fmt=None) -> dict:
    """Validate a raw config against the schema of ``kind`` and fill defaults."""
    data = dict(data or {})
    if data.get("experiment") not in (None, kind):
        raise SchemaError(f"config is for {data['experiment']!r}, not {kind!r}", "experiment")
    data["experiment"] = kind
    cfg = _resolve({**COMMON, **SCHEMAS[kind]}, data)
    if seed is not None:
        cfg["seed"] = int(seed)
    if out_dir is not None:
        cfg["output"]["dir"] = str(out_dir)
    if fmt is not None:
        cfg["output"]["format"] = fmt
    _check_semantics(cfg)
    return cfg


def _positive(cfg, *keys):
    for key in keys:
        node = cfg
        for part in key.split("."):
            node = node[part]
        if node is not None and node <= 0:
            raise SchemaError(f"{key} must be positive", key)


def _check_semantics(cfg):
    kind = cfg["experiment"]
    _positive(cfg, "tolerance", "e_max")
    if kind in ("spectrum", "field"):
        g, s = cfg["geometry"], cfg["scatterers"]
        _positive(cfg, "geometry.L", "scatterers.N")
        if s["positions"] is not None and any(len(p) != g["d"] for p in s["positions"]):
            raise SchemaError(f"scatterers.positions must be points in dimension {g['d']}", "scatterers.positions")
    if kind == "spectrum":
        _positive(cfg, "gaps.count", "samples")
    if kind == "field":
        _positive(cfg, "grid")
    if kind in ("equidist", "locscan"):
        _positive(cfg, "torus.L", "process.N", "M", "gaps_per_sample")
    if kind == "equidist":
        d = cfg["torus"]["d"]
        if any(len(z) != d or not any(z) for z in cfg["zetas"]):
            raise SchemaError("zetas must be nonzero integer vectors of the torus dimension", "zetas")
        _positive(cfg, "observable.n_modes", "observable.max_freq")
    if kind == "theta":
        _positive(cfg, "process.L", "M", "mollifier.eps0", "template.c")
        d = cfg["process"]["d"]
        if any(len(p) != d for pair in cfg["pairs"] for p in pair):
            raise SchemaError(f"pairs must hold points in dimension {d}", "pairs")
    if kind == "lattice":
        c, a = cfg["circle"], cfg["annulus"]
        if not 0 < c["X_min"] <= c["X_max"] or c["points"] < 1:
            raise SchemaError("circle needs 0 < X_min <= X_max and points >= 1", "circle")
        if not 0 < a["lam_min"] <= a["lam_max"] or a["points"] < 1:
            raise SchemaError("annulus needs 0 < lam_min <= lam_max and points >= 1", "annulus")


def config_hash(cfg: dict) -> str:
    """sha256 of the resolved config minus the output section."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# -- experiments --------------------------------------------------------------
#
# Each runner returns (column names, list of row dicts, summary dict).

def _geom(g):
    return (FlatTorus if g["kind"] == "torus" else DirichletBox)(g["d"], g["L"])


def _scatterers(geom, s, seed, index):
    if s["positions"] is not None:
        return ScattererSet(geom, np.array(s["positions"]), s["t"])
    if geom.kind == "torus":
        return sample_positions(UniformTorus(geom.L, s["N"], geom.d, s["t"]), seed, index)
    profile = RadialProfile(s["radius"], s["power"])
    return sample_positions(DisplacedLattice(geom.L, geom.d, s["t"], profile), seed, index)


def _pos_str(pos):
    return ";".join(" ".join(repr(float(c)) for c in p) for p in pos)


def run_spectrum(cfg, workers):
    geom = _geom(cfg["geometry"])
    start, count = cfg["gaps"]["start"], cfg["gaps"]["count"]
    top = geom.gap(start + count - 1)[1]
    ev = GreensEvaluator(geom, cfg["e_max"] or default_cutoff(geom, top), cfg["tolerance"])
    cols = ["sample", "gap", "lam_lo", "lam_hi", "root", "residual", "degenerate", "boundary", "N", "t", "seed", "positions"]
    rows, per_gap = [], []
    for i in range(cfg["samples"]):
        sc = _scatterers(geom, cfg["scatterers"], cfg["seed"], i)
        system = SecularSystem(sc, ev)
        for j in range(start, start + count):
            lo, hi = geom.gap(j)
            roots = system.find_new_eigenvalues(j)
            per_gap.append(len(roots))
            for p in roots:
                rows.append({
                    "sample": i, "gap": j, "lam_lo": lo, "lam_hi": hi, "root": p.lam, "residual": p.residual,
                    "degenerate": p.degenerate, "boundary": p.boundary, "N": sc.N, "t": sc.t,
                    "seed": cfg["seed"], "positions": _pos_str(sc.positions),
                })
    summary = {
        "roots": len(rows),
        "gaps_scanned": len(per_gap),
        "max_roots_per_gap": max(per_gap) if per_gap else 0,
        "empty_gaps": int(sum(c == 0 for c in per_gap)),
        "all_inside": all(r["lam_lo"] < r["root"] < r["lam_hi"] for r in rows),
        "degenerate": int(sum(r["degenerate"] for r in rows)),
        "e_max": ev.e_max,
    }
    return cols, rows, summary


def run_lattice(cfg, workers):
    d = cfg["d"]
    if cfg["mode"] == "circle":
        c = cfg["circle"]
        X = np.geomspace(c["X_min"], c["X_max"], c["points"])
        cols = ["X", "count", "residual", "scaled_residual"]
        rows = []
        for x in X:
            n = arith.count_lattice_points(float(x), d)
            vol = math.pi * x if d == 2 else 4 * math.pi / 3 * x**1.5
            res = n - vol
            rows.append({"X": float(x), "count": n, "residual": res, "scaled_residual": res / x**0.35})
        summary = {"points": len(rows), "max_scaled_residual": max(abs(r["scaled_residual"]) for r in rows)}
        return cols, rows, summary
    a = cfg["annulus"]
    lams = np.geomspace(a["lam_min"], a["lam_max"], a["points"])
    zetas = [tuple(z) for z in a["zetas"]]
    cols = ["lam", "delta", "count", "scaled_count", "generic"]
    rows = []
    for lam in lams:
        lam = float(lam)
        w = float(np.nextafter(lam ** a["delta"], np.inf))
        n = len(arith.annulus_points((0,) * d, lam, w, d))
        rows.append({
            "lam": lam, "delta": a["delta"], "count": n, "scaled_count": n / lam**0.4,
            "generic": arith._generic_at(lam, a["delta"], zetas, d),
        })
    summary = {
        "points": len(rows),
        "max_scaled_count": max(r["scaled_count"] for r in rows),
        "generic_fraction": float(np.mean([r["generic"] for r in rows])),
    }
    return cols, rows, summary


def _observable(o, d):
    if o["kind"] == "cosine":
        coeffs = {}
        for z in o["zeta"]:
            z = tuple(z)
            coeffs[z] = 1.0
            coeffs[tuple(-c for c in z)] = 1.0
        return Observable(o["mean"], coeffs)
    from .ensemble import sample_rng

    return Observable.random(sample_rng(o["seed"], 0, "observable"), o["n_modes"], o["max_freq"], d, o["mean"])


def run_equidist(cfg, workers):
    t = cfg["torus"]
    proc = UniformTorus(t["L"], cfg["process"]["N"], t["d"], cfg["process"]["t"])
    obs = _observable(cfg["observable"], t["d"])
    ecfg = EquidistConfig(
        proc, tuple(cfg["window"]), obs, tuple(tuple(z) for z in cfg["zetas"]), cfg["delta"], cfg["M"],
        cfg["seed"], cfg["gaps_per_sample"], cfg["e_max"], cfg["ratio_threshold"],
    )
    records, summary = run_equidistribution(ecfg, workers)
    me_cols = [f"me_{'_'.join(str(c) for c in z).replace('-', 'm')}" for z in ecfg.zetas]
    cols = ["sample", "gap", "lam", "residual", "deviation", *me_cols, "cheb_rhs", "cheb_ratio", "generic_at_root", "positions"]
    rows = []
    for rec in records:
        for r in rec.rows:
            rows.append({"sample": rec.index, **r, "positions": _pos_str(rec.positions)})
    return cols, rows, summary


def _template(tcfg, d):
    c = tcfg["c"]
    if tcfg["kind"] == "exponential":
        return lambda r: c * math.exp(-r)
    return lambda r: c * (r + 1e-300) ** (-d)


def run_theta_cli(cfg, workers):
    p = cfg["process"]
    proc = DisplacedLattice(p["L"], p["d"], p["t"], RadialProfile(p["radius"], p["power"]))
    geom = proc.geom
    gap = cfg["gap"]["index"]
    if gap is None:
        gap = select_gap(geom, tuple(cfg["gap"]["window"]))
    pairs = tuple((tuple(x), tuple(y)) for x, y in cfg["pairs"])
    tcfg = ThetaConfig(proc, gap, pairs, Mollifier(cfg["mollifier"]["eps0"], p["d"]), cfg["M"], cfg["seed"], cfg["e_max"])
    records, estimates, summary = run_theta(tcfg, workers)
    cols = ["sample", "excluded", "roots", "pair", "distance", "theta_sum", "positions"]
    rows = []
    for rec in records:
        for k, e in enumerate(estimates):
            row = {"sample": rec.index, "excluded": rec.excluded, "pair": k, "distance": e.distance}
            if rec.excluded:
                row.update(roots="", theta_sum="")
            else:
                row.update(roots=rec.rows[0]["roots"], theta_sum=rec.rows[0][f"theta_{k}"])
            row["positions"] = _pos_str(rec.positions)
            rows.append(row)
    summary["template"] = cfg["template"]
    summary["f_localization"] = f_localization_test(estimates, _template(cfg["template"], p["d"]))
    return cols, rows, summary


def run_locscan(cfg, workers):
    t = cfg["torus"]
    proc = UniformTorus(t["L"], cfg["process"]["N"], t["d"], cfg["process"]["t"])
    scfg = ScanConfig(proc, tuple(tuple(w) for w in cfg["windows"]), cfg["M"], cfg["seed"], cfg["gaps_per_sample"], cfg["grid"], cfg["e_max"])
    all_records, summary = localization_scan(scfg, workers)
    cols = ["window_lo", "window_hi", "sample", "gap", "lam", "ipr", "l_loc", "r2"]
    rows = []
    for window, recs in zip(scfg.windows, all_records):
        for rec in recs:
            for r in rec.rows:
                rows.append({
                    "window_lo": window[0], "window_hi": window[1], "sample": rec.index, "gap": r["gap"],
                    "lam": r["lam"], "ipr": r["ipr"], "l_loc": "" if r["l_loc"] is None else r["l_loc"], "r2": r["r2"],
                })
    return cols, rows, summary


def run_field(cfg, workers):
    geom = _geom(cfg["geometry"])
    sc = _scatterers(geom, cfg["scatterers"], cfg["seed"], cfg["sample"])
    top = geom.gap(cfg["gap"])[1]
    ev = GreensEvaluator(geom, cfg["e_max"] or default_cutoff(geom, top), cfg["tolerance"])
    system = SecularSystem(sc, ev)
    roots = system.find_new_eigenvalues(cfg["gap"])
    if not roots:
        raise DefinednessError(f"gap {cfg['gap']} holds no new eigenvalue for this sample")
    if not 0 <= cfg["root"] < len(roots):
        raise SchemaError(f"root must lie in [0, {len(roots) - 1}] for this gap", "root")
    pair = roots[cfg["root"]]
    ef = Eigenfunction(system, pair)
    n = cfg["grid"]
    F, cell = ef.truncated_grid(n)
    ax, _ = ef.grid_axes(n)
    names = ["x", "y", "z"][: geom.d]
    cols = [*names, "value"]
    mesh = np.meshgrid(*([ax] * geom.d), indexing="ij")
    dens = (F * F).ravel()
    coords = [m.ravel() for m in mesh]
    rows = [{**{nm: float(c[i]) for nm, c in zip(names, coords)}, "value": float(dens[i])} for i in range(len(dens))]
    diag = ef.localization_diagnostics(n)
    summary = {
        "lam": pair.lam, "gap": cfg["gap"], "roots_in_gap": len(roots), "residual": pair.residual,
        "norm_squared": pair.norm_sq, "grid_mass": float(dens.sum() * cell), "ipr": diag.ipr,
        "l_loc": diag.l_loc, "r2": diag.r2, "positions": sc.positions.tolist(),
    }
    return cols, rows, summary


RUNNERS = {
    "spectrum": run_spectrum,
    "equidist": run_equidist,
    "lattice": run_lattice,
    "theta": run_theta_cli,
    "locscan": run_locscan,
    "field": run_field,
}


# -- output -------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def render_records(cols, rows, fmt, chash) -> str:
    """The record stream as text; a pure function of its arguments."""
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config_hash", *cols])
        for r in rows:
            w.writerow([chash, *(_cell(r[c]) for c in cols)])
    else:
        for r in rows:
            buf.write(json.dumps({"config_hash": chash, **{c: _json_safe(r[c]) for c in cols}}, separators=(",", ":")))
            buf.write("\n")
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def _versions():
    return {"pointscatter": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def execute(kind: str, cfg: dict, workers: int = 1) -> dict:
    """Run a resolved config and write its three output files; returns their paths."""
    chash = config_hash(cfg)
    tag = f"{kind}-{chash[:12]}"
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "config": out / f"{tag}.config.yaml",
        "records": out / f"{tag}.records.{cfg['output']['format']}",
        "summary": out / f"{tag}.summary.json",
    }
    paths["config"].write_text(f"# config_hash: {chash}\n" + yaml.safe_dump(cfg, sort_keys=False))
    t0 = time.perf_counter()
    cols, rows, summary = RUNNERS[kind](cfg, workers)
    wall = time.perf_counter() - t0
    paths["records"].write_text(render_records(cols, rows, cfg["output"]["format"], chash))
    doc = {
        "experiment": kind,
        "config_hash": chash,
        "seed": cfg["seed"],
        "tolerance": cfg["tolerance"],
        "e_max": cfg["e_max"],
        "workers": workers,
        "records": len(rows),
        "wall_time_s": wall,
        "versions": _versions(),
        "summary": _json_safe(summary),
    }
    paths["summary"].write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return {k: str(v) for k, v in paths.items()}


# -- entry point --------------------------------------------------------------

def _classify(exc):
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, ResourceError):
        return "resource"
    if isinstance(exc, (NumericError, ConvergenceError)):
        return "numeric"
    if isinstance(exc, (PoleError, CoincidenceError, DomainError, DefinednessError)):
        return "domain"
    if isinstance(exc, (OSError, yaml.YAMLError)):
        return "io"
    return "internal"


def _fail(exc) -> int:
    cls = _classify(exc)
    err = {"error": {"class": cls, "type": type(exc).__name__, "message": str(exc), "exit_code": EXIT_CODES[cls]}}
    key = getattr(exc, "key", None)
    if key is not None:
        err["error"]["key"] = key
    budget = getattr(exc, "budget", None)
    if budget is not None:
        err["error"]["budget"] = budget
    tail = getattr(exc, "tail", None)
    if tail is not None:
        err["error"]["tail"] = tail
    sys.stderr.write(json.dumps(err) + "\n")
    return EXIT_CODES[cls]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pointscatter", description="Point-scatterer spectral experiments.")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for kind in EXPERIMENTS:
        p = sub.add_parser(kind)
        p.add_argument("--config", type=Path, help="YAML config file (defaults used when omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, default=1, help="cap on worker processes")
        p.add_argument("--out-dir", type=Path, help="override output.dir")
        p.add_argument("--format", choices=("csv", "jsonl"), help="record format")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = {}
        if args.config is not None:
            data = yaml.safe_load(args.config.read_text()) or {}
        if args.workers < 1:
            raise SchemaError("--workers must be at least 1", "workers")
        cfg = resolve_config(args.experiment, data, args.seed, args.out_dir, args.format)
        paths = execute(args.experiment, cfg, args.workers)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error object
        return _fail(exc)
    sys.stdout.write(json.dumps(paths) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
