"""Disorder processes and seeded Monte Carlo experiments.

Every random draw for sample ``i`` of a run with master seed ``s`` comes from
a Philox generator keyed by ``(s, i, tag)``, so a sample never depends on
which worker computed it or on any other sample.  Aggregation always folds
records in sample-index order.
"""

from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from functools import lru_cache, partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from . import arith
from .errors import ConfigError, DefinednessError, NumericError, PoleError
from .geometry import DirichletBox, FlatTorus, SpectralGeometry
from .greens import GreensEvaluator, default_cutoff
from .secular import ScattererSet, SecularSystem
from .wavefield import Eigenfunction, Mollifier, Observable, chebyshev_ratio

log = logging.getLogger(__name__)

MAX_DISPLACEMENT = 0.25
DEGENERATE_LIMIT = 0.01


def sample_rng(master_seed: int, index: int, tag: str) -> np.random.Generator:
    key = (int(index), zlib.crc32(tag.encode()))
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


# -- processes ----------------------------------------------------------------

@dataclass(frozen=True)
class RadialProfile:
    """Radial displacement density P(r), support [0, radius).

    The default ``(1 - (r/radius)^2)^power`` is smooth at the support edge,
    strictly decreasing and positive at 0.
    """

    radius: float = MAX_DISPLACEMENT
    power: int = 4

    def __post_init__(self):
        if not 0 < self.radius <= MAX_DISPLACEMENT:
            raise ConfigError(f"displacement support radius must lie in (0, 1/4], got {self.radius}")

    def density(self, r):
        u = np.asarray(r, dtype=float) / self.radius
        return np.where(u < 1, np.clip(1 - u * u, 0, None) ** self.power, 0.0)

    def _radial_table(self, d: int, n: int = 4097):
        r = np.linspace(0.0, self.radius, n)
        w = self.density(r) * r ** (d - 1)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(r))])
        return r, cdf / cdf[-1]

    def sample_radius(self, u: np.ndarray, d: int) -> np.ndarray:
        r, cdf = _cached_table(self, d)
        return np.interp(u, cdf, r)

    def mean_displacement(self, d: int) -> float:
        """E|omega| under the radial density."""
        num, _ = integrate.quad(lambda r: r * float(self.density(r)) * r ** (d - 1), 0, self.radius)
        den, _ = integrate.quad(lambda r: float(self.density(r)) * r ** (d - 1), 0, self.radius)
        return num / den


@lru_cache(maxsize=16)
def _cached_table(profile: RadialProfile, d: int):
    return profile._radial_table(d)


@dataclass(frozen=True)
class UniformTorus:
    L: float
    N: int
    d: int = 2
    t: float = 0.0

    @classmethod
    def with_density(cls, L: float, rho: float, d: int = 2, t: float = 0.0):
        return cls(L, max(1, int(round(rho * L**d))), d, t)

    @property
    def geom(self) -> FlatTorus:
        return FlatTorus(self.d, self.L)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(0.0, self.L, size=(self.N, self.d))


@dataclass(frozen=True)
class DisplacedLattice:
    """Impurities at xi + omega_xi for xi in Z^d within the box [-L, L]^d."""

    L: float
    d: int = 2
    t: float = 0.0
    profile: RadialProfile = field(default_factory=RadialProfile)

    @property
    def geom(self) -> DirichletBox:
        return DirichletBox(self.d, self.L)

    @property
    def sites(self) -> np.ndarray:
        m = int(math.floor(self.L))
        ax = np.arange(-m, m + 1)
        g = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([v.ravel() for v in g], axis=1).astype(float)

    @property
    def N(self) -> int:
        return len(self.sites)

    def displacements(self, rng: np.random.Generator, n: int) -> np.ndarray:
        direction = rng.normal(size=(n, self.d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return direction * self.profile.sample_radius(rng.uniform(size=n), self.d)[:, None]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        x = self.sites + self.displacements(rng, self.N)
        # impurities pushed past a wall are mirrored back into the box
        L = self.L
        x = np.where(x > L, 2 * L - x, x)
        return np.where(x < -L, -2 * L - x, x)


def sample_positions(process, master_seed: int, index: int) -> ScattererSet:
    rng = sample_rng(master_seed, index, "positions")
    return ScattererSet(process.geom, process.sample(rng), process.t)


# -- evaluator cache ----------------------------------------------------------

@lru_cache(maxsize=8)
def _evaluator(geom: SpectralGeometry, e_max: float) -> GreensEvaluator:
    return GreensEvaluator(geom, e_max)


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _pick_gaps(gaps: Sequence[int], count: Optional[int], rng) -> List[int]:
    if count is None or count >= len(gaps):
        return list(gaps)
    chosen = rng.choice(len(gaps), size=count, replace=False)
    return sorted(int(gaps[i]) for i in chosen)


@dataclass(frozen=True)
class ExperimentRecord:
    seed: int
    index: int
    positions: Tuple[Tuple[float, ...], ...]
    rows: Tuple[dict, ...]
    degenerate: int = 0
    excluded: bool = False


def _positions_tuple(pos):
    return tuple(tuple(float(c) for c in p) for p in pos)


# -- equidistribution ---------------------------------------------------------

@dataclass(frozen=True)
class EquidistConfig:
    process: UniformTorus
    window: Tuple[float, float]
    observable: Observable
    zetas: Tuple[Tuple[int, ...], ...] = ((1, 0),)
    delta: float = 0.17
    M: int = 100
    seed: int = 0
    gaps_per_sample: Optional[int] = 1
    e_max: Optional[float] = None
    ratio_threshold: float = 10.0

    @property
    def frequency_set(self) -> List[Tuple[int, ...]]:
        """Frequencies used in the generic-gap test: observable support plus zetas."""
        out = sorted(set(self.observable.coeffs) | set(map(tuple, self.zetas)))
        return out

    def cutoff(self) -> float:
        return self.e_max or default_cutoff(self.process.geom, self.window[1])


def generic_gaps(geom, window, delta, zetas) -> List[int]:
    return [j for j in geom.gaps_in_window(*window) if arith.is_generic_gap(geom, j, delta, zetas)]


def _nearest_generic(geom, window, delta, zetas, want=3):
    lo, hi = window
    width = hi - lo
    found = []
    for k in range(1, 20):
        for w in ((max(0.0, lo - k * width), lo), (hi, hi + k * width)):
            found.extend(generic_gaps(geom, w, delta, zetas))
        if len(found) >= want:
            break
    return sorted(set(found))[:want]


def _equidist_sample(cfg: EquidistConfig, gaps: Tuple[int, ...], index: int) -> ExperimentRecord:
    proc = cfg.process
    geom = proc.geom
    sc = sample_positions(proc, cfg.seed, index)
    system = SecularSystem(sc, _evaluator(geom, cfg.cutoff()))
    chosen = _pick_gaps(gaps, cfg.gaps_per_sample, sample_rng(cfg.seed, index, "gaps"))
    rows, degenerate = [], 0
    zeta0 = tuple(cfg.zetas[0])
    for j in chosen:
        for pair in system.find_new_eigenvalues(j):
            if pair.degenerate:
                degenerate += 1
                continue
            ef = Eigenfunction(system, pair)
            _, dev = ef.observable_integral(cfg.observable)
            row = {"gap": j, "lam": pair.lam, "residual": pair.residual, "deviation": dev}
            for z in cfg.zetas:
                me = ef.matrix_element(z)
                row[f"me_{_ztag(z)}"] = abs(me)
            try:
                row["cheb_rhs"] = arith.chebyshev_rhs(pair.lam / geom.scale, zeta0, cfg.delta, proc.N, geom.d)
                row["cheb_ratio"] = abs(ef.matrix_element(zeta0)) ** 2 / row["cheb_rhs"]
            except (DefinednessError, PoleError):
                row["cheb_rhs"] = float("nan")
                row["cheb_ratio"] = float("nan")
            row["generic_at_root"] = arith.is_generic_gap(geom, j, cfg.delta, cfg.frequency_set, lam=pair.lam)
            rows.append(row)
    return ExperimentRecord(cfg.seed, index, _positions_tuple(sc.positions), tuple(rows), degenerate)


def _ztag(z):
    return "_".join(str(c) for c in z).replace("-", "m")


def run_equidistribution(cfg: EquidistConfig, workers: int = 1):
    geom = cfg.process.geom
    if geom.kind != "torus":
        raise ConfigError("equidistribution runs need a flat torus")
    gaps = generic_gaps(geom, cfg.window, cfg.delta, cfg.frequency_set)
    if not gaps:
        near = _nearest_generic(geom, cfg.window, cfg.delta, cfg.frequency_set)
        raise ConfigError(f"no generic gap in window {cfg.window}; nearest generic gaps {near}")
    fn = partial(_equidist_sample, cfg, tuple(gaps))
    records = _map(fn, range(cfg.M), workers)
    return records, _equidist_summary(cfg, records, len(gaps))


def _equidist_summary(cfg, records, n_gaps):
    rows = [r for rec in records for r in rec.rows]
    devs = np.array([abs(r["deviation"]) for r in rows])
    ratios = np.array([r["cheb_ratio"] for r in rows])
    ratios = ratios[np.isfinite(ratios)]
    proc = cfg.process
    d = proc.d
    lam_mid = 0.5 * sum(cfg.window)
    dd = float(arith.EQUIDIST_EXPONENTS[d])
    n_deg = sum(rec.degenerate for rec in records)
    return {
        "samples": len(records),
        "eigenfunctions": len(rows),
        "generic_gaps_in_window": n_gaps,
        "median_abs_deviation": float(np.median(devs)) if len(devs) else float("nan"),
        "bound_fraction": float(np.mean(ratios <= cfg.ratio_threshold)) if len(ratios) else float("nan"),
        "bound_floor": 1.0 / (4 * proc.N),
        "ratio_quartiles": [float(q) for q in np.quantile(ratios, [0.25, 0.5, 0.75])] if len(ratios) else [],
        "comparison_scale": math.sqrt(proc.N) * lam_mid ** (-dd) * proc.L ** (-2 * dd),
        "degenerate": n_deg,
        "degenerate_rate": n_deg / max(1, n_deg + len(rows)),
    }


# -- two-point correlation ----------------------------------------------------

@dataclass(frozen=True)
class ThetaConfig:
    process: DisplacedLattice
    gap: int
    pairs: Tuple[Tuple[Tuple[float, ...], Tuple[float, ...]], ...]
    mollifier: Mollifier = field(default_factory=Mollifier)
    M: int = 50
    seed: int = 0
    e_max: Optional[float] = None

    def cutoff(self) -> float:
        geom = self.process.geom
        return self.e_max or default_cutoff(geom, geom.gap(self.gap)[1])


def select_gap(geom: SpectralGeometry, window: Tuple[float, float]) -> int:
    """The widest gap inside the window (lowest index on ties).

    New eigenvalues arrive at the Weyl rate, so the widest gap is the one
    expected to hold the most of them.
    """
    gaps = geom.gaps_in_window(*window)
    if not gaps:
        raise ConfigError(f"no gap inside window {window}")
    width = [np.subtract(*geom.gap_invariants(j)[::-1]) for j in gaps]
    return gaps[int(np.argmax(width))]


def _theta_sample(cfg: ThetaConfig, index: int) -> ExperimentRecord:
    proc = cfg.process
    geom = proc.geom
    sc = sample_positions(proc, cfg.seed, index)
    system = SecularSystem(sc, _evaluator(geom, cfg.cutoff()))
    roots = system.find_new_eigenvalues(cfg.gap)
    n_deg = sum(p.degenerate for p in roots)
    if n_deg:
        return ExperimentRecord(cfg.seed, index, _positions_tuple(sc.positions), (), n_deg, True)
    points = sorted({tuple(map(float, p)) for pair in cfg.pairs for p in pair})
    sums = np.zeros(len(cfg.pairs))
    for pair in roots:
        ef = Eigenfunction(system, pair)
        amp = {p: ef.smoothed_amplitude(cfg.mollifier, np.array(p)) for p in points}
        for k, (x, y) in enumerate(cfg.pairs):
            sums[k] += amp[tuple(map(float, x))] * amp[tuple(map(float, y))]
    row = {"roots": len(roots)}
    row.update({f"theta_{k}": float(v) for k, v in enumerate(sums)})
    return ExperimentRecord(cfg.seed, index, _positions_tuple(sc.positions), (row,), 0, False)


@dataclass(frozen=True)
class ThetaEstimate:
    pair: Tuple[Tuple[float, ...], Tuple[float, ...]]
    distance: float
    mean: float
    stderr: float
    per_state: float = math.nan


def run_theta(cfg: ThetaConfig, workers: int = 1):
    geom = cfg.process.geom
    if geom.kind != "box":
        raise ConfigError("theta runs need a Dirichlet box")
    records = _map(partial(_theta_sample, cfg), range(cfg.M), workers)
    kept = [rec for rec in records if not rec.excluded]
    if not kept:
        raise NumericError("every sample was degenerate")
    counts = [rec.rows[0]["roots"] for rec in kept]
    total = sum(counts)
    estimates = []
    for k, (x, y) in enumerate(cfg.pairs):
        vals = np.array([rec.rows[0][f"theta_{k}"] for rec in kept])
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("inf")
        # ratio estimator for the average Theta of a single eigenfunction
        per_state = float(vals.sum() / total) if total else math.nan
        pair = (tuple(map(float, x)), tuple(map(float, y)))
        estimates.append(ThetaEstimate(pair, geom.distance(x, y), float(np.mean(vals)), se, per_state))
    summary = {
        "samples": len(records),
        "excluded": len(records) - len(kept),
        "gap": cfg.gap,
        "gap_interval": list(geom.gap(cfg.gap)),
        "mean_root_count": float(np.mean(counts)),
        "root_counts": counts,
        "estimates": [asdict(e) for e in estimates],
    }
    return records, estimates, summary


def f_localization_test(estimates: Sequence[ThetaEstimate], F: Callable[[float], float], probe_max: float = 20.0):
    """Check E(sum Theta) <= F(|x - y|) within two standard errors for each pair."""
    r = np.linspace(0.0, probe_max, 401)
    fr = np.array([F(v) for v in r])
    if not np.all(np.diff(fr) < 0):
        raise ValueError("F must be strictly decreasing")
    report = []
    for e in estimates:
        bound = F(e.distance)
        holds = e.mean - 2 * e.stderr <= bound
        report.append({"pair": e.pair, "distance": e.distance, "holds": bool(holds), "margin": e.mean / bound})
    return {"pairs": report, "violated": any(not p["holds"] for p in report)}


# -- localization scan --------------------------------------------------------

@dataclass(frozen=True)
class ScanConfig:
    process: UniformTorus
    windows: Tuple[Tuple[float, float], ...]
    M: int = 50
    seed: int = 0
    gaps_per_sample: Optional[int] = 1
    grid: Optional[int] = None
    e_max: Optional[float] = None


def _grid_for(geom, lam, grid):
    if grid:
        return grid
    # resolve the dominant wavenumber with at least four points per period
    need = 4 * math.sqrt(lam / geom.scale) + 8
    return max(128, 1 << int(math.ceil(math.log2(need))))


def _scan_sample(cfg: ScanConfig, window, diagnose, index: int) -> ExperimentRecord:
    proc = cfg.process
    geom = proc.geom
    tag = f"scan:{window[0]!r}:{window[1]!r}"
    sc = ScattererSet(geom, proc.sample(sample_rng(cfg.seed, index, "positions:" + tag)), proc.t)
    e_max = cfg.e_max or default_cutoff(geom, window[1])
    system = SecularSystem(sc, _evaluator(geom, e_max))
    gaps = geom.gaps_in_window(*window)
    chosen = _pick_gaps(gaps, cfg.gaps_per_sample, sample_rng(cfg.seed, index, "gaps:" + tag))
    rows, deg = [], 0
    for j in chosen:
        for pair in system.find_new_eigenvalues(j):
            if pair.degenerate:
                deg += 1
                continue
            ef = Eigenfunction(system, pair)
            diag = diagnose(ef) if diagnose else ef.localization_diagnostics(_grid_for(geom, pair.lam, cfg.grid))
            rows.append({"gap": j, "lam": pair.lam, "ipr": diag.ipr, "l_loc": diag.l_loc, "r2": diag.r2})
    return ExperimentRecord(cfg.seed, index, _positions_tuple(sc.positions), tuple(rows), deg)


def localization_scan(cfg: ScanConfig, workers: int = 1, diagnose=None):
    """Per-window medians of IPR and fitted decay length.

    ``diagnose`` replaces :meth:`Eigenfunction.localization_diagnostics`
    (used to inject analytic test fields).
    """
    proc = cfg.process
    d = proc.d
    alpha = float(arith.localization_exponent(arith.EQUIDIST_EXPONENTS[d], d))
    table, all_records = [], []
    for window in cfg.windows:
        window = tuple(window)
        recs = _map(partial(_scan_sample, cfg, window, diagnose), range(cfg.M), workers)
        all_records.append(recs)
        rows = [r for rec in recs for r in rec.rows]
        ipr = np.array([r["ipr"] for r in rows])
        lloc = np.array([np.inf if r["l_loc"] is None else r["l_loc"] for r in rows])
        table.append({
            "window": list(window),
            "eigenfunctions": len(rows),
            "median_ipr": float(np.median(ipr)) if len(ipr) else float("nan"),
            "median_l_loc": float(np.median(lloc)) if len(lloc) else float("nan"),
            "fraction_delocalized": float(np.mean(np.isinf(lloc))) if len(lloc) else float("nan"),
            "l_loc_floor": window[1] ** alpha,
            "exceeds_L": bool(len(lloc) and np.median(lloc) > proc.L),
            "degenerate": sum(rec.degenerate for rec in recs),
        })
    crossing = next((row["window"] for row in table if row["exceeds_L"]), None)
    return all_records, {"alpha": alpha, "windows": table, "crossing": crossing}
