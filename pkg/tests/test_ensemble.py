import math

import numpy as np
import pytest
from scipy import integrate

from pointscatter.errors import ConfigError
from pointscatter.ensemble import (
    DisplacedLattice,
    EquidistConfig,
    RadialProfile,
    ScanConfig,
    ThetaConfig,
    ThetaEstimate,
    UniformTorus,
    f_localization_test,
    localization_scan,
    run_equidistribution,
    run_theta,
    sample_positions,
    sample_rng,
    select_gap,
)
from pointscatter.geometry import DirichletBox, FlatTorus
from pointscatter.wavefield import LocalizationDiagnostics, Mollifier, Observable

TWO_PI = 2 * math.pi


def test_sample_streams_are_keyed():
    a = sample_rng(7, 3, "positions").uniform(size=5)
    b = sample_rng(7, 3, "positions").uniform(size=5)
    c = sample_rng(7, 4, "positions").uniform(size=5)
    e = sample_rng(7, 3, "gaps").uniform(size=5)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, e)


def test_profile_density_shape():
    p = RadialProfile()
    r = np.linspace(0, 0.25, 50)
    dens = p.density(r)
    assert dens[0] == 1.0
    assert np.all(np.diff(dens) <= 0)
    assert p.density(0.3) == 0
    with pytest.raises(ConfigError):
        RadialProfile(radius=0.3)


def test_mean_displacement_matches_sampling():
    p = RadialProfile(0.2, 2)
    u = np.random.default_rng(0).uniform(size=200_000)
    r = p.sample_radius(u, 2)
    assert r.max() < 0.2
    assert np.mean(r) == pytest.approx(p.mean_displacement(2), abs=4 * np.std(r) / math.sqrt(len(r)))
    num, _ = integrate.quad(lambda s: s * s * (1 - (s / 0.2) ** 2) ** 2, 0, 0.2)
    den, _ = integrate.quad(lambda s: s * (1 - (s / 0.2) ** 2) ** 2, 0, 0.2)
    assert p.mean_displacement(2) == pytest.approx(num / den, rel=1e-10)


def test_displaced_lattice_sample():
    proc = DisplacedLattice(2.0)
    assert proc.N == 25
    x = proc.sample(np.random.default_rng(3))
    assert x.shape == (25, 2)
    assert np.all(np.abs(x) <= 2.0)
    assert np.all(np.linalg.norm(x - proc.sites, axis=1) < 0.25 + 1e-12)


def test_uniform_torus_density():
    proc = UniformTorus.with_density(TWO_PI, 0.1)
    assert proc.N == round(0.1 * TWO_PI**2)
    x = proc.sample(np.random.default_rng(1))
    assert np.all((x >= 0) & (x < TWO_PI))


def test_sample_positions_deterministic():
    proc = UniformTorus(TWO_PI, 4)
    a = sample_positions(proc, 5, 2).positions
    b = sample_positions(proc, 5, 2).positions
    assert np.array_equal(a, b)


def test_select_gap_is_widest():
    geom = DirichletBox(2, 2.0)
    window = (150.0, 200.0)
    j = select_gap(geom, window)
    gaps = geom.gaps_in_window(*window)
    widths = [geom.gap(k)[1] - geom.gap(k)[0] for k in gaps]
    assert geom.gap(j)[1] - geom.gap(j)[0] == pytest.approx(max(widths))
    assert j == gaps[int(np.argmax(np.round(widths, 9)))]
    with pytest.raises(ConfigError):
        select_gap(FlatTorus(2, TWO_PI), (1.1, 1.9))


@pytest.fixture(scope="module")
def equidist_cfg():
    return EquidistConfig(
        UniformTorus(TWO_PI, 4),
        (200.0, 220.0),
        Observable.cosine((1, 0)),
        M=4,
        seed=3,
        e_max=2000.0,
    )


def test_equidistribution_run(equidist_cfg):
    records, summary = run_equidistribution(equidist_cfg)
    assert summary["samples"] == 4
    rows = [r for rec in records for r in rec.rows]
    assert summary["eigenfunctions"] == len(rows) > 0
    assert summary["bound_floor"] == 1 / 16
    for r in rows:
        assert 200 <= r["lam"] <= 220
        assert r["me_1_0"] >= 0


def test_equidistribution_workers_identical(equidist_cfg):
    a, _ = run_equidistribution(equidist_cfg, workers=1)
    b, _ = run_equidistribution(equidist_cfg, workers=3)
    assert a == b


def test_equidistribution_rejects_box_and_empty_window():
    box = EquidistConfig(UniformTorus(TWO_PI, 4), (200.0, 220.0), Observable.cosine((1, 0)))
    object.__setattr__(box, "process", DisplacedLattice(2.0))
    with pytest.raises(ConfigError):
        run_equidistribution(box)
    empty = EquidistConfig(UniformTorus(TWO_PI, 4), (1.1, 1.9), Observable.cosine((1, 0)), M=1)
    with pytest.raises(ConfigError, match="nearest"):
        run_equidistribution(empty)


def test_theta_run_small():
    proc = DisplacedLattice(1.5)
    gap = select_gap(proc.geom, (60.0, 80.0))
    pairs = (((-0.75, -0.5), (0.75, -0.5)), ((-0.5, 0.5), (-0.5, 0.5)))
    cfg = ThetaConfig(proc, gap, pairs, Mollifier(0.2), M=3, seed=1, e_max=3000 * proc.geom.scale)
    records, est, summary = run_theta(cfg)
    assert summary["samples"] == 3
    total = sum(summary["root_counts"])
    for k, e in enumerate(est):
        vals = [rec.rows[0][f"theta_{k}"] for rec in records if not rec.excluded]
        assert e.mean == pytest.approx(np.mean(vals))
        assert e.per_state == pytest.approx(sum(vals) / total)
    assert est[0].distance == pytest.approx(1.5)
    # a coincident pair gives a sum of squared amplitudes
    assert est[1].mean > 0


def test_theta_needs_box():
    cfg = ThetaConfig(UniformTorus(TWO_PI, 4), 3, (((0, 0), (1, 1)),))
    with pytest.raises(ConfigError):
        run_theta(cfg)


def test_f_localization_test():
    est = [
        ThetaEstimate(((0, 0), (1, 0)), 1.0, 0.1, 0.01),
        ThetaEstimate(((0, 0), (3, 0)), 3.0, 0.5, 0.01),
    ]
    rep = f_localization_test(est, lambda r: math.exp(-r))
    assert [p["holds"] for p in rep["pairs"]] == [True, False]
    assert rep["violated"]
    assert rep["pairs"][1]["margin"] == pytest.approx(0.5 / math.exp(-3))
    with pytest.raises(ValueError):
        f_localization_test(est, lambda r: 1.0)


def test_localization_scan_with_injected_diagnostics():
    # analytic stand-in: IPR falls like 1/lambda, decay length grows with it
    def diagnose(ef):
        return LocalizationDiagnostics(1.0 / ef.lam, math.sqrt(ef.lam), 1.0, (0.0, 0.0))

    cfg = ScanConfig(UniformTorus(TWO_PI, 4), ((5.0, 20.0), (100.0, 120.0)), M=2, seed=0, e_max=2000.0)
    records, summary = localization_scan(cfg, diagnose=diagnose)
    assert len(records) == 2
    lo, hi = summary["windows"]
    assert lo["median_ipr"] > hi["median_ipr"]
    assert summary["crossing"] == [100.0, 120.0]
    assert summary["alpha"] == pytest.approx((17 / 416) / (3 + 34 / 416))


def test_localization_scan_real_diagnostics():
    cfg = ScanConfig(UniformTorus(TWO_PI, 4), ((5.0, 20.0),), M=2, seed=0, grid=64, e_max=2000.0)
    records, summary = localization_scan(cfg)
    rows = [r for rec in records[0] for r in rec.rows]
    assert rows
    assert all(1 / TWO_PI**2 <= r["ipr"] for r in rows)
