import math

import numpy as np
import pytest
from scipy import integrate

from pointscatter.arith import chebyshev_rhs
from pointscatter.errors import CoincidenceError, DomainError
from pointscatter.geometry import DirichletBox, FlatTorus
from pointscatter.greens import GreensEvaluator
from pointscatter.secular import ScattererSet, SecularSystem
from pointscatter.wavefield import (
    Eigenfunction,
    Mollifier,
    Observable,
    chebyshev_ratio,
    envelope_fit,
    inverse_participation_ratio,
)

TWO_PI = 2 * math.pi
POSITIONS = [(0.5, 0.7), (2.9, 1.3), (4.1, 4.6), (1.2, 5.5)]


@pytest.fixture(scope="module")
def system():
    torus = FlatTorus(2, TWO_PI)
    return SecularSystem(ScattererSet(torus, POSITIONS), GreensEvaluator(torus, 4000))


@pytest.fixture(scope="module")
def ef(system):
    pair = system.find_new_eigenvalues(20)[0]
    return Eigenfunction(system, pair)


@pytest.fixture(scope="module")
def box_ef():
    box = DirichletBox(2, 1.0)
    sys = SecularSystem(ScattererSet(box, [(0.1, -0.3), (-0.4, 0.5)]), GreensEvaluator(box, 3000 * box.scale))
    return Eigenfunction(sys, sys.find_new_eigenvalues(6)[0])


def test_norm_three_way(ef):
    n = ef.norm_squared()
    assert abs(n - ef.mode_norm_squared()) <= 2 * ef.mode_norm_tail()
    F, cell = ef.truncated_grid(256)
    grid = float(np.sum(F * F) * cell)
    assert grid == pytest.approx(ef.mode_norm_squared() / n, rel=1e-10)


def test_box_norm_three_way(box_ef):
    assert abs(box_ef.norm_squared() - box_ef.mode_norm_squared()) <= 2 * box_ef.mode_norm_tail()
    F, cell = box_ef.truncated_grid(256)
    assert float(np.sum(F * F) * cell) == pytest.approx(1.0, abs=1e-3)


def test_helmholtz_residual(ef):
    # fourth-order finite-difference Laplacian away from the impurities
    h = 1e-2
    lap_w = np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
    for x in [(3.3, 3.1), (5.5, 2.0), (1.0, 3.0)]:
        x = np.array(x)
        offs = np.arange(-2, 3) * h
        px = np.array([x + (o, 0) for o in offs])
        py = np.array([x + (0, o) for o in offs])
        lap = lap_w @ ef.evaluate(px) + lap_w @ ef.evaluate(py)
        psi = ef.evaluate(x)
        # what is left is the mode-sum truncation, shrinking with the cutoff
        assert abs(lap + ef.lam * psi) < 1e-4 * ef.lam


def test_pointwise_independent_of_cutoff(system, ef):
    torus = system.geom
    other = SecularSystem(system.scatterers, GreensEvaluator(torus, 12000))
    pair = [p for p in other.find_new_eigenvalues(20) if abs(p.lam - ef.lam) < 1e-4][0]
    ef2 = Eigenfunction(other, pair)
    X = np.array([(3.3, 3.1), (0.6, 0.8), (2.9, 1.25), (6.0, 6.0)])
    assert np.max(np.abs(ef.evaluate(X) - ef2.evaluate(X))) < 1e-4


def test_log_singularity_at_impurity(ef):
    # psi ~ -v_j log(r) / (2 pi ||Psi||) near x_j
    x0 = np.array(POSITIONS[1])
    d = np.array([0.6, 0.8])
    c = -ef.v[1] / (TWO_PI * math.sqrt(ef.norm_squared()))
    rem = [ef.evaluate(x0 + r * d) - c * math.log(r) for r in (1e-3, 1e-4, 1e-5)]
    # the remainder is smooth, so successive differences shrink linearly in r
    d1, d2 = abs(rem[0] - rem[1]), abs(rem[1] - rem[2])
    assert d2 < 0.2 * d1
    assert d2 < 1e-3
    with pytest.raises(CoincidenceError):
        ef.evaluate(x0)


@pytest.mark.parametrize("zeta", [(1, 0), (1, 1), (2, 1)])
def test_matrix_element_matches_grid(ef, zeta):
    F, cell = ef.truncated_grid(256)
    ax, _ = ef.grid_axes(256)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    e = np.exp(1j * (zeta[0] * X + zeta[1] * Y)) / TWO_PI
    quad = np.sum(e * F * F) * cell
    # the grid keeps every mode, so the midpoint rule is exact here
    assert abs(ef.matrix_element(zeta) - quad) < 1e-10


def test_matrix_element_identities(ef):
    assert ef.matrix_element((0, 0)) == pytest.approx(1 / TWO_PI, abs=1e-15)
    for z in [(1, 0), (2, -3), (0, 5)]:
        a, b = ef.matrix_element(z), ef.matrix_element(tuple(-c for c in z))
        assert abs(a - b.conjugate()) < 1e-12
    assert ef.matrix_element((500, 0)) == 0


def test_matrix_element_torus_only(box_ef):
    with pytest.raises(DomainError):
        box_ef.matrix_element((1, 0))


def test_observable_integral(ef):
    a = Observable(2.0, {(1, 0): 0.5 + 0.25j, (-1, 0): 0.5 - 0.25j})
    value, dev = ef.observable_integral(a)
    me = ef.matrix_element((1, 0))
    assert dev == pytest.approx(2 * (me * (0.5 + 0.25j)).real)
    assert value == pytest.approx(2.0 + dev)


def test_observable_validation_and_values():
    with pytest.raises(ValueError):
        Observable(0.0, {(1, 0): 1.0})
    with pytest.raises(ValueError):
        Observable(0.0, {(0, 0): 1.0})
    torus = FlatTorus(2, TWO_PI)
    a = Observable.cosine((1, 0))
    assert a(torus, (0.0, 0.0))[0] == pytest.approx(2 / TWO_PI)
    b = Observable.random(np.random.default_rng(1), 5)
    assert len(b.coeffs) == 10
    x = np.random.default_rng(2).uniform(0, TWO_PI, (20, 2))
    assert np.all(np.isfinite(b(torus, x)))


def test_mollifier_unit_mass():
    chi = Mollifier(0.3)
    mass, _ = integrate.dblquad(
        lambda y, x: chi(math.hypot(x, y)), -0.3, 0.3, lambda x: -0.3, lambda x: 0.3, epsabs=1e-12
    )
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert chi(0.31) == 0


def test_smoothed_amplitude_matches_cartesian_rule(ef):
    chi = Mollifier(0.25)
    x = np.array([3.3, 3.1])
    n = 121
    g = np.linspace(-0.25, 0.25, n + 1)
    mid = 0.5 * (g[1:] + g[:-1])
    U, V = np.meshgrid(mid, mid, indexing="ij")
    w = chi(np.hypot(U, V)) * (g[1] - g[0]) ** 2
    vals = ef.evaluate(np.stack([U.ravel(), V.ravel()], axis=1) + x) ** 2
    ref = float(np.sum(w.ravel() * vals))
    amp = ef.smoothed_amplitude(chi, x)
    assert amp**2 == pytest.approx(ref, rel=1e-3)
    assert ef.two_point_correlation(chi, x, x) == pytest.approx(amp**2)
    with pytest.raises(CoincidenceError):
        ef.smoothed_amplitude(chi, np.array(POSITIONS[0]) + 0.1)


def test_box_smoothed_amplitude_near_wall(box_ef):
    # mass outside the box counts as zero
    amp = box_ef.smoothed_amplitude(Mollifier(0.25), (0.9, 0.9))
    assert 0 <= amp < 10


def test_ipr_oracles():
    n = 400
    L = 1.0
    ax = -L + (np.arange(n) + 0.5) * 2 * L / n
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    phi = np.sin(np.pi * (X + L) / (2 * L)) * np.sin(np.pi * (Y + L) / (2 * L)) / L
    cell = (2 * L / n) ** 2
    assert inverse_participation_ratio(phi**2, cell) == pytest.approx(9 / (16 * L**2), rel=1e-10)
    assert inverse_participation_ratio(np.ones((n, n)), cell) == pytest.approx(1 / (4 * L**2))
    assert inverse_participation_ratio(3 * phi**2, cell) == pytest.approx(9 / 16)


def test_envelope_fit():
    r = np.linspace(0, 10, 2001)
    l_loc, r2 = envelope_fit(r, np.exp(-r / 3), 40)
    assert l_loc == pytest.approx(3.0, rel=1e-3)
    assert r2 == pytest.approx(1.0, abs=1e-6)
    l_loc, _ = envelope_fit(r, np.exp(r / 3), 40)
    assert l_loc is None


def test_localization_diagnostics(ef):
    diag = ef.localization_diagnostics(128)
    assert 1 / TWO_PI**2 <= diag.ipr < 1.0
    assert len(diag.center) == 2


def test_chebyshev_ratio(ef):
    rhs = chebyshev_rhs(ef.lam, (1, 0), 0.17, 4)
    assert chebyshev_ratio(ef, (1, 0), 0.17) == pytest.approx(abs(ef.matrix_element((1, 0))) ** 2 / rhs)
