import math

import numpy as np
import pytest
from scipy import linalg, optimize

from pointscatter.arith import shell_counts
from pointscatter.errors import CoincidenceError, ConfigError
from pointscatter.geometry import DirichletBox, FlatTorus
from pointscatter.greens import GreensEvaluator
from pointscatter.secular import ScattererSet, SecularSystem, old_eigenspace_survivors

TWO_PI = 2 * math.pi
E_MAX = 4000.0


@pytest.fixture(scope="module")
def torus():
    return FlatTorus(2, TWO_PI)


@pytest.fixture(scope="module")
def ev(torus):
    return GreensEvaluator(torus, E_MAX)


def scalar_secular(lam, t, ev):
    # N = 1 on the unit-scale torus: every mode contributes |phi|^2 = 1/V
    bound = ev.table.bound
    r = shell_counts(bound).astype(float)
    q = np.flatnonzero(r)
    E = q.astype(float)
    V = TWO_PI**2
    reg = np.sum(r[q] * (1 / (E - lam) - E / (E * E + 1))) / V + ev.reg_tail(lam)
    im = np.sum(r[q] / (E * E + 1)) / V + ev.im_tail()
    return reg - t * im


@pytest.mark.parametrize("t", [0.0, 1.5, -2.0])
def test_single_scatterer_roots_match_scalar_oracle(torus, ev, t):
    sys = SecularSystem(ScattererSet(torus, [(1.0, 2.0)], t), ev)
    for j in range(12):
        a, b = torus.gap(j)
        roots = sys.find_new_eigenvalues(j)
        assert len(roots) == 1
        eps = 1e-9 * (b - a)
        ref = optimize.brentq(scalar_secular, a + eps, b - eps, args=(t, ev), xtol=1e-13)
        assert roots[0].lam == pytest.approx(ref, rel=1e-9)


def random_set(geom, n, seed, t=0.0):
    rng = np.random.default_rng(seed)
    return ScattererSet(geom, rng.uniform(0, geom.L, size=(n, geom.d)), t)


@pytest.mark.parametrize("seed", range(4))
def test_roots_interlace_and_are_bounded(torus, ev, seed):
    sys = SecularSystem(random_set(torus, 4, seed), ev)
    for j in range(25):
        a, b = torus.gap(j)
        roots = sys.find_new_eigenvalues(j)
        assert len(roots) <= 4
        for p in roots:
            assert a < p.lam < b
            assert p.gap == j
        assert [p.lam for p in roots] == sorted(p.lam for p in roots)


def test_root_is_zero_of_lu_determinant(torus, ev):
    sys = SecularSystem(random_set(torus, 4, 7, t=0.3), ev)
    for p in sys.find_new_eigenvalues(10):
        h = 1e-7 * p.lam
        dets = []
        for z in (p.lam - h, p.lam + h):
            lu, piv = linalg.lu_factor(sys.build_matrix(z))
            sign = (-1) ** np.sum(piv != np.arange(len(piv)))
            dets.append(sign * np.prod(np.diag(lu)))
        assert dets[0] * dets[1] < 0
        A = sys.build_matrix(p.lam)
        assert np.linalg.norm(A @ p.v) < 1e-8 * np.linalg.norm(A)


def test_branches_are_monotone(torus, ev):
    sys = SecularSystem(random_set(torus, 4, 2), ev)
    grid, mu = sys.scan(15, points=64)
    assert np.all(np.diff(mu, axis=0) >= -1e-9)


def test_derivative_matches_finite_difference(torus, ev):
    sys = SecularSystem(random_set(torus, 3, 3), ev)
    lam, h = 30.3, 1e-5
    fd = (sys.build_matrix(lam + h) - sys.build_matrix(lam - h)) / (2 * h)
    D = sys.derivative(lam)
    assert np.max(np.abs(D - fd)) < 1e-6 * np.max(np.abs(D))


def test_norm_squared_is_quadratic_form(torus, ev):
    sys = SecularSystem(random_set(torus, 4, 11), ev)
    for p in sys.find_new_eigenvalues(20):
        assert p.norm_sq == pytest.approx(p.v @ sys.derivative(p.lam) @ p.v, rel=1e-12)
        assert p.norm_sq > 0
        assert np.linalg.norm(p.v) == pytest.approx(1.0)


def test_symmetric_pair_eigenvectors(torus, ev):
    # two impurities on a torus always see equal diagonal entries
    sys = SecularSystem(ScattererSet(torus, [(1.0, 1.0), (3.0, 4.5)]), ev)
    for j in range(3, 9):
        for p in sys.find_new_eigenvalues(j):
            assert np.allclose(np.abs(p.v), 1 / math.sqrt(2), atol=1e-8)


def test_translation_invariance(torus, ev):
    a = SecularSystem(ScattererSet(torus, [(0.0, 0.0)]), ev)
    b = SecularSystem(ScattererSet(torus, [(2.0, 3.0)]), ev)
    for j in range(10):
        la = a.find_new_eigenvalues(j)[0].lam
        lb = b.find_new_eigenvalues(j)[0].lam
        assert abs(la - lb) <= 1e-8 * la


def test_box_roots_interlace():
    box = DirichletBox(2, 1.0)
    ev = GreensEvaluator(box, 3000 * box.scale)
    sys = SecularSystem(ScattererSet(box, [(0.1, -0.3), (-0.4, 0.5)]), ev)
    for j in range(10):
        a, b = box.gap(j)
        roots = sys.find_new_eigenvalues(j)
        assert len(roots) <= 2
        assert all(a < p.lam < b for p in roots)


def test_survivors_torus(torus):
    assert old_eigenspace_survivors(ScattererSet(torus, [(0.7, 1.9)]), 1) == 3
    generic = random_set(torus, 4, 0)
    assert old_eigenspace_survivors(generic, 1) == 0
    assert old_eigenspace_survivors(generic, 5) == 4


def test_survivors_box_center():
    # every mode with an even index vanishes at the centre of the box
    box = DirichletBox(2, 1.0)
    center = ScattererSet(box, [(0.0, 0.0)])
    assert old_eigenspace_survivors(center, 2) == 0
    assert old_eigenspace_survivors(center, 5) == 2
    assert old_eigenspace_survivors(center, 8) == 1


def test_survivors_rejects_non_level(torus):
    with pytest.raises(ConfigError):
        old_eigenspace_survivors(ScattererSet(torus, [(0.7, 1.9)]), 3)


def test_scatterer_validation(torus):
    with pytest.raises(CoincidenceError):
        ScattererSet(torus, [(1.0, 1.0), (1.0 + TWO_PI, 1.0)])
    with pytest.raises(ConfigError):
        ScattererSet(torus, [(1.0, 1.0, 1.0)])
    with pytest.raises(ConfigError):
        ScattererSet.from_phase(torus, [(1.0, 1.0)], math.pi)
    s = ScattererSet.from_phase(torus, [(1.0, 1.0)], math.pi / 2)
    assert s.t == pytest.approx(1.0)


def test_system_needs_evaluator_or_cutoff(torus):
    with pytest.raises(ConfigError):
        SecularSystem(ScattererSet(torus, [(1.0, 1.0)]))
    sys = SecularSystem(ScattererSet(torus, [(1.0, 1.0)]), lam_max=50.0)
    assert sys.ev.e_max >= 400
