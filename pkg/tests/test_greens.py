import math

import numpy as np
import pytest
from scipy import integrate, special

from pointscatter.errors import CoincidenceError, ConvergenceError, PoleError
from pointscatter.geometry import DirichletBox, FlatTorus
from pointscatter.greens import (
    GreensEvaluator,
    continuum_tail_table,
    default_cutoff,
    offdiag_continuum,
    reference_green_images,
    reference_green_real,
)

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def ev2000():
    return GreensEvaluator(FlatTorus(2, TWO_PI), 2000)


def image_im(geom, x, y):
    return reference_green_images(geom, np.array([x]), np.array(y)).imag[0]


@pytest.mark.parametrize("e_max", [500, 2000, 8000])
def test_im_reference_matches_image_sum(e_max):
    torus = FlatTorus(2, TWO_PI)
    ev = GreensEvaluator(torus, e_max)
    x, y = (0.3, 1.1), (2.0, -0.7)
    err = abs(ev.im_G_ref(x, y) - image_im(torus, x, y))
    assert err <= ev.tail_estimate(0.0, "im")


def test_im_reference_diagonal():
    torus = FlatTorus(2, TWO_PI)
    ev = GreensEvaluator(torus, 8000)
    x = (0.3, 1.1)
    # free kernel gives 1/8 at the origin, plus the nonzero images
    n = np.array([(a, b) for a in range(-12, 13) for b in range(-12, 13) if (a, b) != (0, 0)])
    r = TWO_PI * np.hypot(n[:, 0], n[:, 1])
    ref = 0.125 + np.sum(0.25 * special.hankel1(0, np.exp(0.25j * math.pi) * r).real)
    assert abs(ev.im_G_ref(x, x) - ref) < 1e-8


@pytest.mark.parametrize("factor", [500, 4000])
def test_im_reference_box(factor):
    box = DirichletBox(2, 1.0)
    ev = GreensEvaluator(box, factor * box.scale)
    x, y = (0.3, 0.1), (-0.5, 0.6)
    assert abs(ev.im_G_ref(x, y) - image_im(box, x, y)) <= ev.tail_estimate(0.0, "im")


def test_im_reference_3d():
    torus = FlatTorus(3, TWO_PI)
    ev = GreensEvaluator(torus, 900)
    x, y = (0.3, 1.1, 0.0), (2.0, -0.7, 1.5)
    assert abs(ev.im_G_ref(x, y) - image_im(torus, x, y)) < 5e-4


@pytest.mark.parametrize("geom", [FlatTorus(2, TWO_PI), DirichletBox(2, 1.3)], ids=["torus", "box"])
def test_fast_real_reference_matches_images(geom):
    rng = np.random.default_rng(5)
    lo = 0.0 if geom.kind == "torus" else -geom.L
    hi = geom.L
    X = rng.uniform(lo, hi, size=(40, 2))
    y = rng.uniform(lo, hi, size=2)
    X[0] = y + 1e-3  # exercise the direct ker branch
    fast = reference_green_real(geom, X, y)
    slow = reference_green_images(geom, X, y).real
    assert np.max(np.abs(fast - slow)) < 1e-10


def test_fast_real_reference_coincident_is_inf():
    torus = FlatTorus(2, TWO_PI)
    assert np.isinf(reference_green_real(torus, [[1.0, 1.0]], (1.0, 1.0))[0])


def test_regularized_offdiag_cutoff_consistency():
    # adding the continuum tail makes results independent of the cutoff
    torus = FlatTorus(2, TWO_PI)
    x, y, lam = (0.3, 1.1), (2.0, -0.7), 50.5
    r = torus.distance(x, y)
    vals = []
    for e_max in (2000, 8000):
        ev = GreensEvaluator(torus, e_max)
        vals.append(ev.regularized_offdiag(lam, x, y) + offdiag_continuum(ev, lam, r))
    assert abs(vals[0] - vals[1]) <= GreensEvaluator(torus, 2000).tail_estimate(lam)


def test_regularized_diag_cutoff_consistency():
    torus = FlatTorus(2, TWO_PI)
    x, lam = (0.3, 1.1), 50.5
    ev_lo, ev_hi = GreensEvaluator(torus, 2000), GreensEvaluator(torus, 8000)
    diff = abs(ev_lo.regularized_diag(lam, x) - ev_hi.regularized_diag(lam, x))
    assert diff <= ev_lo.tail_estimate(lam)


def test_regularized_diag_translation_invariant(ev2000):
    a = ev2000.regularized_diag(50.5, (0.0, 0.0))
    b = ev2000.regularized_diag(50.5, (2.0, 3.0))
    assert abs(a - b) < 1e-12


def test_offdiag_swap_symmetry(ev2000):
    x, y = (0.3, 1.1), (2.0, -0.7)
    assert ev2000.regularized_offdiag(50.5, x, y) == ev2000.regularized_offdiag(50.5, y, x)


def test_derivative_matches_finite_difference(ev2000):
    pos = np.array([[0.3, 1.1], [2.0, -0.7], [4.4, 5.0]])
    lam, h = 50.5, 1e-4
    kern = ev2000.shell_kernels(pos)

    def A(z):
        return ev2000.assemble(kern, ev2000.reg_weights(z), ev2000.reg_tail(z))

    fd = (A(lam + h) - A(lam - h)) / (2 * h)
    D = ev2000.derivative_matrix(lam, pos)
    assert np.max(np.abs(D - fd)) < 1e-6 * np.max(np.abs(D))
    assert np.all(np.linalg.eigvalsh(D) > 0)


@pytest.mark.parametrize("r", [0.05, 0.3, 1.0])
def test_offdiag_continuum_matches_quadrature(ev2000, r):
    lam = 50.5
    Kc = math.sqrt(ev2000.e_cont)

    def f(k):
        return special.j0(k * r) * (1 / (k * k - lam) - k * k / (k**4 + 1)) * k

    ref, _ = integrate.quad(f, Kc, Kc + 4000, limit=5000)
    assert abs(offdiag_continuum(ev2000, lam, r) - ref / TWO_PI) < 1e-9


def test_offdiag_continuum_limits(ev2000):
    lam = 50.5
    assert abs(offdiag_continuum(ev2000, lam, 1e-6) - ev2000.reg_tail(lam)) < 1e-9
    assert abs(offdiag_continuum(ev2000, lam, 3.0)) < 1e-5
    with pytest.raises(CoincidenceError):
        offdiag_continuum(ev2000, lam, 0.0)


def test_continuum_table_matches_direct(ev2000):
    lam = 50.5
    table = continuum_tail_table(ev2000, lam, 2.0)
    r = np.linspace(1e-4, 2.0, 97)
    assert np.max(np.abs(table(r) - offdiag_continuum(ev2000, lam, r))) < 1e-9
    assert table(0.0) == pytest.approx(ev2000.reg_tail(lam), abs=1e-15)


def test_tail_estimate_shrinks_with_cutoff():
    torus = FlatTorus(2, TWO_PI)
    tails = [GreensEvaluator(torus, E).tail_estimate(50.0) for E in (500, 2000, 8000)]
    assert tails[0] > tails[1] > tails[2]


def test_pole_and_cutoff_errors(ev2000):
    with pytest.raises(PoleError):
        ev2000.regularized_diag(25.0, (0.0, 0.0))
    with pytest.raises(ConvergenceError):
        ev2000.regularized_diag(5000.0, (0.0, 0.0))
    with pytest.raises(CoincidenceError):
        ev2000.regularized_offdiag(50.5, (1.0, 1.0), (1.0, 1.0 + TWO_PI))


def test_strict_mode_raises_on_large_tail():
    torus = FlatTorus(2, TWO_PI)
    ev = GreensEvaluator(torus, 200, tol=1e-9, strict=True)
    with pytest.raises(ConvergenceError) as info:
        ev.regularized_diag(50.5, (0.0, 0.0))
    assert info.value.tail > 1e-9
    assert not GreensEvaluator(torus, 200, tol=1e-9).converged(50.5)


def test_default_cutoff_is_generous():
    torus = FlatTorus(2, TWO_PI)
    assert default_cutoff(torus, 1e4) == 8e4
    assert default_cutoff(torus, 10.0) >= 2000
