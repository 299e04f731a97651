"""Truncated mode sums for the regularized Green's function combinations.

For a point set ``X`` every needed kernel has the form

    K_w(x, y) = sum_n w(E_n) Re[phi_n(x) conj(phi_n(y))]

with a weight ``w`` that depends only on the eigenvalue.  Modes sharing an
eigenvalue are summed first into *shell kernels* (one number per point pair
and distinct eigenvalue), so any weight is applied afterwards with a single
matrix-vector product.  Shells are processed in increasing eigenvalue and
modes lexicographically within a shell, which fixes the summation order.

Weights used here, with ``z = i`` the fixed reference energy:

* regularized resolvent  ``1/(E - lam) - E/(E^2 + 1)``  (decays like E^-2)
* imaginary reference    ``1/(E^2 + 1)``
* lambda-derivative      ``1/(E - lam)^2``

Past the cutoff the diagonal of each sum is completed by a continuum
integral against the local Weyl density ``omega_d (d/2) E^{d/2-1} / (2 pi)^d``.
Off-diagonal tails oscillate; they are left out of the secular matrix (their
size is ``O(lam e_cont^{-5/4} r^{-3/2})``) and only added by
:func:`offdiag_continuum` for pointwise values close to an impurity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, interpolate, special

from .errors import CoincidenceError, ConvergenceError, PoleError
from .geometry import SpectralGeometry

DEFAULT_TOL = 1e-6
# Largest number of (pair, mode) products held in memory at once.
_CHUNK = 2_000_000
_MIN_SEPARATION = 1e-9
_IMAGE_DECAY = math.sqrt(0.5)  # Im sqrt(i)


def weyl_density(E: float, d: int) -> float:
    if d == 2:
        return 1.0 / (4 * math.pi)
    return math.sqrt(max(E, 0.0)) / (4 * math.pi**2)


def default_cutoff(geom: SpectralGeometry, lam_max: float) -> float:
    """Truncation energy used when the caller does not choose one."""
    return max(8.0 * lam_max, lam_max + 2000 * geom.scale, 400 * geom.scale)


@dataclass(frozen=True)
class ShellKernels:
    """Per-shell pair sums for a fixed pair of point sets.

    ``values[p, s]`` is sum over modes in shell ``s`` of
    ``Re phi(x_a) conj phi(y_b)`` for pair ``p = (a, b)``.
    """

    pairs: np.ndarray  # (P, 2) indices into (X, Y)
    values: np.ndarray  # (P, S)
    shape: tuple

    def contract(self, weights: np.ndarray) -> np.ndarray:
        return self.values @ weights


class GreensEvaluator:
    """Green's function sums on one geometry, truncated at ``e_max``.

    ``tol`` is the target tail tolerance.  With ``strict=True`` any value
    whose tail estimate exceeds it raises :class:`ConvergenceError`;
    otherwise callers may query :meth:`converged`.
    """

    def __init__(self, geom: SpectralGeometry, e_max: float, tol: float = DEFAULT_TOL, strict: bool = False):
        self.geom = geom
        self.tol = float(tol)
        self.strict = bool(strict)
        self.table = geom.mode_table(e_max)
        q = self.table.invariants
        starts = np.flatnonzero(np.r_[True, q[1:] != q[:-1]])
        self._shell_starts = starts
        self.shell_invariants = q[starts]
        self.shell_energies = geom.scale * self.shell_invariants.astype(float)
        self._level_set = set(int(v) for v in self.shell_invariants)
        self.e_max = float(e_max)
        # continuum starts half a shell above the last kept invariant
        self.e_cont = geom.scale * (self.table.bound + 0.5)
        E = self.shell_energies
        self._ref_w = E / (E * E + 1)
        self._im_w = 1.0 / (E * E + 1)

    # -- basic checks ---------------------------------------------------
    @property
    def n_modes(self) -> int:
        return len(self.table)

    def check_lambda(self, lam: float) -> None:
        if lam >= self.e_cont - self.geom.scale:
            raise ConvergenceError(
                f"lambda = {lam} lies above the truncation energy {self.e_max}", tail=math.inf
            )
        q = round(lam / self.geom.scale)
        if abs(lam - self.geom.scale * q) <= 1e-14 * max(1.0, abs(lam)) and q in self._level_set:
            raise PoleError(f"lambda = {lam} is a Laplacian eigenvalue (invariant {q})")

    # -- tails ----------------------------------------------------------
    def _continuum(self, fn) -> float:
        d, Ec = self.geom.d, self.e_cont
        if d == 2:
            return None  # closed forms below
        val, _ = integrate.quad(lambda E: weyl_density(E, 3) * fn(E), Ec, np.inf, limit=200, epsabs=1e-14)
        return val

    def reg_tail(self, lam: float) -> float:
        Ec = self.e_cont
        if self.geom.d == 2:
            return (0.5 * math.log1p(Ec * Ec) - math.log(Ec - lam)) / (4 * math.pi)
        return self._continuum(lambda E: 1.0 / (E - lam) - E / (E * E + 1))

    def im_tail(self) -> float:
        Ec = self.e_cont
        if self.geom.d == 2:
            return math.atan2(1.0, Ec) / (4 * math.pi)
        return self._continuum(lambda E: 1.0 / (E * E + 1))

    def deriv_tail(self, lam: float) -> float:
        Ec = self.e_cont
        if self.geom.d == 2:
            return 1.0 / (4 * math.pi * (Ec - lam))
        return self._continuum(lambda E: 1.0 / (E - lam) ** 2)

    def tail_estimate(self, lam: float = 0.0, kind: str = "reg") -> float:
        """Heuristic error left after the continuum correction.

        The lattice-count remainder at the cutoff times the summand there;
        the remainder is taken as ``4 R^{1/3}`` in d=2 and ``4 R^{1/2}`` in d=3.
        """
        Ec, d = self.e_cont, self.geom.d
        R = max(self.table.bound, 1)
        if kind == "reg":
            f = abs(1.0 / (Ec - lam) - Ec / (Ec * Ec + 1))
        elif kind == "im":
            f = 1.0 / (Ec * Ec + 1)
        else:
            f = 1.0 / (Ec - lam) ** 2
        remainder = 4 * R ** (1 / 3 if d == 2 else 1 / 2)
        return f * remainder / self.geom.volume

    def converged(self, lam: float = 0.0, kind: str = "reg") -> bool:
        return self.tail_estimate(lam, kind) <= self.tol

    def _guard(self, lam, kind):
        if self.strict:
            tail = self.tail_estimate(lam, kind)
            if tail > self.tol:
                raise ConvergenceError(
                    f"tail estimate {tail:.3g} exceeds tolerance {self.tol:.3g} at cutoff {self.e_max}", tail
                )

    # -- weights --------------------------------------------------------
    def reg_weights(self, lam: float) -> np.ndarray:
        return 1.0 / (self.shell_energies - lam) - self._ref_w

    def im_weights(self) -> np.ndarray:
        return self._im_w

    def deriv_weights(self, lam: float) -> np.ndarray:
        return 1.0 / (self.shell_energies - lam) ** 2

    # -- shell kernels --------------------------------------------------
    def _pair_products(self, X, Y, pa, pb):
        """Re phi(x_a) conj phi(y_b) for every mode; returns (len(pa), M)."""
        geom = self.geom
        idx = self.table.indices
        if geom.kind == "torus":
            delta = X[pa] - Y[pb]
            k = geom.wavevectors(idx)
            return np.cos(delta @ k.T) / geom.volume
        fx = geom.mode_values(idx, X[pa])
        fy = geom.mode_values(idx, Y[pb])
        return fx * fy

    def shell_kernels(self, X, Y=None) -> ShellKernels:
        """Shell sums for the upper triangle of X (Y is None) or all of X x Y."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if Y is None:
            a, b = np.triu_indices(len(X))
            Yp = X
            shape = (len(X), len(X))
        else:
            Yp = np.atleast_2d(np.asarray(Y, dtype=float))
            a, b = np.meshgrid(np.arange(len(X)), np.arange(len(Yp)), indexing="ij")
            a, b = a.ravel(), b.ravel()
            shape = (len(X), len(Yp))
        M = max(self.n_modes, 1)
        step = max(1, _CHUNK // M)
        out = np.empty((len(a), len(self._shell_starts)))
        for s in range(0, len(a), step):
            prods = self._pair_products(X, Yp, a[s : s + step], b[s : s + step])
            out[s : s + step] = np.add.reduceat(prods, self._shell_starts, axis=1)
        return ShellKernels(np.stack([a, b], axis=1), out, shape)

    def assemble(self, kern: ShellKernels, weights: np.ndarray, diag_tail: float = 0.0) -> np.ndarray:
        """Matrix from shell kernels; the continuum tail is added on coincident pairs."""
        vals = kern.contract(weights)
        mat = np.zeros(kern.shape)
        a, b = kern.pairs[:, 0], kern.pairs[:, 1]
        mat[a, b] = vals
        if kern.shape[0] == kern.shape[1] and np.all(a <= b):
            mat[b, a] = vals
            mat[np.diag_indices(kern.shape[0])] += diag_tail
        return mat

    # -- point operations -----------------------------------------------
    def _check_distinct(self, x, y):
        if self.geom.distance(x, y) < _MIN_SEPARATION * self.geom.L:
            raise CoincidenceError(f"points {x} and {y} coincide; use regularized_diag")

    def _pair_value(self, weights, x, y):
        k = self.shell_kernels(np.array([x, y], dtype=float))
        # pairs of triu(2): (0,0), (0,1), (1,1)
        return float(k.values[1] @ weights), k

    def regularized_offdiag(self, lam: float, x, y) -> float:
        """G_lam(x, y) - Re G_i(x, y) for distinct points."""
        self.check_lambda(lam)
        self._check_distinct(x, y)
        self._guard(lam, "reg")
        # symmetric pair ordering makes the result exactly swap invariant
        x, y = sorted([tuple(map(float, x)), tuple(map(float, y))])
        return self._pair_value(self.reg_weights(lam), x, y)[0]

    def regularized_diag(self, lam: float, x) -> float:
        """Diagonal of the regularized resolvent, including the continuum tail."""
        self.check_lambda(lam)
        self._guard(lam, "reg")
        k = self.shell_kernels(np.array([x], dtype=float))
        return float(k.values[0] @ self.reg_weights(lam)) + self.reg_tail(lam)

    def im_G_ref(self, x, y) -> float:
        """Im G_i(x, y); diagonal allowed."""
        self._guard(0.0, "im")
        x, y = sorted([tuple(map(float, x)), tuple(map(float, y))])
        same = self.geom.distance(x, y) == 0.0
        k = self.shell_kernels(np.array([x, y], dtype=float))
        val = float(k.values[1] @ self.im_weights())
        return val + (self.im_tail() if same else 0.0)

    def derivative_matrix(self, lam: float, positions) -> np.ndarray:
        """d/dlam of the secular matrix: Gram matrix of (phi_n(x_j)/(E_n - lam))_n."""
        self.check_lambda(lam)
        self._guard(lam, "deriv")
        k = self.shell_kernels(positions)
        return self.assemble(k, self.deriv_weights(lam), self.deriv_tail(lam))


# -- independent closed forms for G_i ----------------------------------------

def _free_green_i(r: np.ndarray, d: int) -> np.ndarray:
    """Free-space resolvent kernel of -Delta at z = i."""
    k = np.exp(1j * np.pi / 4)
    if d == 2:
        return 0.25j * special.hankel1(0, k * r)
    return np.exp(1j * k * r) / (4 * np.pi * r)


def _image_offsets(period: float, d: int, reach: float) -> np.ndarray:
    m = int(math.ceil(reach / period)) + 1
    ax = np.arange(-m, m + 1)
    g = np.meshgrid(*([ax] * d), indexing="ij")
    return period * np.stack([v.ravel() for v in g], axis=1)


def reference_green_images(geom: SpectralGeometry, x, y, reach: float = 60.0) -> np.ndarray:
    """G_i(x, y) by the method of images, for arrays of points x (P, d), y (d,).

    Exponential decay of the free kernel at z = i makes the image sum
    converge to double precision within ``reach``.  Coincident points
    (including coincident images) return inf.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    d = geom.d
    if geom.kind == "torus":
        offs = _image_offsets(geom.L, d, reach)
        sources = [(y + offs, np.ones(len(offs)))]
    else:
        L = geom.L
        offs = _image_offsets(4 * L, d, reach)
        sources = []
        for signs in np.ndindex(*([2] * d)):
            s = np.array(signs)
            img = np.where(s == 0, y, 2 * L - y)
            sign = (-1.0) ** np.sum(s)
            sources.append((img + offs, np.full(len(offs), sign)))
    out = np.zeros(len(x), dtype=complex)
    for pts, sg in sources:
        r = np.linalg.norm(x[:, None, :] - pts[None, :, :], axis=2)
        rows, cols = np.nonzero(r <= reach)
        rr = r[rows, cols]
        g = np.full(len(rr), np.inf, dtype=complex)
        pos = rr > 0
        g[pos] = _free_green_i(rr[pos], d)
        np.add.at(out, rows, g * sg[cols])
    return out


_SPLINE_FLOOR = 0.5


@lru_cache(maxsize=4)
def _kelvin_spline(reach: float):
    # ker is smooth away from 0; a cubic spline at step 1e-3 is good to ~1e-12
    n = int(math.ceil((reach - _SPLINE_FLOOR) / 1e-3)) + 1
    x = np.linspace(_SPLINE_FLOOR, reach + 1.0, n)
    return interpolate.CubicSpline(x, special.ker(x) / (2 * math.pi))


def reference_green_real(geom: SpectralGeometry, x, y, reach: float = 60.0) -> np.ndarray:
    """Re G_i(x, y) by images; the fast path used for pointwise evaluation.

    In d=2 the real part of the free kernel is ker(r)/(2 pi), taken from a
    spline table beyond r = 0.5 and from scipy below.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    d = geom.d
    if d != 2:
        return reference_green_images(geom, x, y, reach).real
    if geom.kind == "torus":
        imgs = y + _image_offsets(geom.L, d, reach)
        signs = np.ones(len(imgs))
    else:
        L = geom.L
        offs = _image_offsets(4 * L, d, reach)
        imgs, signs = [], []
        for flip in np.ndindex(2, 2):
            f = np.array(flip)
            imgs.append(np.where(f == 0, y, 2 * L - y) + offs)
            signs.append(np.full(len(offs), (-1.0) ** int(f.sum())))
        imgs, signs = np.concatenate(imgs), np.concatenate(signs)
    # drop images that cannot reach any point of x
    lo, hi = x.min(axis=0) - reach, x.max(axis=0) + reach
    keep = np.all((imgs >= lo) & (imgs <= hi), axis=1)
    imgs, signs = imgs[keep], signs[keep]
    r2 = (x[:, 0, None] - imgs[None, :, 0]) ** 2 + (x[:, 1, None] - imgs[None, :, 1]) ** 2
    rows, cols = np.nonzero(r2 <= reach * reach)
    r = np.sqrt(r2[rows, cols])
    vals = np.empty(len(r))
    far = r >= _SPLINE_FLOOR
    vals[far] = _kelvin_spline(float(reach))(r[far])
    close = ~far
    if np.any(close):
        rc = r[close]
        with np.errstate(divide="ignore"):
            vals[close] = np.where(rc > 0, special.ker(np.maximum(rc, 1e-300)) / (2 * math.pi), np.inf)
    return np.bincount(rows, weights=vals * signs[cols], minlength=len(x))


def offdiag_continuum(ev: GreensEvaluator, lam: float, r):
    """Continuum tail of the regularized resolvent at separations r > 0.

    Tends to ``ev.reg_tail(lam)`` as r -> 0 and decays once ``r * sqrt(e_cont)``
    is large.  Used to keep pointwise values continuous as a point approaches
    an impurity.  Accepts a scalar or an array of separations.
    """
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr <= 0):
        raise CoincidenceError("separation must be positive")
    if ev.geom.d == 2:
        out = _continuum_tail_2d(lam, ev.e_cont, r_arr)
    else:
        out = np.array([_continuum_tail_3d(lam, ev.e_cont, x) for x in r_arr])
    return float(out[0]) if np.ndim(r) == 0 else out


@lru_cache(maxsize=8)
def _tail_nodes(Kc: float, order: int = 16):
    # graded panels near k = 0 where the integrand varies on the unit scale,
    # then panels of width <= 2 up to the cutoff
    head = [e for e in (0.0, 0.25, 0.5, 1.0, 2.0, 4.0) if e < Kc]
    body = np.linspace(head[-1], Kc, max(1, int(math.ceil((Kc - head[-1]) / 2.0))) + 1)
    edges = np.concatenate([head[:-1], body])
    gx, gw = np.polynomial.legendre.leggauss(order)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + h[:, None] * gx).ravel(), (h[:, None] * gw).ravel()


def continuum_tail_table(ev: GreensEvaluator, lam: float, r_max: float):
    """Spline of :func:`offdiag_continuum` on [0, r_max], exact at r = 0.

    The tail oscillates on the scale 1/sqrt(e_cont); twenty nodes per unit of
    that scale keep the interpolation error far below the tail itself.
    """
    Kc = math.sqrt(ev.e_cont)
    n = max(16, int(math.ceil(20 * Kc * r_max))) + 1
    # the tail carries r^2 log r terms at the origin; tabulate in u = r^(1/3)
    u = np.linspace(0.0, r_max ** (1 / 3), n)
    vals = np.empty(n)
    vals[0] = ev.reg_tail(lam)
    vals[1:] = offdiag_continuum(ev, lam, u[1:] ** 3)
    spline = interpolate.CubicSpline(u, vals)
    return lambda r: spline(np.cbrt(r))


def _continuum_tail_2d(lam, e_cont, r):
    # whole half-line transform in closed form, minus the part below the cutoff
    s, Kc = math.sqrt(lam), math.sqrt(e_cont)
    full = -0.5 * math.pi * special.y0(s * r) - special.kv(0, np.exp(0.25j * math.pi) * r).real
    k, w = _tail_nodes(Kc)
    J = special.j0(np.outer(r, k))
    g = J * (k / (k + s))
    gs = special.j0(s * r) * 0.5
    pole = ((g - gs[:, None]) / (k - s)) @ w + gs * math.log((Kc - s) / s)
    smooth = (J * (k**3 / (k**4 + 1))) @ w
    return (full - (pole - smooth)) / (2 * math.pi)


def _continuum_tail_3d(lam, e_cont, r):
    Kc = math.sqrt(e_cont)

    def f(k):
        E = k * k
        return 1.0 / (E - lam) - E / (E * E + 1)

    val, _ = integrate.quad(lambda k: f(k) * k / r, Kc, np.inf, weight="sin", wvar=r, limlst=200)
    return val / (2 * math.pi**2)
