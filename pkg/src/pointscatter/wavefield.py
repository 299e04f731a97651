"""New eigenfunctions: values, norms, Fourier matrix elements and localization.

A new eigenfunction is ``Psi(x) = sum_j v_j G_lam(x, x_j)``.  Two
representations are used:

* the mode expansion ``Psi = sum_xi w_xi phi_xi`` with
  ``w_xi = sum_j v_j conj(phi_xi(x_j)) / (E_xi - lam)``, truncated at the
  evaluator cutoff.  Norms, matrix elements and grid fields come from it.
* the split ``G_lam = [G_lam - Re G_i] + Re G_i`` for pointwise values:
  the bracket is an absolutely convergent mode sum, ``G_i`` is an image sum
  of free-space kernels.  This keeps the log (d=2) or 1/r (d=3) divergence at
  the impurities exact.

All eigenfunctions are normalized with ``||Psi||^2 = v^T A'(lam) v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .errors import CoincidenceError, ConvergenceError, DomainError, NumericError
from .greens import continuum_tail_table, reference_green_real
from .secular import NewEigenpair, SecularSystem

PROXIMITY = 1e-6
IMAGE_REACH = 28.0
SMOOTHING_TOL = 1e-4
# off-diagonal continuum tails are kept while r * sqrt(e_cont) is below this
CONTINUUM_REACH = 40.0
# (radial Gauss nodes, angular nodes) tried in turn until two agree
SMOOTHING_LADDER = ((8, 16), (12, 24), (16, 32), (24, 48), (32, 64), (48, 96))


@dataclass(frozen=True)
class Observable:
    """Real test function given by finitely many Fourier coefficients.

    ``a(x) = mean + sum_zeta coeffs[zeta] e_zeta(x)`` with
    ``e_zeta = L^{-d/2} exp(i k_zeta . x)``; ``mean`` is the spatial average
    of ``a`` and every key of ``coeffs`` is nonzero.
    """

    mean: float
    coeffs: Mapping[Tuple[int, ...], complex] = field(default_factory=dict)

    def __post_init__(self):
        coeffs = {tuple(int(c) for c in z): complex(a) for z, a in dict(self.coeffs).items()}
        for z, a in coeffs.items():
            if not any(z):
                raise ValueError("put the zero mode into `mean`")
            b = coeffs.get(tuple(-c for c in z))
            if b is None or abs(b - a.conjugate()) > 1e-12 * max(1.0, abs(a)):
                raise ValueError(f"coefficients are not conjugate symmetric at {z}")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def constant(cls, value: float = 1.0):
        return cls(float(value), {})

    @classmethod
    def cosine(cls, zeta, amplitude: float = 1.0):
        """``amplitude * (e_zeta + e_{-zeta})``."""
        z = tuple(int(c) for c in zeta)
        return cls(0.0, {z: amplitude, tuple(-c for c in z): amplitude})

    @classmethod
    def random(cls, rng: np.random.Generator, n_modes: int, max_freq: int = 3, d: int = 2, mean: float = 0.0):
        """Real observable with ``n_modes`` conjugate pairs of random coefficients."""
        coeffs = {}
        while len(coeffs) < 2 * n_modes:
            z = tuple(int(c) for c in rng.integers(-max_freq, max_freq + 1, size=d))
            if not any(z) or z in coeffs:
                continue
            a = complex(rng.normal(), rng.normal())
            coeffs[z] = a
            coeffs[tuple(-c for c in z)] = a.conjugate()
        return cls(mean, coeffs)

    def __call__(self, geom, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), self.mean, dtype=complex)
        for z, a in self.coeffs.items():
            out += a * geom.mode_values(np.array([z]), x)[:, 0]
        return out.real


@dataclass(frozen=True)
class Mollifier:
    """Radial bump ``c exp(-1/(1 - (r/eps0)^2))`` with unit mass in dimension d."""

    eps0: float = 0.25
    d: int = 2

    @cached_property
    def constant(self) -> float:
        shell = 2 * math.pi if self.d == 2 else 4 * math.pi
        mass, _ = integrate.quad(lambda r: self._bump(r) * shell * r ** (self.d - 1), 0, self.eps0, epsabs=1e-15)
        return 1.0 / mass

    def _bump(self, r):
        u = np.asarray(r, dtype=float) / self.eps0
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(u < 1, np.exp(-1.0 / np.clip(1 - u * u, 1e-300, None)), 0.0)

    def __call__(self, r):
        return self.constant * self._bump(r)


@dataclass(frozen=True)
class LocalizationDiagnostics:
    ipr: float
    l_loc: Optional[float]
    r2: float
    center: Tuple[float, ...]


class Eigenfunction:
    """A normalized new eigenfunction built from a root of the secular equation."""

    def __init__(self, system: SecularSystem, pair: NewEigenpair):
        self.system = system
        self.pair = pair
        self.geom = system.geom
        self.ev = system.ev
        self.lam = pair.lam
        self.v = np.asarray(pair.v, dtype=float)

    @property
    def positions(self) -> np.ndarray:
        return self.system.scatterers.positions

    # -- spectral representation ----------------------------------------
    @cached_property
    def coefficients(self) -> np.ndarray:
        """Mode coefficients w_xi in evaluator table order (not normalized)."""
        t = self.ev.table
        vals = self.geom.mode_values(t.indices, self.positions)  # (N, M)
        return (self.v @ np.conj(vals)) / (t.eigenvalues - self.lam)

    def norm_squared(self) -> float:
        """||Psi||^2 = v^T A'(lam) v."""
        return self.pair.norm_sq

    def mode_norm_squared(self) -> float:
        """Truncated Parseval sum of |w_xi|^2."""
        return float(np.sum(np.abs(self.coefficients) ** 2))

    def mode_norm_tail(self) -> float:
        """Continuum estimate of the |w_xi|^2 mass beyond the cutoff."""
        return float(self.v @ self.v) * self.ev.deriv_tail(self.lam)

    @cached_property
    def _dense(self):
        """Coefficients on the dense index box [-m, m]^d (torus only)."""
        if self.geom.kind != "torus":
            raise DomainError("Fourier matrix elements are defined on the torus only")
        t = self.ev.table
        m = int(np.max(np.abs(t.indices))) if len(t) else 0
        W = np.zeros((2 * m + 1,) * self.geom.d, dtype=complex)
        W[tuple((t.indices + m).T)] = self.coefficients
        return W, m

    def matrix_element(self, zeta) -> complex:
        """<e_zeta psi, psi> = L^{-d/2} sum_xi w_xi conj(w_{xi+zeta}) / ||Psi||^2."""
        z = tuple(int(c) for c in zeta)
        d, L = self.geom.d, self.geom.L
        if not any(z):
            return complex(L ** (-d / 2))
        W, m = self._dense
        src, dst = [], []
        for c in z:
            if abs(c) > 2 * m:
                return 0j
            src.append(slice(max(0, -c), 2 * m + 1 - max(0, c)))
            dst.append(slice(max(0, c), 2 * m + 1 - max(0, -c)))
        s = np.sum(W[tuple(src)] * np.conj(W[tuple(dst)]))
        return complex(s / self.norm_squared() / L ** (d / 2))

    def matrix_element_tail(self) -> float:
        """Bound on the neglected part of the correlation sum (Cauchy-Schwarz)."""
        return self.mode_norm_tail() / self.norm_squared() / self.geom.L ** (self.geom.d / 2)

    def observable_integral(self, a: Observable) -> Tuple[float, float]:
        """(integral of a |psi|^2, deviation from the spatial mean of a)."""
        dev = 0j
        for z, coef in a.coeffs.items():
            dev += coef * self.matrix_element(z)
        return a.mean + dev.real, dev.real

    # -- position space -------------------------------------------------
    def evaluate(self, x) -> np.ndarray:
        """psi at points x (shape (P, d) or (d,)), exact up to mode-sum tails."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        pos = self.positions
        L = self.geom.L
        dist = _distances(self.geom, X, pos)
        if np.any(dist < PROXIMITY * L):
            raise CoincidenceError("evaluation point coincides with an impurity")
        reg = self._regular_part(X)
        reg_pairs = np.zeros((len(X), len(pos)))
        near = dist < self._continuum_reach
        if np.any(near):
            reg_pairs[near] = self._continuum_table(dist[near])
        ref = _reference_block(self.system, X)
        vals = (reg + (reg_pairs + ref) @ self.v) / math.sqrt(self.norm_squared())
        return vals[0] if single else vals

    @property
    def _continuum_reach(self) -> float:
        return CONTINUUM_REACH / math.sqrt(self.ev.e_cont)

    @cached_property
    def _continuum_table(self):
        return continuum_tail_table(self.ev, self.lam, self._continuum_reach)

    @cached_property
    def _regular_dense(self):
        """Dense coefficients of sum_j v_j [G_lam - Re G_i](., x_j)."""
        t = self.ev.table
        vals = self.geom.mode_values(t.indices, self.positions)
        E = t.eigenvalues
        w = (self.v @ np.conj(vals)) * (1.0 / (E - self.lam) - E / (E * E + 1))
        return self._densify(t.indices, w)

    def _densify(self, idx, w):
        d = self.geom.d
        if self.geom.kind == "torus":
            m = int(np.max(np.abs(idx))) if len(idx) else 0
            W = np.zeros((2 * m + 1,) * d, dtype=complex)
            W[tuple((idx + m).T)] = w
            return W, np.arange(-m, m + 1)
        m = int(np.max(idx)) if len(idx) else 1
        W = np.zeros((m,) * d)
        W[tuple((idx - 1).T)] = w
        return W, np.arange(1, m + 1)

    def _axis_basis(self, coords, k):
        geom = self.geom
        if geom.kind == "torus":
            return np.exp(1j * np.outer(coords, k) * (2 * np.pi / geom.L)) / math.sqrt(geom.L)
        return np.sin(np.pi * np.outer(coords + geom.L, k) / (2 * geom.L)) / math.sqrt(geom.L)

    def _dense_eval(self, dense, X):
        """sum over modes of W[xi] phi_xi(x) at scattered points X."""
        W, k = dense
        d = self.geom.d
        B = [self._axis_basis(X[:, i], k) for i in range(d)]
        K = len(k)
        T = (B[0] @ W.reshape(K, -1)).reshape((len(X),) + (K,) * (d - 1))
        if d == 2:
            return np.real(np.sum(T * B[1], axis=1))
        return np.real(np.einsum("pab,pa,pb->p", T, B[1], B[2]))

    def _regular_part(self, X):
        return self._dense_eval(self._regular_dense, X)

    def grid_axes(self, n: int):
        """Midpoint grid along one axis of the fundamental domain."""
        L = self.geom.L
        if self.geom.kind == "torus":
            return (np.arange(n) + 0.5) * (L / n), L / n
        return -L + (np.arange(n) + 0.5) * (2 * L / n), 2 * L / n

    def truncated_grid(self, n: int = 256) -> Tuple[np.ndarray, float]:
        """Normalized truncated mode expansion of psi on an n^d midpoint grid.

        Only modes whose index components lie below the grid Nyquist limit are
        kept, so that grid sums of |psi|^2 reproduce the Parseval sum exactly.
        Returns the real field and the cell volume.
        """
        geom, d = self.geom, self.geom.d
        t = self.ev.table
        ax, h = self.grid_axes(n)
        keep = np.all(np.abs(t.indices) < n // 2, axis=1)
        W, k = self._densify(t.indices[keep], self.coefficients[keep])
        B = self._axis_basis(ax, k)
        if d == 2:
            F = B @ W @ B.T
        else:
            F = np.einsum("ai,bj,ck,ijk->abc", B, B, B, W, optimize=True)
        return np.real(F) / math.sqrt(self.norm_squared()), h**d

    def localization_diagnostics(self, n: int = 256, bins: Optional[int] = None) -> LocalizationDiagnostics:
        """Grid IPR and an exponential-envelope fit around the grid maximum."""
        F, cell = self.truncated_grid(n)
        rho = F * F
        ipr = inverse_participation_ratio(rho, cell)
        ax, _ = self.grid_axes(n)
        center_idx = np.unravel_index(int(np.argmax(rho)), rho.shape)
        center = np.array([ax[i] for i in center_idx])
        mesh = np.stack(np.meshgrid(*([ax] * self.geom.d), indexing="ij"), axis=-1).reshape(-1, self.geom.d)
        r = np.linalg.norm(self.geom.displacement(mesh, center), axis=1)
        l_loc, r2 = envelope_fit(r, np.sqrt(rho).ravel(), bins or max(8, n // 8))
        return LocalizationDiagnostics(ipr, l_loc, r2, tuple(float(c) for c in center))

    # -- smoothed amplitude and two-point correlation ---------------------
    def smoothed_amplitude(self, chi: Mollifier, x, tol: float = SMOOTHING_TOL) -> float:
        """sqrt of the chi-convolution of |psi|^2 at x, by polar Gauss quadrature."""
        x = np.asarray(x, dtype=float)
        dmin = min(self.geom.distance(x, p) for p in self.positions)
        if dmin < chi.eps0:
            raise CoincidenceError(f"point {x} is within the mollifier radius of an impurity")
        prev = None
        for nr, na in SMOOTHING_LADDER:
            val = self._smoothed_sq(chi, x, nr, na)
            if prev is not None and abs(val - prev) <= tol:
                return math.sqrt(max(val, 0.0))
            prev = val
        raise NumericError(f"smoothed amplitude quadrature did not reach {tol} at {x}")

    def _smoothed_sq(self, chi, x, nr, na):
        d = self.geom.d
        if d != 2:
            return self._smoothed_sq_3d(chi, x, nr)
        gr, gw = np.polynomial.legendre.leggauss(nr)
        r = 0.5 * chi.eps0 * (gr + 1)
        wr = 0.5 * chi.eps0 * gw * r * chi(r)
        ang = 2 * np.pi * np.arange(na) / na
        pts = x + np.stack([np.outer(r, np.cos(ang)), np.outer(r, np.sin(ang))], axis=-1).reshape(-1, 2)
        vals = self._density_at(pts).reshape(nr, na)
        return float(np.sum(wr[:, None] * vals) * (2 * np.pi / na))

    def _smoothed_sq_3d(self, chi, x, nr):
        gr, gw = np.polynomial.legendre.leggauss(nr)
        r = 0.5 * chi.eps0 * (gr + 1)
        wr = 0.5 * chi.eps0 * gw * r * r * chi(r)
        # Gauss-Legendre in cos(theta), trapezoid in azimuth
        gc, gcw = np.polynomial.legendre.leggauss(nr)
        na = 2 * nr
        az = 2 * np.pi * np.arange(na) / na
        st = np.sqrt(1 - gc * gc)
        dirs = np.stack(
            [np.outer(st, np.cos(az)).ravel(), np.outer(st, np.sin(az)).ravel(), np.repeat(gc, na)], axis=1
        )
        dw = np.repeat(gcw, na) * (2 * np.pi / na)
        pts = x + (r[:, None, None] * dirs[None]).reshape(-1, 3)
        vals = self._density_at(pts).reshape(nr, -1)
        return float(np.sum(wr[:, None] * vals * dw[None]))

    def _density_at(self, pts):
        if self.geom.kind == "box":
            inside = np.all(np.abs(pts) <= self.geom.L, axis=1)
            out = np.zeros(len(pts))
            if np.any(inside):
                out[inside] = self.evaluate(pts[inside]) ** 2
            return out
        return self.evaluate(self.geom.canonical(pts)) ** 2

    def two_point_correlation(self, chi: Mollifier, x, y) -> float:
        if np.array_equal(np.asarray(x, float), np.asarray(y, float)):
            return self.smoothed_amplitude(chi, x) ** 2
        return self.smoothed_amplitude(chi, x) * self.smoothed_amplitude(chi, y)


_REF_CACHE_SIZE = 32


def _reference_block(system: SecularSystem, X: np.ndarray) -> np.ndarray:
    """Re G_i(X, x_j) for every impurity, cached per system.

    All eigenfunctions of one scatterer set share this block, so the image
    sums are paid once per point set rather than once per eigenvalue.
    """
    cache = system.__dict__.setdefault("_reference_cache", {})
    key = X.tobytes()
    hit = cache.get(key)
    if hit is None:
        pos = system.scatterers.positions
        hit = np.stack([reference_green_real(system.geom, X, p, IMAGE_REACH) for p in pos], axis=1)
        if len(cache) >= _REF_CACHE_SIZE:
            cache.pop(next(iter(cache)))
        cache[key] = hit
    return hit


def _distances(geom, X, pos):
    return np.stack([np.linalg.norm(geom.displacement(X, p), axis=1) for p in pos], axis=1)


def inverse_participation_ratio(density: np.ndarray, cell: float) -> float:
    """int rho^2 / (int rho)^2 for a density sampled on a uniform grid."""
    mass = float(np.sum(density)) * cell
    return float(np.sum(density * density)) * cell / mass**2


def envelope_fit(r: np.ndarray, amp: np.ndarray, bins: int):
    """Least-squares fit of log(shell max of amp) against r.

    Returns (decay length or None when the slope is nonnegative, R^2).
    """
    edges = np.linspace(0, float(np.max(r)) * (1 + 1e-12), bins + 1)
    which = np.clip(np.digitize(r, edges) - 1, 0, bins - 1)
    peak = np.full(bins, -np.inf)
    np.maximum.at(peak, which, amp)
    mids = 0.5 * (edges[1:] + edges[:-1])
    ok = np.isfinite(peak) & (peak > 0)
    if ok.sum() < 3:
        return None, 0.0
    y = np.log(peak[ok])
    xr = mids[ok]
    slope, icpt = np.polyfit(xr, y, 1)
    resid = y - (slope * xr + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 0.0
    if slope >= 0:
        return None, r2
    return float(-1.0 / slope), r2


def chebyshev_ratio(ef: Eigenfunction, zeta, delta: float) -> float:
    """|<e_zeta psi, psi>|^2 divided by the annulus ratio bound at this eigenvalue."""
    from .arith import chebyshev_rhs

    rhs = chebyshev_rhs(ef.lam / ef.geom.scale, zeta, delta, ef.system.N, ef.geom.d)
    return abs(ef.matrix_element(zeta)) ** 2 / rhs
