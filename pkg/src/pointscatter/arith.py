"""Lattice-point counting, thin annuli and the generic-gap machinery.

All counts are exact integer arithmetic.  Real thresholds such as
``lam**delta`` are widened outward by one ulp before being compared with the
integer norms ``|xi|^2``, so boundary points are always included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DefinednessError, PoleError, ResourceError

ANNULUS_BUDGET = 10**7
COUNT_BUDGET = 10**12

HUXLEY_THETA = Fraction(133, 416)
EQUIDIST_EXPONENTS = {2: Fraction(17, 416), 3: Fraction(1, 12)}


def localization_exponent(delta_d: Fraction, d: int) -> Fraction:
    """alpha_d = delta_d / (3d/2 + 2 delta_d), exact."""
    delta_d = Fraction(delta_d)
    return delta_d / (Fraction(3 * d, 2) + 2 * delta_d)


@dataclass(frozen=True)
class ExponentConfig:
    theta: float = float(HUXLEY_THETA)
    delta: float = 0.17
    equidist: Dict[int, Fraction] = field(default_factory=lambda: dict(EQUIDIST_EXPONENTS))

    def __post_init__(self):
        if not 0 < self.theta < 0.5:
            raise ConfigError(f"theta must lie in (0, 1/2), got {self.theta}")
        lo, hi = self.theta / 2, 0.5 - self.theta
        if not lo < self.delta < hi:
            raise ConfigError(f"delta must lie in ({lo:.6f}, {hi:.6f}), got {self.delta}")

    def alpha(self, d: int) -> Fraction:
        return localization_exponent(self.equidist[d], d)


def isqrt_array(n: np.ndarray) -> np.ndarray:
    """Elementwise floor(sqrt(n)) for nonnegative int64 arrays, exact."""
    n = np.asarray(n, dtype=np.int64)
    s = np.floor(np.sqrt(n.astype(float))).astype(np.int64)
    s -= (s * s > n).astype(np.int64)
    s += ((s + 1) * (s + 1) <= n).astype(np.int64)
    return s


def _check_count_budget(X, d):
    est = (math.pi * X) if d == 2 else (4 * math.pi / 3) * X**1.5
    if est > COUNT_BUDGET:
        raise ResourceError(f"lattice count near {est:.3g} exceeds budget {COUNT_BUDGET}", COUNT_BUDGET)


def count_lattice_points(X: float, d: int = 2) -> int:
    """Number of xi in Z^d with |xi|^2 <= X."""
    if X < 0:
        raise ValueError(f"X must be nonnegative, got {X}")
    if d not in (2, 3):
        raise ConfigError(f"dimension must be 2 or 3, got {d}")
    _check_count_budget(X, d)
    n = int(math.floor(X))
    m = math.isqrt(n)
    i = np.arange(-m, m + 1, dtype=np.int64)
    if d == 2:
        return int(np.sum(2 * isqrt_array(n - i * i) + 1))
    total = 0
    for a in range(-m, m + 1):
        rest = n - a * a
        k = math.isqrt(rest)
        j = np.arange(-k, k + 1, dtype=np.int64)
        total += int(np.sum(2 * isqrt_array(rest - j * j) + 1))
    return total


def circle_law_residual(X: float, d: int = 2) -> float:
    """N(X) minus the volume term (pi X in d=2, 4/3 pi X^{3/2} in d=3)."""
    if d == 2:
        return count_lattice_points(X, 2) - math.pi * X
    return count_lattice_points(X, 3) - 4 * math.pi / 3 * X**1.5


def shell_counts(bound: int, d: int = 2) -> np.ndarray:
    """r_d(q) = #{xi in Z^d : |xi|^2 = q} for q = 0..bound."""
    m = math.isqrt(bound)
    ax = np.arange(-m, m + 1, dtype=np.int64)
    if d == 2:
        q = (ax[:, None] ** 2 + ax[None, :] ** 2).ravel()
    else:
        q = (ax[:, None, None] ** 2 + ax[None, :, None] ** 2 + ax[None, None, :] ** 2).ravel()
    q = q[q <= bound]
    return np.bincount(q, minlength=bound + 1)


def _outward(lo: float, hi: float):
    return np.nextafter(lo, -np.inf), np.nextafter(hi, np.inf)


def _norm_range(lam: float, width: float):
    """Integer range [a, b] of squared norms with | q - lam | <= width."""
    lo, hi = _outward(lam - width, lam + width)
    return max(0, math.ceil(lo)), math.floor(hi)


def annulus_points(zeta: Sequence[int], lam: float, width: float, d: int = 2) -> np.ndarray:
    """All xi in Z^d with ||xi - zeta|^2 - lam| <= width, sorted lexicographically."""
    if not lam > 0 or not width > 0:
        raise ValueError(f"annulus needs lam > 0 and width > 0, got {lam}, {width}")
    zeta = np.asarray(zeta, dtype=np.int64).reshape(d)
    a, b = _norm_range(lam, width)
    if b < a:
        return np.zeros((0, d), dtype=np.int64)
    est = 2 * math.pi * (b - a + 1) * (1 if d == 2 else math.sqrt(b) + 1)
    if est > ANNULUS_BUDGET:
        raise ResourceError(f"annulus with ~{est:.3g} points exceeds budget {ANNULUS_BUDGET}", ANNULUS_BUDGET)
    m = math.isqrt(b)
    ax = np.arange(-m, m + 1, dtype=np.int64)
    if d == 2:
        heads = ax[:, None]
    else:
        g = np.meshgrid(ax, ax, indexing="ij")
        heads = np.stack([g[0].ravel(), g[1].ravel()], axis=1)
    head_sq = np.sum(heads * heads, axis=1)
    rows = []
    for h, hs in zip(heads, head_sq):
        if hs > b:
            continue
        hi = math.isqrt(b - hs)
        lo_sq = a - hs
        lo = 0 if lo_sq <= 0 else math.isqrt(lo_sq - 1) + 1
        if lo > hi:
            continue
        last = np.arange(lo, hi + 1, dtype=np.int64)
        last = np.concatenate([-last[::-1], last[last > 0]]) if lo == 0 else np.concatenate([-last[::-1], last])
        block = np.empty((len(last), d), dtype=np.int64)
        block[:, : d - 1] = h
        block[:, d - 1] = last
        rows.append(block)
    if not rows:
        return np.zeros((0, d), dtype=np.int64)
    pts = np.concatenate(rows) + zeta
    order = np.lexsort(tuple(pts[:, i] for i in range(d - 1, -1, -1)))
    return pts[order]


def _width(lam: float, delta: float) -> float:
    return float(np.nextafter(lam**delta, np.inf))


def is_generic_gap(geom, j: int, delta: float, zetas: Iterable[Sequence[int]], lam: Optional[float] = None) -> bool:
    """Whether gap j avoids all shifted annuli.

    ``lam`` defaults to the gap midpoint.  Everything is measured in
    invariant units ``lam / geom.scale`` so that the annulus lives in Z^d.
    """
    zetas = [tuple(int(c) for c in z) for z in zetas]
    if not zetas:
        raise ValueError("frequency set must be nonempty")
    if any(all(c == 0 for c in z) for z in zetas):
        raise ValueError("frequencies must be nonzero")
    if geom.kind != "torus":
        raise ConfigError("generic-gap test is defined on flat tori only")
    if lam is None:
        a, b = geom.gap(j)
        lam = 0.5 * (a + b)
    lam_u = lam / geom.scale
    return _generic_at(lam_u, delta, zetas, geom.d)


def _generic_at(lam_u, delta, zetas, d):
    w = _width(lam_u, delta)
    pts = annulus_points((0,) * d, lam_u, w, d)
    if len(pts) == 0:
        return True
    for z in zetas:
        shifted = pts - np.asarray(z, dtype=np.int64)
        dist = np.abs(np.sum(shifted * shifted, axis=1) - lam_u)
        if np.any(dist <= w):
            return False
    return True


def generic_gap_fraction(geom, n_gaps: int, delta: float, zetas, start: int = 0) -> float:
    """Fraction of gaps start..start+n_gaps-1 that are generic (midpoint rule)."""
    zetas = [tuple(z) for z in zetas]
    lv = geom.levels(start + n_gaps + 1)
    hits = 0
    for j in range(start, start + n_gaps):
        mid = 0.5 * (lv[j] + lv[j + 1])
        hits += _generic_at(float(mid), delta, zetas, geom.d)
    return hits / n_gaps


def annulus_sums(lam: float, zeta: Sequence[int], delta: float, d: int = 2):
    """The two sums over A_0(lam, lam^delta) that enter the Chebyshev ratio.

    Returns (numerator sum of (|xi-zeta|^2-lam)^-2, denominator sum of
    (|xi|^2-lam)^-2, annulus size).
    """
    pts = annulus_points((0,) * d, lam, _width(lam, delta), d)
    if len(pts) == 0:
        raise DefinednessError(f"annulus A_0({lam}, {lam}^{delta}) is empty")
    z = np.asarray(zeta, dtype=np.int64)
    base = np.sum(pts * pts, axis=1).astype(float) - lam
    shift = np.sum((pts - z) ** 2, axis=1).astype(float) - lam
    if np.any(base == 0) or np.any(shift == 0):
        raise PoleError(f"lam = {lam} coincides with a squared norm in the annulus")
    return float(np.sum(shift**-2.0)), float(np.sum(base**-2.0)), len(pts)


def chebyshev_rhs(lam: float, zeta: Sequence[int], delta: float, N: int, d: int = 2) -> float:
    """N * sum (|xi-zeta|^2-lam)^-2 / sum (|xi|^2-lam)^-2 over A_0(lam, lam^delta)."""
    num, den, _ = annulus_sums(lam, zeta, delta, d)
    return N * num / den
