"""Secular matrix, branch tracking and new-eigenvalue root finding.

For impurities at ``x_1..x_N`` and phase parameter ``t = tan(phi/2)`` the
secular matrix is

    A(lam)_kl = [G_lam - Re G_i](x_k, x_l) - t Im G_i(x_k, x_l)

(regularized on the diagonal).  Between consecutive distinct Laplacian
eigenvalues ``A(lam') - A(lam)`` is positive semidefinite for ``lam' > lam``,
so every ordered eigenvalue branch of ``A`` is nondecreasing and crosses zero
at most once per gap.  Roots are found branch by branch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from .errors import CoincidenceError, ConfigError, NumericError
from .geometry import SpectralGeometry
from .greens import GreensEvaluator, default_cutoff

log = logging.getLogger(__name__)

SCAN_POINTS = 32
GAP_MARGIN = 1e-8
ROOT_XTOL = 1e-10
MIN_SEPARATION = 1e-6
DEGENERACY_RATIO = 1e3


@dataclass(frozen=True, eq=False)
class ScattererSet:
    geom: SpectralGeometry
    positions: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[0] < 1 or pos.shape[1] != self.geom.d:
            raise ConfigError(f"positions must have shape (N, {self.geom.d}), got {pos.shape}")
        if not math.isfinite(self.t):
            raise ConfigError("phase parameter t must be finite")
        pos = self.geom.canonical(pos)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        n = len(pos)
        for i in range(n):
            for j in range(i + 1, n):
                if self.geom.distance(pos[i], pos[j]) < MIN_SEPARATION * self.geom.L:
                    raise CoincidenceError(f"scatterers {i} and {j} coincide")

    @classmethod
    def from_phase(cls, geom, positions, phi: float):
        if not -math.pi < phi < math.pi:
            raise ConfigError(f"phase must lie in (-pi, pi), got {phi}")
        return cls(geom, positions, math.tan(phi / 2))

    @property
    def N(self) -> int:
        return len(self.positions)


@dataclass(frozen=True, eq=False)
class NewEigenpair:
    lam: float
    gap: int
    v: np.ndarray
    norm_sq: float
    residual: float
    second: float
    degenerate: bool = False
    boundary: bool = False


class SecularSystem:
    """The matrix family lam -> A(lam) for one scatterer set.

    Shell kernels for all impurity pairs are computed once at construction;
    each later evaluation is a small matrix-vector product.
    """

    def __init__(self, scatterers: ScattererSet, evaluator: Optional[GreensEvaluator] = None, lam_max: float = None):
        self.scatterers = scatterers
        self.geom = scatterers.geom
        if evaluator is None:
            if lam_max is None:
                raise ConfigError("give either an evaluator or lam_max")
            evaluator = GreensEvaluator(self.geom, default_cutoff(self.geom, lam_max))
        if evaluator.geom != self.geom:
            raise ConfigError("evaluator geometry differs from scatterer geometry")
        self.ev = evaluator
        self.kernels = evaluator.shell_kernels(scatterers.positions)
        self.im_matrix = evaluator.assemble(self.kernels, evaluator.im_weights(), evaluator.im_tail())

    @property
    def N(self) -> int:
        return self.scatterers.N

    @property
    def t(self) -> float:
        return self.scatterers.t

    def build_matrix(self, lam: float) -> np.ndarray:
        self.ev.check_lambda(lam)
        reg = self.ev.assemble(self.kernels, self.ev.reg_weights(lam), self.ev.reg_tail(lam))
        return reg - self.t * self.im_matrix

    def derivative(self, lam: float) -> np.ndarray:
        self.ev.check_lambda(lam)
        return self.ev.assemble(self.kernels, self.ev.deriv_weights(lam), self.ev.deriv_tail(lam))

    def branch_eigenvalues(self, lam: float) -> np.ndarray:
        A = self.build_matrix(lam)
        try:
            mu = linalg.eigvalsh(A)
        except linalg.LinAlgError as exc:
            raise NumericError(f"eigensolver failed at lambda = {lam}") from exc
        if not np.all(np.isfinite(mu)):
            raise NumericError(f"non-finite branch eigenvalues at lambda = {lam}")
        return mu

    def _branch(self, m: int):
        return lambda lam: self.branch_eigenvalues(lam)[m]

    def scan(self, j: int, points: int = SCAN_POINTS):
        a, b = self.geom.gap(j)
        eps = GAP_MARGIN * (b - a)
        grid = np.linspace(a + eps, b - eps, points)
        mu = np.array([self.branch_eigenvalues(x) for x in grid])
        return grid, mu

    def find_new_eigenvalues(self, j: int, points: int = SCAN_POINTS) -> List[NewEigenpair]:
        """All roots of det A(lam) = 0 inside gap j, one per crossing branch."""
        a, b = self.geom.gap(j)
        grid, mu = self.scan(j, points)
        tail = self.ev.tail_estimate(0.5 * (a + b))
        slack = 1e-9 * (np.abs(mu[1:]) + np.abs(mu[:-1])) + 2 * tail
        if np.any(np.diff(mu, axis=0) < -slack):
            raise NumericError(f"branch monotonicity violated in gap {j}; Green's sums are too inaccurate")
        xtol = ROOT_XTOL * (b - a)
        roots = []
        for m in range(self.N):
            col = mu[:, m]
            if not (col[0] < 0 <= col[-1]):
                continue
            k = int(np.argmax(col >= 0))
            if col[k] == 0:
                lam = grid[k]
            else:
                lam = optimize.brentq(self._branch(m), grid[k - 1], grid[k], xtol=xtol, rtol=4 * np.finfo(float).eps)
            roots.append(self.eigenpair(lam, j))
        return sorted(roots, key=lambda p: p.lam)

    def eigenpair(self, lam: float, j: int) -> NewEigenpair:
        a, b = self.geom.gap(j)
        A = self.build_matrix(lam)
        w, V = linalg.eigh(A)
        order = np.argsort(np.abs(w), kind="stable")
        residual = float(abs(w[order[0]]))
        second = float(abs(w[order[1]])) if self.N > 1 else math.inf
        v = _fix_sign(V[:, order[0]])
        norm_sq = float(v @ self.derivative(lam) @ v)
        degenerate = second < DEGENERACY_RATIO * residual
        if degenerate:
            log.info("degenerate null space at lambda=%r (gap %d)", lam, j)
        eps = GAP_MARGIN * (b - a)
        boundary = lam - a < 2 * eps or b - lam < 2 * eps
        v.setflags(write=False)
        return NewEigenpair(float(lam), j, v, norm_sq, residual, second, bool(degenerate), bool(boundary))

    def null_vector(self, lam: float) -> np.ndarray:
        w, V = linalg.eigh(self.build_matrix(lam))
        return _fix_sign(V[:, int(np.argmin(np.abs(w)))])

    def old_eigenspace_survivors(self, invariant: int) -> int:
        return old_eigenspace_survivors(self.scatterers, invariant)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    v = np.array(v, dtype=float)
    v /= np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def old_eigenspace_survivors(scatterers: ScattererSet, invariant: int) -> int:
    """Dimension of the part of an old eigenspace that vanishes on all impurities.

    ``invariant`` is the integer level label (|xi|^2 on the torus, sum n_i^2
    on the box); the level's multiplicity minus the rank of the mode
    evaluation matrix at the impurity positions.
    """
    geom = scatterers.geom
    t = geom.mode_table_by_invariant(invariant)
    idx = t.indices[t.invariants == invariant]
    m = len(idx)
    if m == 0:
        raise ConfigError(f"{invariant} is not an eigenvalue invariant of {geom}")
    E = geom.mode_values(idx, scatterers.positions).T  # (m, N)
    s = linalg.svdvals(E)
    # mode values are O(V^{-1/2}); measure rank against that scale, not s[0],
    # so that exact zeros computed as sin(pi) ~ 1e-16 are not counted
    floor = 1e-8 * math.sqrt(E.size / geom.volume)
    return int(m - np.sum(s > floor))
