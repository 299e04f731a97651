"""Laplacian eigenmodes on flat tori and Dirichlet boxes.

Two background domains are supported:

* ``FlatTorus(d, L)``: R^d / L Z^d with modes ``L^{-d/2} exp(i k.x)``,
  ``k = 2 pi xi / L`` for ``xi`` in Z^d.
* ``DirichletBox(d, L)``: the box [-L, L]^d with modes
  ``L^{-d/2} prod_i sin(pi n_i (x_i + L) / (2L))`` for ``n_i >= 1``.

In both cases an eigenvalue is ``scale * q`` where ``q`` is an integer
(``|xi|^2`` or ``sum n_i^2``).  Multiplicity classes are always formed from
``q``, so degenerate levels are never split by rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Tuple

import numpy as np

from .errors import ConfigError, DomainError, ResourceError

MODE_BUDGET = 10**8
# Relative slack applied when converting a real cutoff to an integer bound, so
# that cutoff = scale * q is treated inclusively.
_CUTOFF_SLACK = 1e-9


@dataclass(frozen=True)
class Mode:
    index: Tuple[int, ...]
    invariant: int
    eigenvalue: float


@dataclass(frozen=True)
class ModeTable:
    """Array form of a mode list, sorted by invariant then lexicographically.

    ``indices`` has shape (M, d), ``invariants`` and ``eigenvalues`` shape (M,).
    """

    indices: np.ndarray
    invariants: np.ndarray
    eigenvalues: np.ndarray
    bound: int

    def __len__(self):
        return len(self.invariants)


class SpectralGeometry:
    """Common interface of the two domains.  Instances are immutable."""

    kind = "abstract"

    def __init__(self, d: int, L: float, mode_budget: int = MODE_BUDGET):
        if d not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {d}")
        if not L > 0:
            raise ConfigError(f"size must be positive, got {L}")
        self._d = int(d)
        self._L = float(L)
        self._budget = int(mode_budget)

    @property
    def d(self) -> int:
        return self._d

    @property
    def L(self) -> float:
        return self._L

    @property
    def mode_budget(self) -> int:
        return self._budget

    # -- subclass hooks -------------------------------------------------
    @property
    def scale(self) -> float:
        raise NotImplementedError

    @property
    def volume(self) -> float:
        raise NotImplementedError

    def _index_range(self, m: int) -> np.ndarray:
        raise NotImplementedError

    def _estimated_count(self, bound: int) -> float:
        raise NotImplementedError

    def mode_values(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Mode functions at points: returns array (P, M) for x of shape (P, d)."""
        raise NotImplementedError

    def contains(self, x) -> bool:
        raise NotImplementedError

    def canonical(self, x) -> np.ndarray:
        raise NotImplementedError

    # -- shared machinery -----------------------------------------------
    def invariant_bound(self, cutoff: float) -> int:
        """Largest integer invariant q with ``scale * q <= cutoff``."""
        if cutoff < 0:
            return -1
        return int(math.floor(cutoff / self.scale * (1 + _CUTOFF_SLACK) + _CUTOFF_SLACK))

    def mode_table(self, cutoff: float) -> ModeTable:
        if not cutoff >= 0:
            raise ValueError(f"cutoff must be nonnegative, got {cutoff}")
        return self.mode_table_by_invariant(self.invariant_bound(cutoff))

    def mode_table_by_invariant(self, bound: int) -> ModeTable:
        d = self._d
        if bound < 0:
            empty = np.zeros((0, d), dtype=np.int64)
            return ModeTable(empty, np.zeros(0, np.int64), np.zeros(0), bound)
        est = self._estimated_count(bound)
        if est > self._budget:
            raise ResourceError(
                f"about {est:.3g} modes requested, mode budget is {self._budget}",
                budget=self._budget,
            )
        m = math.isqrt(bound)
        axis = self._index_range(m)
        grids = np.meshgrid(*([axis] * d), indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
        q = np.sum(idx * idx, axis=1)
        keep = q <= bound
        idx, q = idx[keep], q[keep]
        # lexsort: last key is primary
        order = np.lexsort(tuple(idx[:, i] for i in range(d - 1, -1, -1)) + (q,))
        idx, q = idx[order], q[order]
        return ModeTable(idx, q, self.scale * q.astype(float), bound)

    def eigenvalue_of(self, invariant: int) -> float:
        return self.scale * invariant

    def is_eigen_invariant(self, q: int) -> bool:
        """True when some mode has integer invariant exactly ``q``."""
        if q < 0:
            return False
        return bool(np.any(self.mode_table_by_invariant(q).invariants == q))

    @cached_property
    def _level_cache(self) -> dict:
        return {}

    def levels(self, count: int) -> np.ndarray:
        """First ``count`` distinct integer invariants, ascending."""
        bound = max(8, 2 * count)
        while True:
            cached = self._level_cache.get(bound)
            if cached is None:
                cached = np.unique(self.mode_table_by_invariant(bound).invariants)
                self._level_cache[bound] = cached
            if len(cached) >= count:
                return cached[:count]
            bound *= 2

    def gap(self, j: int) -> Tuple[float, float]:
        """Endpoints (lambda_j, lambda_{j+1}) of the j-th distinct-eigenvalue gap."""
        q = self.gap_invariants(j)
        return self.scale * q[0], self.scale * q[1]

    def gap_invariants(self, j: int) -> Tuple[int, int]:
        if j < 0:
            raise ValueError(f"gap index must be nonnegative, got {j}")
        lv = self.levels(j + 2)
        return int(lv[j]), int(lv[j + 1])

    def gaps_in_window(self, lo: float, hi: float) -> List[int]:
        """Indices j with lo <= lambda_j and lambda_{j+1} <= hi."""
        qs = np.unique(self.mode_table(hi).invariants)
        ev = self.scale * qs
        return [j for j in range(len(qs) - 1) if ev[j] >= lo and ev[j + 1] <= hi]

    def multiplicity(self, invariant: int) -> int:
        return int(np.sum(self.mode_table_by_invariant(invariant).invariants == invariant))

    def __eq__(self, other):
        return type(self) is type(other) and (self._d, self._L) == (other._d, other._L)

    def __hash__(self):
        return hash((type(self).__name__, self._d, self._L))

    def __repr__(self):
        return f"{type(self).__name__}(d={self._d}, L={self._L!r})"


class FlatTorus(SpectralGeometry):
    kind = "torus"

    @property
    def scale(self) -> float:
        return (2 * math.pi / self._L) ** 2

    @property
    def volume(self) -> float:
        return self._L**self._d

    def _index_range(self, m):
        return np.arange(-m, m + 1)

    def _estimated_count(self, bound):
        r = math.sqrt(bound) + 1
        return (math.pi if self._d == 2 else 4 * math.pi / 3) * r**self._d

    def wavevectors(self, indices: np.ndarray) -> np.ndarray:
        return (2 * math.pi / self._L) * np.asarray(indices, dtype=float)

    def mode_values(self, indices, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phase = x @ self.wavevectors(indices).T
        return np.exp(1j * phase) / self._L ** (self._d / 2)

    def contains(self, x) -> bool:
        return True

    def canonical(self, x):
        """Positions reduced to [0, L)^d."""
        y = np.mod(np.asarray(x, dtype=float), self._L)
        # mod can return L for tiny negative inputs
        return np.where(y >= self._L, 0.0, y)

    def displacement(self, x, y) -> np.ndarray:
        """Minimal-image difference vector x - y."""
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return diff - self._L * np.round(diff / self._L)

    def distance(self, x, y) -> float:
        return float(np.linalg.norm(self.displacement(x, y), axis=-1))


class DirichletBox(SpectralGeometry):
    """The box [-L, L]^d; ``L`` is the half side."""

    kind = "box"

    @property
    def scale(self) -> float:
        return (math.pi / (2 * self._L)) ** 2

    @property
    def volume(self) -> float:
        return (2 * self._L) ** self._d

    def _index_range(self, m):
        return np.arange(1, max(m, 0) + 1)

    def _estimated_count(self, bound):
        r = math.sqrt(bound) + 1
        return (math.pi / 4 if self._d == 2 else math.pi / 6) * r**self._d

    def mode_values(self, indices, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.contains(x):
            raise DomainError(f"points outside [-{self._L}, {self._L}]^{self._d}")
        n = np.asarray(indices, dtype=float)
        out = np.ones((x.shape[0], n.shape[0]))
        for i in range(self._d):
            out *= np.sin(np.pi * np.outer(x[:, i] + self._L, n[:, i]) / (2 * self._L))
        return out / self._L ** (self._d / 2)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.abs(x) <= self._L))

    def canonical(self, x):
        x = np.asarray(x, dtype=float)
        if not self.contains(x):
            raise DomainError(f"points outside [-{self._L}, {self._L}]^{self._d}")
        return x.copy()

    def displacement(self, x, y):
        return np.asarray(x, dtype=float) - np.asarray(y, dtype=float)

    def distance(self, x, y) -> float:
        return float(np.linalg.norm(self.displacement(x, y), axis=-1))


def enumerate_modes(geom: SpectralGeometry, cutoff: float) -> List[Mode]:
    """All modes with eigenvalue <= cutoff, sorted by eigenvalue then index."""
    if not cutoff >= 0:
        raise ValueError(f"cutoff must be nonnegative, got {cutoff}")
    t = geom.mode_table(cutoff)
    return [
        Mode(tuple(int(v) for v in row), int(q), float(e))
        for row, q, e in zip(t.indices, t.invariants, t.eigenvalues)
    ]


def mode_function(geom: SpectralGeometry, mode, x) -> complex:
    """Value of one normalized mode at a single point.

    Torus points are reduced modulo L; box points outside the box raise
    :class:`DomainError`.
    """
    index = mode.index if isinstance(mode, Mode) else tuple(mode)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != geom.d:
        raise DomainError(f"point has dimension {x.shape[1]}, expected {geom.d}")
    val = geom.mode_values(np.array([index]), geom.canonical(x))[0, 0]
    return complex(val) if geom.kind == "torus" else float(val)


def distinct_eigenvalues(geom: SpectralGeometry, cutoff: float) -> List[Tuple[float, int]]:
    """Distinct eigenvalues up to ``cutoff`` with their multiplicities."""
    t = geom.mode_table(cutoff)
    qs, counts = np.unique(t.invariants, return_counts=True)
    return [(geom.scale * int(q), int(c)) for q, c in zip(qs, counts)]
