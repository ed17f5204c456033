"""Finite measures on [0, inf) represented through their right tails.

``tail(a)`` is always ``m((a, inf))``, open at ``a``; ``tail_left(a)`` is
``m([a, inf))``. Three representations exist: point masses (empirical
measures from the simulator), a piecewise-linear tail on a grid, and an
analytic tail evaluator (fluid limits).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


def fmt(x: float) -> str:
    """Shortest string that round-trips the float exactly."""
    return repr(float(x))


class FiniteMeasure:
    total_mass: float

    def tail(self, a):
        raise NotImplementedError

    def tail_left(self, a):
        return self.tail(a)

    def atoms(self) -> np.ndarray:
        return np.empty(0)

    @property
    def upper(self) -> float:
        """Right end of the (effective) support."""
        raise NotImplementedError

    @property
    def is_atomic(self) -> bool:
        return False

    def scaled(self, c: float) -> "FiniteMeasure":
        raise NotImplementedError

    def mass_between(self, lo: float, hi: float) -> float:
        """m([lo, hi])."""
        if hi < lo:
            return 0.0
        return float(self.tail_left(lo) - self.tail(hi))

    def to_csv(self, path: str | Path, grid: Sequence[float] | None = None) -> None:
        rows = self._tail_rows(grid)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "tail"])
            for a, t in rows:
                w.writerow([fmt(a), fmt(t)])

    def _tail_rows(self, grid):
        if grid is None:
            grid = np.linspace(0.0, self.upper if self.upper > 0 else 1.0, 257)
        grid = np.asarray(grid, dtype=float)
        return list(zip(grid, np.asarray(self.tail(grid), dtype=float)))

    # constructors
    @staticmethod
    def zero() -> "PointMasses":
        return PointMasses(np.empty(0), np.empty(0))

    @staticmethod
    def point_masses(locations, weights=None) -> "PointMasses":
        loc = np.asarray(locations, dtype=float)
        w = np.ones_like(loc) if weights is None else np.broadcast_to(
            np.asarray(weights, dtype=float), loc.shape
        )
        return PointMasses(loc, w)

    @staticmethod
    def tail_grid(grid, tail_values) -> "TailGrid":
        return TailGrid(np.asarray(grid, dtype=float), np.asarray(tail_values, dtype=float))

    @staticmethod
    def analytic(tail_fn: Callable, total_mass: float, upper: float) -> "Analytic":
        return Analytic(tail_fn, float(total_mass), float(upper))


class PointMasses(FiniteMeasure):
    """Weighted atoms. Coincident locations are merged."""

    def __init__(self, locations: np.ndarray, weights: np.ndarray):
        locations = np.asarray(locations, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if locations.shape != weights.shape or locations.ndim != 1:
            raise ValueError("locations and weights must be 1-d arrays of equal length")
        if np.any(locations < 0) or np.any(weights <= 0):
            raise ValueError("point masses need locations >= 0 and weights > 0")
        order = np.argsort(locations, kind="stable")
        loc, w = locations[order], weights[order]
        if len(loc) > 1 and np.any(np.diff(loc) == 0):
            loc, inv = np.unique(loc, return_inverse=True)
            w = np.bincount(inv, weights=w)
        self.locations = loc
        self.weights = w
        # suffix sums: _suffix[k] = mass of atoms k, k+1, ...
        self._suffix = np.concatenate((np.cumsum(w[::-1])[::-1], [0.0]))
        self.total_mass = float(self._suffix[0])

    def tail(self, a):
        k = np.searchsorted(self.locations, a, side="right")
        return self._suffix[k] if np.ndim(a) else float(self._suffix[k])

    def tail_left(self, a):
        k = np.searchsorted(self.locations, a, side="left")
        return self._suffix[k] if np.ndim(a) else float(self._suffix[k])

    def atoms(self):
        return self.locations

    @property
    def upper(self):
        return float(self.locations[-1]) if len(self.locations) else 0.0

    @property
    def is_atomic(self):
        return True

    def scaled(self, c):
        if c == 0:
            return FiniteMeasure.zero()
        return PointMasses(self.locations, self.weights * c)

    def _tail_rows(self, grid):
        if grid is not None:
            return super()._tail_rows(grid)
        a = np.concatenate(([0.0], self.locations[self.locations > 0]))
        return list(zip(a, self.tail(a)))

    def __len__(self):
        return len(self.locations)

    def __repr__(self):
        return f"PointMasses(n={len(self)}, total_mass={self.total_mass!r})"


class TailGrid(FiniteMeasure):
    """Tail linear between grid points; zero from the last grid point on.

    A nonzero last value therefore is an atom at ``grid[-1]``.
    """

    def __init__(self, grid: np.ndarray, tail_values: np.ndarray):
        if grid.shape != tail_values.shape or grid.ndim != 1 or len(grid) < 2:
            raise ValueError("grid and tail values must be equal-length 1-d arrays (>= 2)")
        if grid[0] != 0 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must start at 0 and increase strictly")
        if np.any(np.diff(tail_values) > 0) or np.any(tail_values < 0):
            raise ValueError("tail values must be nonnegative and nonincreasing")
        self.grid = grid
        self.values = tail_values
        self.total_mass = float(tail_values[0])

    def tail(self, a):
        a_arr = np.asarray(a, dtype=float)
        val = np.where(a_arr >= self.grid[-1], 0.0, np.interp(a_arr, self.grid, self.values))
        return val if np.ndim(a) else float(val)

    def tail_left(self, a):
        a_arr = np.asarray(a, dtype=float)
        val = np.where(a_arr > self.grid[-1], 0.0, np.interp(a_arr, self.grid, self.values))
        return val if np.ndim(a) else float(val)

    def atoms(self):
        return self.grid[-1:] if self.values[-1] > 0 else np.empty(0)

    @property
    def upper(self):
        return float(self.grid[-1])

    def scaled(self, c):
        return TailGrid(self.grid, self.values * c)

    def _tail_rows(self, grid):
        if grid is not None:
            return super()._tail_rows(grid)
        return list(zip(self.grid, self.values))


class Analytic(FiniteMeasure):
    """Continuous tail given by a vectorised callable."""

    def __init__(self, tail_fn: Callable, total_mass: float, upper: float):
        self._fn = tail_fn
        self.total_mass = total_mass
        self._upper = upper

    def tail(self, a):
        a_arr = np.asarray(a, dtype=float)
        val = np.asarray(self._fn(np.maximum(a_arr, 0.0)), dtype=float)
        return val if np.ndim(a) else float(val)

    @property
    def upper(self):
        return self._upper

    def scaled(self, c):
        fn = self._fn
        return Analytic(lambda a: c * fn(a), c * self.total_mass, self._upper)


def read_measure_csv(path: str | Path, kind: str = "points") -> FiniteMeasure:
    """Inverse of ``FiniteMeasure.to_csv``.

    ``kind="points"`` rebuilds atoms from the tail drops between rows; ``"grid"``
    returns a ``TailGrid``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["a", "tail"]:
        raise ValueError(f"{path}: expected header a,tail")
    a = np.array([float(r[0]) for r in rows[1:]])
    t = np.array([float(r[1]) for r in rows[1:]])
    if kind == "grid":
        return FiniteMeasure.tail_grid(a, t)
    if len(a) <= 1:
        return FiniteMeasure.zero()
    drops = t[:-1] - t[1:]
    keep = drops > 0
    return FiniteMeasure.point_masses(a[1:][keep], drops[keep])


@dataclass
class MeasurePath:
    times: np.ndarray
    measures: list[FiniteMeasure]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.measures):
            raise ValueError("one measure per sample time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must increase")

    def to_dir(self, directory: str | Path, prefix: str) -> None:
        """One CSV per sample time plus ``<prefix>_index.csv``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / f"{prefix}_index.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "t", "file"])
            for k, (t, m) in enumerate(zip(self.times, self.measures)):
                name = f"{prefix}_{k:03d}.csv"
                m.to_csv(directory / name)
                w.writerow([k, fmt(t), name])


def _candidate_points(m1: FiniteMeasure, m2: FiniteMeasure, refine: int) -> np.ndarray:
    pts = [np.zeros(1), m1.atoms(), m2.atoms()]
    for m in (m1, m2):
        if isinstance(m, TailGrid):
            pts.append(m.grid)
    if not (m1.is_atomic or m2.is_atomic):
        hi = max(m1.upper, m2.upper, 1e-12)
        pts.append(np.linspace(0.0, hi, refine))
    return np.unique(np.concatenate(pts))


def kolmogorov_distance(m1: FiniteMeasure, m2: FiniteMeasure, refine: int = 4097) -> float:
    """sup over a >= 0 of |m1(a, inf) - m2(a, inf)|.

    Exact when at least one measure is atomic and the other has a monotone
    continuous tail (the extremes then sit at atoms and their left limits);
    otherwise evaluated on ``refine`` uniform points plus all grid knots.
    """
    a = _candidate_points(m1, m2, refine)
    best = float(np.max(np.abs(m1.tail(a) - m2.tail(a))))
    atoms = np.concatenate((m1.atoms(), m2.atoms()))
    atoms = atoms[atoms > 0]
    if len(atoms):
        left = np.abs(m1.tail_left(atoms) - m2.tail_left(atoms))
        best = max(best, float(np.max(left)))
    return best


def _discretize(m: FiniteMeasure, step: float, cutoff: float):
    """Atoms approximating ``m`` within distance ``step/2``, plus mass beyond ``cutoff``."""
    if m.is_atomic:
        return m.atoms(), np.asarray(m.weights), 0.0, 0.0
    n = max(1, int(math.ceil(cutoff / step)))
    edges = np.arange(n + 1) * step
    cell = np.asarray(m.tail(edges[:-1]), float) - np.asarray(m.tail(edges[1:]), float)
    loc = 0.5 * (edges[:-1] + edges[1:])
    # mass sitting exactly at 0 is not in any (k s, (k+1) s] cell
    at_zero = float(m.tail_left(0.0) - m.tail(0.0))
    extra_atoms = [a for a in m.atoms() if a > 0]
    for a in extra_atoms:
        k = min(int(a // step), n - 1)
        cell[k] -= float(m.tail_left(a) - m.tail(a))
    loc = np.concatenate((loc, [0.0] if at_zero > 0 else [], extra_atoms))
    w = np.concatenate((cell, [at_zero] if at_zero > 0 else [], [
        float(m.tail_left(a) - m.tail(a)) for a in extra_atoms]))
    keep = w > 1e-15
    order = np.argsort(loc[keep], kind="stable")
    beyond = float(m.tail(edges[-1]))
    return loc[keep][order], w[keep][order], 0.5 * step, beyond


def _matched_mass(x, wx, y, wy, d: float) -> float:
    """Largest mass matchable between two sorted atom lists at distance <= d."""
    rem = np.array(wy, dtype=float)
    j, total = 0, 0.0
    ny = len(y)
    tol = 1e-12
    for xi, wi in zip(x, wx):
        while j < ny and (rem[j] <= 0 or y[j] < xi - d - tol):
            j += 1
        k, need = j, wi
        while need > 0 and k < ny and y[k] <= xi + d + tol:
            take = min(need, rem[k])
            rem[k] -= take
            need -= take
            total += take
            k += 1 if rem[k] <= 0 else 0
        while j < ny and rem[j] <= 0:
            j += 1
    return total


def prohorov_upper_bound(
    m1: FiniteMeasure, m2: FiniteMeasure, grid_step: float, cutoff: float | None = None
) -> float:
    """Upper bound on the Prohorov distance, resolved to ``grid_step``.

    For a candidate eps the two measures are partially matched (greedy monotone
    matching, which is optimal on the line) with every matched pair at distance
    <= eps; if the unmatched mass on both sides is <= eps then rho <= eps.
    Continuous measures are binned at half the step first and the bin width is
    charged against eps, so the returned value never undercuts rho.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be > 0")
    if cutoff is None:
        cutoff = max(m1.upper, m2.upper, grid_step)
    x, wx, infl1, beyond1 = _discretize(m1, 0.5 * grid_step, cutoff)
    y, wy, infl2, beyond2 = _discretize(m2, 0.5 * grid_step, cutoff)
    t1 = float(np.sum(wx)) + beyond1
    t2 = float(np.sum(wy)) + beyond2
    inflation = infl1 + infl2

    def ok(eps: float) -> bool:
        d = eps - inflation
        if d < 0:
            return False
        matched = _matched_mass(x, wx, y, wy, d)
        return max(t1 - matched, t2 - matched) <= eps + 1e-12

    k_hi = int(math.ceil(max(t1, t2, inflation) / grid_step)) + 1
    while not ok(k_hi * grid_step):
        k_hi *= 2
    k_lo = 0
    if ok(0.0):
        return 0.0
    while k_hi - k_lo > 1:
        mid = (k_lo + k_hi) // 2
        if ok(mid * grid_step):
            k_hi = mid
        else:
            k_lo = mid
    return k_hi * grid_step


def prohorov_lower_bound(m1: FiniteMeasure, m2: FiniteMeasure, grid_step: float) -> float:
    """Lower bound on the Prohorov distance from half-line test sets only.

    Restricting the defining inequalities to the closed sets [a, inf) and [0, a]
    can only shrink the infimum; the grid search is then rounded down by one step.
    """
    a = _candidate_points(m1, m2, 2049)
    a = np.unique(np.concatenate((a, a + grid_step * 1e-9)))

    def holds(eps: float, p: FiniteMeasure, q: FiniteMeasure) -> bool:
        # [a, inf) versus its open eps-neighbourhood (a - eps, inf) within [0, inf)
        lhs = p.tail_left(a)
        shifted = a - eps
        rhs = np.where(shifted < 0, q.total_mass, q.tail(np.maximum(shifted, 0.0))) + eps
        if np.any(lhs > rhs + 1e-12):
            return False
        # [0, a] versus [0, a + eps)
        lhs = p.total_mass - p.tail(a)
        rhs = q.total_mass - q.tail_left(a + eps) + eps
        return not np.any(lhs > rhs + 1e-12)

    k = 0
    limit = max(m1.total_mass, m2.total_mass)
    while k * grid_step < limit:
        eps = k * grid_step
        if holds(eps, m1, m2) and holds(eps, m2, m1):
            break
        k += 1
    return max(0.0, (k - 1) * grid_step)
