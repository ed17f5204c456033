"""Fluid limits: the potential queue function H, the Skorohod map with the
moving barrier h(t) = H(0, t), the generalised inverse chi, the frontier and
the limiting queue measure.

H(x, t) = Q_0(x + t, inf) + lam * integral over [x, x + t] of (1 - G),
the fluid number of customers with lead time above x at time t in a system
without a server.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .distributions import Distribution, tail_integral, y_star
from .errors import AssumptionViolation, BracketNotFound, GridMismatch
from .measures import FiniteMeasure, fmt
from .model import InitialCondition

CHI_TOL = 1e-12
CHI_CAP = 2.0**60


@dataclass(frozen=True)
class FluidProblem:
    lam: float
    mu: float
    patience: Distribution
    initial: InitialCondition
    horizon: float
    steps: int = 4096

    def __post_init__(self):
        if self.lam < 0 or self.mu <= 0:
            raise ValueError("need lam >= 0 and mu > 0")
        if self.horizon <= 0 or self.steps < 1:
            raise ValueError("need horizon > 0 and steps >= 1")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    @property
    def q0(self) -> float:
        return self.initial.mass

    def validate(self) -> None:
        """Raise ``AssumptionViolation`` naming the first failed assumption."""
        g = self.patience
        if not g.is_continuous or not g.strictly_increasing:
            raise AssumptionViolation(
                "continuous patience law",
                f"patience law {g.kind!r} must be continuous at 0 with G(0)=0 and strictly "
                "increasing on (0, y_max); deterministic deadlines are not covered",
            )
        if float(g.cdf(0.0)) != 0.0:
            raise AssumptionViolation("continuous patience law", "G(0) must be 0")
        if self.lam > self.mu:
            ys = y_star(g, self.lam, self.mu)
            if math.isfinite(ys):
                left = float(g.cdf(max(ys - 1e-12 * max(1.0, ys), 0.0)))
                right = float(g.cdf(ys))
                if right - left > 1e-9:
                    raise AssumptionViolation(
                        "no atom at y*", f"patience CDF jumps at y*={ys} ({left} -> {right})"
                    )
            if self.initial.frontier0 > ys:
                raise AssumptionViolation("frontier0 <= y*", "frontier0 exceeds y*")
        if self.initial.mass > 0 and not self.initial.law.is_continuous:
            raise AssumptionViolation("continuous initial measure", "initial law has an atom")

    def theorem2_hypotheses(self) -> bool:
        """Initial support starts at 0, reaches y_max, with strictly decreasing tail."""
        law = self.initial.law
        if self.initial.mass == 0 or law is None:
            return False
        return (
            law.support_min == 0.0
            and law.y_max >= self.patience.y_max
            and law.strictly_increasing
        )

    def H(self, x, t):
        """Vectorised H(x, t)."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        x, t = np.broadcast_arrays(x, t)
        val = self.initial.tail(x + t)
        if self.lam > 0:
            val = val + self.lam * tail_integral(self.patience, x, x + t)
        val = np.asarray(val, dtype=float)
        return float(val) if val.ndim == 0 else val

    def psi(self, t):
        return self.q0 + (self.lam - self.mu) * np.asarray(t, dtype=float)

    def chi(self, x, t):
        return chi(self, x, t)


@dataclass(frozen=True)
class GridPath:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if np.shape(self.times) != np.shape(self.values):
            raise GridMismatch("times and values differ in length")


def skorohod_map(psi: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Grid solution of the one-sided problem on (-inf, h]: returns (phi, eta)."""
    psi = np.asarray(psi, dtype=float)
    h = np.asarray(h, dtype=float)
    if psi.shape != h.shape:
        raise GridMismatch(f"psi has shape {psi.shape}, h has {h.shape}")
    eta = np.maximum.accumulate(np.maximum(psi - h, 0.0))
    return psi - eta, eta


def solve_sp(psi: GridPath, h: GridPath) -> tuple[GridPath, GridPath]:
    if psi.times.shape != h.times.shape or not np.array_equal(psi.times, h.times):
        raise GridMismatch("psi and h are sampled on different grids")
    phi, eta = skorohod_map(psi.values, h.values)
    return GridPath(psi.times, phi), GridPath(psi.times, eta)


def chi(prob: FluidProblem, x, t):
    """inf{y >= 0 : H(y, t) <= x} by bracketing and bisection (vectorised)."""
    shape = np.broadcast(np.asarray(x), np.asarray(t)).shape
    x_arr, t_arr = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    if np.any(x_arr <= 0):
        raise ValueError("chi needs x > 0")
    x_arr = x_arr.ravel()
    t_arr = t_arr.ravel()
    out = np.zeros(x_arr.shape)
    todo = prob.H(np.zeros_like(t_arr), t_arr) > x_arr
    if np.any(todo):
        xs, ts = x_arr[todo], t_arr[todo]
        lo = np.zeros_like(xs)
        hi = np.ones_like(xs)
        above = prob.H(hi, ts) > xs
        while np.any(above):
            if np.any(hi[above] >= CHI_CAP):
                raise BracketNotFound(f"H(y, t) stays above x up to y={CHI_CAP:g}")
            lo[above] = hi[above]
            hi[above] *= 2.0
            above = prob.H(hi, ts) > xs
        while np.max(hi - lo) > CHI_TOL:
            mid = 0.5 * (lo + hi)
            right = prob.H(mid, ts) <= xs
            hi = np.where(right, mid, hi)
            lo = np.where(right, lo, mid)
            if np.all(hi - lo <= CHI_TOL * np.maximum(1.0, hi)):
                break
        out[todo] = 0.5 * (lo + hi)
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


@dataclass
class FluidSolution:
    problem: FluidProblem
    times: np.ndarray
    psi: np.ndarray
    h: np.ndarray
    eta: np.ndarray
    phi: np.ndarray
    frontier: np.ndarray | None = None
    kappa: float = 0.0
    t_bar: float | None = None
    phi_bar: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def H(self, x, t):
        return self.problem.H(x, t)

    def chi(self, x, t):
        return chi(self.problem, x, t)

    def queue_at(self, t):
        """Fluid queue length at t (the truncated one in the subcritical case)."""
        path = self.phi_bar if self.phi_bar is not None else self.phi
        return np.interp(t, self.times, path)

    def reneging_at(self, t):
        return np.interp(t, self.times, self.eta)

    def phi_at(self, t):
        return np.interp(t, self.times, self.phi)

    def frontier_at(self, t):
        """F(t) = chi(phi(t), t), with phi interpolated on the grid."""
        if self.frontier is None:
            raise ValueError("frontier is only defined for lam >= mu")
        t_arr = np.asarray(t, dtype=float)
        f = self.chi(np.maximum(self.phi_at(t_arr), 1e-300), t_arr)
        f = np.where(t_arr < self.kappa, np.nan, f)
        return float(f) if np.ndim(t) == 0 else f

    def limit_tail(self, t: float, a):
        """Q_t(a, inf) = H(F(t) v a, t)."""
        f = self.frontier_at(t)
        return self.H(np.maximum(f, np.asarray(a, dtype=float)), t)

    def limit_measure(self, t: float) -> FiniteMeasure:
        f = float(self.frontier_at(t))
        prob = self.problem
        total = float(prob.H(f, t))
        upper = _support_upper(prob, t)
        return FiniteMeasure.analytic(
            lambda a: prob.H(np.maximum(f, a), t), total_mass=total, upper=upper
        )

    def to_csv(self, path: str | Path) -> None:
        cols = ["t", "psi", "h", "eta", "phi", "F"]
        if self.phi_bar is not None:
            cols.append("phi_bar")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for k, t in enumerate(self.times):
                row = [fmt(t), fmt(self.psi[k]), fmt(self.h[k]), fmt(self.eta[k]),
                       fmt(self.phi[k])]
                if self.frontier is None or np.isnan(self.frontier[k]):
                    row.append("")
                else:
                    row.append(fmt(self.frontier[k]))
                if self.phi_bar is not None:
                    row.append(fmt(self.phi_bar[k]))
                w.writerow(row)

    def write_tail_grid(self, path: str | Path, t: float, points: int = 257) -> None:
        m = self.limit_measure(t)
        m.to_csv(path, np.linspace(0.0, m.upper, points))


def _support_upper(prob: FluidProblem, t: float) -> float:
    """A lead-time level beyond which H(., t) is negligible (< 1e-12)."""
    y = 1.0
    while prob.H(y, t) > 1e-12 and y < 1e6:
        y *= 2.0
    return y


def _refine_peaks(prob: FluidProblem, times: np.ndarray, gap: np.ndarray) -> np.ndarray:
    """Raise grid values of psi - h where a continuous maximum falls between knots.

    A discrete local maximum at k means the true maximum of psi - h lies in
    (t_{k-1}, t_{k+1}); its value is credited from the first knot at or after it.
    """
    peaks = gap.copy()
    n = len(gap)
    if n < 3:
        return peaks
    inner = np.nonzero((gap[1:-1] >= gap[:-2]) & (gap[1:-1] >= gap[2:]) & (gap[1:-1] > 0))[0] + 1
    for k in inner:
        a, b = times[k - 1], times[k + 1]
        res = optimize.minimize_scalar(
            lambda s: -(prob.psi(s) - prob.H(0.0, s)),
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-13},
        )
        s_star, val = float(res.x), -float(res.fun)
        j = int(np.searchsorted(times, s_star, side="left"))
        if j < n and val > peaks[j]:
            peaks[j] = val
    return peaks


def _sp_solution(prob: FluidProblem, refine_peaks: bool):
    times = prob.times
    psi = prob.psi(times)
    h = prob.H(np.zeros_like(times), times)
    gap = psi - h
    if refine_peaks:
        gap = _refine_peaks(prob, times, gap)
    eta = np.maximum.accumulate(np.maximum(gap, 0.0))
    return times, psi, h, eta, psi - eta


def fluid_qr(
    prob: FluidProblem, *, refine_peaks: bool = True, kappa: float | None = None
) -> FluidSolution:
    """Fluid queue length phi, reneging eta and frontier F for lam >= mu.

    ``kappa`` is the left end of the window on which the frontier is reported;
    it defaults to 0 when the initial measure satisfies the frontier theorem's
    support conditions and to 5% of the horizon otherwise.
    """
    if prob.lam < prob.mu:
        raise AssumptionViolation("lambda >= mu", "use fluid_subcritical when lambda < mu")
    prob.validate()
    times, psi, h, eta, phi = _sp_solution(prob, refine_peaks)
    if kappa is None:
        kappa = 0.0 if prob.theorem2_hypotheses() else 0.05 * prob.horizon
    sol = FluidSolution(prob, times, psi, h, eta, phi, kappa=kappa)
    sol.frontier = fluid_frontier(sol)
    return sol


def fluid_frontier(sol: FluidSolution) -> np.ndarray:
    """F(t_k) = chi(phi(t_k), t_k); NaN left of kappa."""
    window = sol.times >= sol.kappa
    phi = sol.phi[window]
    if np.any(phi <= 0):
        raise AssumptionViolation("Q(0) > 0", "fluid queue vanishes; frontier undefined")
    f = np.full(sol.times.shape, np.nan)
    f[window] = chi(sol.problem, phi, sol.times[window])
    return f


def fluid_limit_measure(sol: FluidSolution, t: float, a) -> float:
    """Tail Q_t(a, inf) of the limiting queue measure."""
    return sol.limit_tail(t, a)


def fluid_subcritical(prob: FluidProblem, *, refine_peaks: bool = True) -> FluidSolution:
    """phi truncated to 0 after its first zero T_bar (lam < mu).

    ``t_bar`` is ``math.inf`` when phi stays positive on [0, horizon].
    """
    if prob.lam >= prob.mu:
        raise AssumptionViolation("lambda < mu", "fluid_subcritical needs lambda < mu")
    prob.validate()
    times, psi, h, eta, phi = _sp_solution(prob, refine_peaks)
    hit = np.nonzero(phi <= 0)[0]
    if len(hit) == 0:
        t_bar = math.inf
    elif hit[0] == 0:
        t_bar = 0.0
    else:
        k = int(hit[0])
        eta_before = eta[k - 1]

        def phi_cont(s: float) -> float:
            gap = float(prob.psi(s) - prob.H(0.0, s))
            return float(prob.psi(s)) - max(eta_before, gap, 0.0)

        t_bar = _bisect(phi_cont, times[k - 1], times[k])
    phi_bar = np.where(times <= t_bar, np.maximum(phi, 0.0), 0.0)
    return FluidSolution(prob, times, psi, h, eta, phi, frontier=None, t_bar=t_bar, phi_bar=phi_bar)


def _bisect(f, lo: float, hi: float, tol: float = 1e-13) -> float:
    """Smallest-crossing bisection for f(lo) > 0 >= f(hi)."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return hi


def solve(prob: FluidProblem, **kw) -> FluidSolution:
    """Dispatch on the regime."""
    if prob.lam >= prob.mu:
        return fluid_qr(prob, **kw)
    return fluid_subcritical(prob, refine_peaks=kw.get("refine_peaks", True))


def problem_from_config(config, steps: int | None = None) -> FluidProblem:
    return FluidProblem(
        lam=config.lam,
        mu=config.mu,
        patience=config.patience_law,
        initial=config.initial,
        horizon=config.horizon,
        steps=config.fluid_steps if steps is None else steps,
    )
