"""Closed-form fluid solution for the exponential example.

Setup: lam = 1, Q(0) = 1, initial tail e^{-x}, patience G(x) = 1 - e^{-theta x},
mu in (0, 1]. Then

    H(x, t) = e^{-x-t} + (1/theta) e^{-theta x} (1 - e^{-theta t})
    psi(t)  = 1 + (1 - mu) t

and psi - H(0, .) has derivative f(s) = 1 - mu + e^{-s} - e^{-theta s}.
This module is deliberately independent of the numerical engine: it
only uses the formulas above and scipy's bracketing root finder.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import RegimeError, RootNotFound

ROOT_TOL = 1e-13


class Case(enum.Enum):
    CASE1 = "Case1"
    CASE2 = "Case2"
    CASE3A = "Case3a"
    CASE3B = "Case3b"


@dataclass(frozen=True)
class ExampleParams:
    mu: float
    theta: float

    lam = 1.0
    q0 = 1.0

    def __post_init__(self):
        if not 0.0 < self.mu <= 1.0:
            raise ValueError("mu must lie in (0, 1]")
        if not self.theta > 0:
            raise ValueError("theta must be > 0")


def case3_threshold(theta: float) -> float:
    """(1 - theta) * theta^(theta/(1-theta)) for 0 < theta < 1, computed in logs."""
    if not 0.0 < theta < 1.0:
        raise ValueError("threshold is defined for 0 < theta < 1")
    return math.exp(math.log1p(-theta) + theta / (1.0 - theta) * math.log(theta))


def example_case(p: ExampleParams) -> Case:
    if p.theta >= 1.0:
        return Case.CASE1
    if p.mu == 1.0:
        return Case.CASE2
    if 1.0 - p.mu >= case3_threshold(p.theta):
        return Case.CASE3A
    return Case.CASE3B


def example_H(p: ExampleParams, x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    th = p.theta
    return np.exp(-x - t) + np.exp(-th * x) * -np.expm1(-th * t) / th


def f_slope(p: ExampleParams, s):
    return 1.0 - p.mu + np.exp(-s) - np.exp(-p.theta * s)


def A_integral(p: ExampleParams, s):
    """Integral of f over [0, s]."""
    th = p.theta
    return (1.0 - p.mu) * s - np.exp(-s) + 1.0 + (np.exp(-th * s) - 1.0) / th


def _case1_eta(p: ExampleParams, t):
    th = p.theta
    return 1.0 - 1.0 / th + (1.0 - p.mu) * t - np.exp(-t) + np.exp(-th * t) / th


def find_a1_a2(p: ExampleParams) -> tuple[float, float]:
    """First zero a1 of f, and the largest a2 with A(a2) = A(a1)."""
    if example_case(p) is not Case.CASE3B:
        raise RegimeError(f"a1, a2 exist only in Case3b, not {example_case(p).value}")
    th = p.theta
    # f is smallest where e^{-(1-theta)s} = theta
    s_min = -math.log(th) / (1.0 - th)
    if not f_slope(p, s_min) < 0:
        raise RootNotFound("f does not dip below zero; regime misclassified")
    try:
        a1 = brentq(lambda s: f_slope(p, s), 0.0, s_min, xtol=ROOT_TOL, maxiter=500)
        # f increases to 1 - mu > 0 after s_min: second zero b, then A grows for good
        hi = 2.0 * s_min + 1.0
        while f_slope(p, hi) <= 0:
            hi *= 2.0
        b = brentq(lambda s: f_slope(p, s), s_min, hi, xtol=ROOT_TOL, maxiter=500)
        target = A_integral(p, a1)
        hi = b + 1.0
        while A_integral(p, hi) <= target:
            hi = b + 2.0 * (hi - b)
            if hi > 1e12:
                raise RootNotFound("A never returns to A(a1)")
        a2 = brentq(lambda s: A_integral(p, s) - target, b, hi, xtol=ROOT_TOL, maxiter=500)
    except ValueError as exc:
        raise RootNotFound(str(exc)) from exc
    return float(a1), float(a2)


def example_phi_eta(p: ExampleParams, t):
    """Closed-form (phi, eta) at t (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    psi = 1.0 + (1.0 - p.mu) * t_arr
    case = example_case(p)
    if case is Case.CASE2:
        phi = np.ones_like(t_arr)
        eta = np.zeros_like(t_arr)
    elif case in (Case.CASE1, Case.CASE3A):
        th = p.theta
        phi = 1.0 / th + np.exp(-t_arr) - np.exp(-th * t_arr) / th
        eta = _case1_eta(p, t_arr)
    else:
        a1, a2 = find_a1_a2(p)
        eta_a1 = float(_case1_eta(p, a1))
        eta = np.where((t_arr > a1) & (t_arr < a2), eta_a1, _case1_eta(p, t_arr))
        phi = psi - eta
    if np.ndim(t) == 0:
        return float(phi), float(eta)
    return phi, eta


def example_frontier(p: ExampleParams, t) -> np.ndarray:
    """chi(phi(t), t) via brentq on the closed-form H."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    phi, _ = example_phi_eta(p, t_arr)
    out = np.zeros_like(t_arr)
    for k, (tk, xk) in enumerate(zip(t_arr, phi)):
        if example_H(p, 0.0, tk) <= xk:
            continue
        hi = 1.0
        while example_H(p, hi, tk) > xk:
            hi *= 2.0
        out[k] = brentq(lambda y: float(example_H(p, y, tk)) - xk, 0.0, hi, xtol=1e-14)
    return out if np.ndim(t) else float(out[0])


def example_curves(p: ExampleParams, horizon: float, steps: int = 4096):
    """Columns t, psi, h, eta, phi, F on the grid t_k = k * horizon / steps."""
    t = np.arange(steps + 1) * (horizon / steps)
    phi, eta = example_phi_eta(p, t)
    return {
        "t": t,
        "psi": 1.0 + (1.0 - p.mu) * t,
        "h": example_H(p, 0.0, t),
        "eta": eta,
        "phi": phi,
        "F": example_frontier(p, t),
    }
