"""Probability laws on [0, inf) used for inter-arrival, service and patience times.

Every law evaluates its CDF, right tail and mean, draws samples from a
``numpy.random.Generator`` and, where possible, integrates its tail in closed
form. All evaluators accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, QuadratureNonConvergence

QUAD_ABS_TOL = 1e-10


class Distribution:
    """Common interface. Subclasses are frozen dataclasses."""

    kind: str = ""

    def cdf(self, x):
        raise NotImplementedError

    def tail(self, x):
        return 1.0 - self.cdf(x)

    def mean(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def tail_antiderivative(self, x):
        """Closed form of x -> integral of the tail over [0, x], or None."""
        return None

    def breakpoints(self) -> tuple[float, ...]:
        """Points where the CDF is not smooth (handed to quadrature)."""
        return ()

    @property
    def y_max(self) -> float:
        """inf{x : G(x) = 1}."""
        return math.inf

    @property
    def support_min(self) -> float:
        """inf{x : G(x) > 0}."""
        return 0.0

    @property
    def is_continuous(self) -> bool:
        return True

    @property
    def strictly_increasing(self) -> bool:
        """True when G is strictly increasing on (0, y_max) with G(0) = 0."""
        return True

    def quantile(self, p: float) -> float:
        """inf{y : G(y) >= p} by bisection; subclasses override closed forms."""
        if not 0.0 < p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        lo, hi = 0.0, 1.0
        while self.cdf(hi) < p:
            lo, hi = hi, 2.0 * hi
            if hi > 2.0**60:
                raise ValueError("quantile bracket exceeded")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.cdf(mid) >= p:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
        return hi

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


def _arr(x):
    return np.asarray(x, dtype=float)


def _out(v, x):
    return float(v) if np.ndim(x) == 0 else v


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float
    kind = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ConfigError("exponential rate must be > 0")

    def cdf(self, x):
        x = _arr(x)
        return _out(-np.expm1(-self.rate * np.maximum(x, 0.0)), x)

    def tail(self, x):
        x = _arr(x)
        return _out(np.exp(-self.rate * np.maximum(x, 0.0)), x)

    def mean(self):
        return 1.0 / self.rate

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def tail_antiderivative(self, x):
        x = _arr(x)
        return _out(-np.expm1(-self.rate * np.maximum(x, 0.0)) / self.rate, x)

    def quantile(self, p):
        return -math.log1p(-p) / self.rate

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Uniform(Distribution):
    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi:
            raise ConfigError("uniform law needs 0 <= lo < hi")

    def cdf(self, x):
        x = _arr(x)
        return _out(np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0), x)

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def tail_antiderivative(self, x):
        x = np.maximum(_arr(x), 0.0)
        w = self.hi - self.lo
        inside = np.clip(x, self.lo, self.hi) - self.lo
        return _out(np.minimum(x, self.lo) + inside - inside**2 / (2.0 * w), x)

    def breakpoints(self):
        return (self.lo, self.hi)

    @property
    def y_max(self):
        return self.hi

    @property
    def support_min(self):
        return self.lo

    @property
    def strictly_increasing(self):
        return self.lo == 0.0

    def quantile(self, p):
        return self.lo + p * (self.hi - self.lo)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Weibull(Distribution):
    shape: float
    scale: float
    kind = "weibull"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ConfigError("weibull shape and scale must be > 0")

    def cdf(self, x):
        x = np.maximum(_arr(x), 0.0)
        return _out(-np.expm1(-((x / self.scale) ** self.shape)), x)

    def tail(self, x):
        x = np.maximum(_arr(x), 0.0)
        return _out(np.exp(-((x / self.scale) ** self.shape)), x)

    def mean(self):
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def sample(self, rng, size):
        return self.scale * rng.weibull(self.shape, size)

    def tail_antiderivative(self, x):
        x = np.maximum(_arr(x), 0.0)
        k = self.shape
        v = (x / self.scale) ** k
        # integral of exp(-(u/s)^k) over [0, x] = (s/k) * Gamma(1/k) * P(1/k, (x/s)^k)
        val = self.scale / k * special.gamma(1.0 / k) * special.gammainc(1.0 / k, v)
        return _out(val, x)

    def quantile(self, p):
        return self.scale * (-math.log1p(-p)) ** (1.0 / self.shape)

    def to_dict(self):
        return {"kind": self.kind, "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class HyperExponential(Distribution):
    weights: tuple[float, ...]
    rates: tuple[float, ...]
    kind = "hyperexponential"

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.weights) != len(self.rates) or not self.weights:
            raise ConfigError("hyperexponential needs matching non-empty weights and rates")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-12:
            raise ConfigError("hyperexponential weights must be >= 0 and sum to 1")
        if any(r <= 0 for r in self.rates):
            raise ConfigError("hyperexponential rates must be > 0")

    def tail(self, x):
        x = np.maximum(_arr(x), 0.0)
        val = sum(w * np.exp(-r * x) for w, r in zip(self.weights, self.rates))
        return _out(val, x)

    def cdf(self, x):
        x = _arr(x)
        val = sum(w * -np.expm1(-r * np.maximum(x, 0.0)) for w, r in zip(self.weights, self.rates))
        return _out(val, x)

    def mean(self):
        return sum(w / r for w, r in zip(self.weights, self.rates))

    def sample(self, rng, size):
        branch = rng.choice(len(self.weights), size=size, p=self.weights)
        return rng.exponential(1.0, size) / np.asarray(self.rates)[branch]

    def tail_antiderivative(self, x):
        x = np.maximum(_arr(x), 0.0)
        val = sum(w * -np.expm1(-r * x) / r for w, r in zip(self.weights, self.rates))
        return _out(val, x)

    def to_dict(self):
        return {"kind": self.kind, "weights": list(self.weights), "rates": list(self.rates)}


@dataclass(frozen=True)
class Deterministic(Distribution):
    value: float
    kind = "deterministic"

    def __post_init__(self):
        if not self.value >= 0:
            raise ConfigError("deterministic value must be >= 0")

    def cdf(self, x):
        x = _arr(x)
        return _out(np.where(x >= self.value, 1.0, 0.0), x)

    def mean(self):
        return self.value

    def sample(self, rng, size):
        return np.full(size, self.value)

    def tail_antiderivative(self, x):
        x = np.maximum(_arr(x), 0.0)
        return _out(np.minimum(x, self.value), x)

    def breakpoints(self):
        return (self.value,)

    @property
    def y_max(self):
        return self.value

    @property
    def support_min(self):
        return self.value

    @property
    def is_continuous(self):
        return False

    @property
    def strictly_increasing(self):
        return False

    def quantile(self, p):
        return self.value

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class EmpiricalGrid(Distribution):
    """Piecewise-linear CDF through ``(points[i], cdf_values[i])``.

    A repeated point encodes an atom: the CDF jumps there and is right-continuous.
    The CDF is 0 left of ``points[0]`` and 1 right of ``points[-1]``.
    """

    points: tuple[float, ...]
    cdf_values: tuple[float, ...]
    kind = "empirical_grid"

    def __post_init__(self):
        p = tuple(float(v) for v in self.points)
        c = tuple(float(v) for v in self.cdf_values)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "cdf_values", c)
        if len(p) < 2 or len(p) != len(c):
            raise ConfigError("empirical_grid needs >= 2 points and matching cdf values")
        if p[0] < 0 or any(b < a for a, b in zip(p, p[1:])):
            raise ConfigError("empirical_grid points must be nonnegative and nondecreasing")
        if c[0] < 0 or any(b < a for a, b in zip(c, c[1:])) or c[-1] != 1.0:
            raise ConfigError("empirical_grid cdf values must be nondecreasing from >= 0 to 1")

    def cdf(self, x):
        x = _arr(x)
        pts = np.asarray(self.points)
        cv = np.asarray(self.cdf_values)
        k = np.searchsorted(pts, x, side="right")
        inner = np.clip(k, 1, len(pts) - 1)
        x0, x1 = pts[inner - 1], pts[inner]
        c0, c1 = cv[inner - 1], cv[inner]
        span = np.where(x1 > x0, x1 - x0, 1.0)
        lin = c0 + (c1 - c0) * (x - x0) / span
        val = np.where(k == 0, 0.0, np.where(k >= len(pts), 1.0, lin))
        return _out(val, x)

    def mean(self):
        return float(self.tail_antiderivative(self.points[-1]))

    def sample(self, rng, size):
        u = rng.uniform(0.0, 1.0, size)
        return self._inverse(u)

    def _inverse(self, u):
        pts = np.asarray(self.points)
        cv = np.asarray(self.cdf_values)
        # first knot index whose cdf value is >= u
        k = np.searchsorted(cv, u, side="left")
        k = np.clip(k, 0, len(pts) - 1)
        prev = np.maximum(k - 1, 0)
        c0, c1 = cv[prev], cv[k]
        x0, x1 = pts[prev], pts[k]
        frac = np.where(c1 > c0, (u - c0) / np.where(c1 > c0, c1 - c0, 1.0), 1.0)
        return np.where(k == 0, pts[0], x0 + frac * (x1 - x0))

    def _segments(self):
        # linear pieces (x0, x1, tail0, tail1); tail is 1 on [0, points[0])
        segs = [(0.0, self.points[0], 1.0, 1.0)] if self.points[0] > 0 else []
        for i in range(len(self.points) - 1):
            x0, x1 = self.points[i], self.points[i + 1]
            if x1 > x0:
                segs.append((x0, x1, 1.0 - self.cdf_values[i], 1.0 - self.cdf_values[i + 1]))
        return segs

    def tail_antiderivative(self, x):
        x = np.maximum(_arr(x), 0.0)
        segs = self._segments()
        flat = np.atleast_1d(x).astype(float)
        res = np.zeros_like(flat)
        for x0, x1, t0, t1 in segs:
            hi = np.clip(flat, x0, x1)
            t_hi = t0 + (t1 - t0) * (hi - x0) / (x1 - x0)
            res += 0.5 * (t0 + t_hi) * (hi - x0)
        return _out(res.reshape(np.shape(x)), x)

    def breakpoints(self):
        return tuple(sorted(set(self.points)))

    @property
    def y_max(self):
        idx = next(i for i, c in enumerate(self.cdf_values) if c >= 1.0)
        return self.points[idx]

    @property
    def support_min(self):
        if self.cdf_values[0] > 0:
            return self.points[0]
        idx = next(i for i, c in enumerate(self.cdf_values) if c > 0)
        return self.points[idx - 1]

    @property
    def is_continuous(self):
        pairs = zip(self.points, self.points[1:], self.cdf_values, self.cdf_values[1:])
        no_atoms = all(not (a == b and cb > ca) for a, b, ca, cb in pairs)
        return self.cdf_values[0] == 0.0 and no_atoms

    @property
    def strictly_increasing(self):
        if self.points[0] != 0.0 or self.cdf_values[0] != 0.0:
            return False
        end = self.cdf_values.index(1.0)
        return all(
            cb > ca for ca, cb in zip(self.cdf_values[:end], self.cdf_values[1 : end + 1])
        )

    def to_dict(self):
        return {"kind": self.kind, "points": list(self.points), "cdf": list(self.cdf_values)}


_KINDS = {
    "exponential": (Exponential, ("rate",)),
    "uniform": (Uniform, ("lo", "hi")),
    "weibull": (Weibull, ("shape", "scale")),
    "hyperexponential": (HyperExponential, ("weights", "rates")),
    "deterministic": (Deterministic, ("value",)),
    "empirical_grid": (EmpiricalGrid, ("points", "cdf")),
}


def distribution_from_dict(data: dict[str, Any]) -> Distribution:
    """Build a law from its JSON form, e.g. ``{"kind": "exponential", "rate": 2.0}``."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError(f"distribution must be an object with a 'kind' key, got {data!r}")
    kind = data["kind"]
    if kind not in _KINDS:
        raise ConfigError(f"unknown distribution kind {kind!r}; expected one of {sorted(_KINDS)}")
    cls, fields = _KINDS[kind]
    extra = set(data) - set(fields) - {"kind"}
    missing = set(fields) - set(data)
    if extra or missing:
        raise ConfigError(
            f"{kind} distribution: missing keys {sorted(missing)}, unknown keys {sorted(extra)}"
        )
    args = [data[f] for f in fields]
    if kind in ("hyperexponential", "empirical_grid"):
        args = [tuple(a) for a in args]
    return cls(*args)


def tail_integral(d: Distribution, a, b, method: str = "auto"):
    """Integral of ``d.tail`` over [a, b]; ``a`` and ``b`` may be arrays.

    ``method`` is ``"auto"`` (closed form when the law has one), ``"closed"`` or
    ``"quad"`` (adaptive quadrature to absolute tolerance 1e-10).
    """
    a_arr, b_arr = np.broadcast_arrays(_arr(a), _arr(b))
    if np.any(a_arr < 0) or np.any(b_arr < a_arr):
        raise ValueError("need 0 <= a <= b")
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0
    has_closed = d.tail_antiderivative(0.0) is not None
    if method == "closed" and not has_closed:
        raise ValueError(f"{d.kind} has no closed-form tail integral")
    if method == "quad" or not has_closed:
        flat = [_quad_tail(d, float(x), float(y)) for x, y in zip(a_arr.ravel(), b_arr.ravel())]
        val = np.asarray(flat).reshape(a_arr.shape)
    elif isinstance(d, (Exponential, HyperExponential)):
        # difference of exponentials written to avoid cancellation far in the tail
        val = sum(
            w * np.exp(-r * a_arr) * -np.expm1(-r * (b_arr - a_arr)) / r
            for w, r in _exp_mixture(d)
        )
    else:
        val = d.tail_antiderivative(b_arr) - d.tail_antiderivative(a_arr)
    val = np.where(b_arr == a_arr, 0.0, val)
    return float(val) if scalar else val


def _exp_mixture(d):
    if isinstance(d, Exponential):
        return [(1.0, d.rate)]
    return list(zip(d.weights, d.rates))


def _quad_tail(d: Distribution, a: float, b: float) -> float:
    if a == b:
        return 0.0
    pts = [p for p in d.breakpoints() if a < p < b]
    if math.isinf(b):
        pts = []
    val, err = integrate.quad(
        lambda u: float(d.tail(u)),
        a,
        b,
        points=pts or None,
        epsabs=QUAD_ABS_TOL,
        epsrel=0.0,
        limit=500,
    )
    if not err <= QUAD_ABS_TOL:
        raise QuadratureNonConvergence(
            f"tail integral of {d.kind} over [{a}, {b}] has error estimate {err:.3g}"
        )
    return float(val)


def y_star(g: Distribution, lam: float, mu: float) -> float:
    """sup{y < y_max : lam * G(y) < mu}; ``math.inf`` when lam <= mu."""
    if lam <= 0 or mu <= 0:
        raise ValueError("rates must be positive")
    if lam <= mu:
        return math.inf
    # G nondecreasing and right-continuous: the sup equals the (mu/lam)-quantile
    return min(g.quantile(mu / lam), g.y_max)
