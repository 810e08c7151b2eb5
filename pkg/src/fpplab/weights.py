"""Continuous edge-weight distributions.

Each distribution bundles its CDF, density, and quantile function as plain
callables that accept scalars or numpy arrays. Sampling is inverse-CDF
throughout: one uniform draw per sample, so a fixed random stream produces
the same number of draws no matter which distribution is in play.

Distributions must be continuous with support on [0, inf). Atoms are
rejected at construction time, as is any table whose density fails to
integrate to one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

__all__ = [
    "WeightDistribution",
    "WeightModelError",
    "exponential",
    "shifted_exponential",
    "power_exponential",
    "uniform",
    "user_table",
    "from_spec",
    "load_table",
    "save_table",
    "sample",
    "evaluate",
]


class WeightModelError(ValueError):
    """Invalid weight-distribution construction or evaluation."""


def _scalar_ok(fn: Callable[[np.ndarray], np.ndarray]) -> Callable:
    """Wrap an array-only function so scalars in give scalars out."""

    def wrapped(x):
        arr = np.asarray(x, dtype=float)
        out = fn(arr)
        if arr.ndim == 0:
            return float(out)
        return out

    return wrapped


@dataclass(frozen=True)
class WeightDistribution:
    """A continuous weight law on [0, inf).

    cdf, density and quantile are vectorized callables. support_hi is the
    essential supremum of the law (inf for unbounded kinds); support_lo is
    the left edge of the support. params, together with kind, fully
    describe the law, so spec() is a cheap picklable handle.
    """

    kind: str
    params: tuple
    cdf: Callable
    density: Callable
    quantile: Callable
    support_lo: float
    support_hi: float

    def spec(self) -> tuple:
        """Picklable (kind, params) handle; rebuild with from_spec()."""
        return (self.kind, self.params)

    def __repr__(self) -> str:  # keep reprs short, the callables are noise
        inner = ",".join(repr(p) for p in self.params)
        return f"WeightDistribution({self.kind}:{inner})"


# ---------------------------------------------------------------------------
# validation

_DENSITY_INTEGRAL_TOL = 1e-8
_ROUND_TRIP_TOL = 1e-9


def _validate(dist: WeightDistribution) -> WeightDistribution:
    # The density must integrate to 1. A table's density is piecewise
    # constant, so its integral telescopes to exactly 1 and quad would only
    # add noise (and chokes on tables with more breakpoints than its
    # subdivision limit); the analytic kinds get real quadrature. Upper
    # limit is the (1 - 1e-14) quantile, whose tail mass is far below the
    # 1e-8 budget; quad copes with the integrable edge singularity of the
    # power kind.
    if dist.kind == "user_table":
        p_col, q_col = dist.params
        total = float(np.sum(np.diff(p_col)))
    else:
        hi = float(dist.quantile(1.0 - 1e-14))
        lo = dist.support_lo
        interior = [dist.quantile(q) for q in (0.1, 0.5, 0.9)]
        pts = sorted({p for p in interior if lo < p < hi})
        total = quad(
            dist.density, lo, hi, points=pts or None, limit=200, full_output=True
        )[0]
    if abs(total - 1.0) > _DENSITY_INTEGRAL_TOL:
        raise WeightModelError(
            f"{dist.kind}: density integrates to {total!r}, not 1 "
            f"(tolerance {_DENSITY_INTEGRAL_TOL})"
        )

    # quantile must invert the cdf on the interior of the support
    grid = np.linspace(1e-6, 1.0 - 1e-6, 101)
    x = dist.quantile(grid)
    back = dist.quantile(dist.cdf(x))
    scale = np.maximum(np.abs(x), 1.0)
    worst = float(np.max(np.abs(back - x) / scale))
    if worst > _ROUND_TRIP_TOL:
        raise WeightModelError(
            f"{dist.kind}: quantile(cdf(x)) deviates by {worst:.3e} "
            f"(tolerance {_ROUND_TRIP_TOL})"
        )
    return dist


# ---------------------------------------------------------------------------
# built-in kinds


def exponential(rate: float = 1.0) -> WeightDistribution:
    """Exponential law with the given rate; mean 1/rate."""
    if not rate > 0:
        raise WeightModelError(f"exponential rate must be positive, got {rate}")
    r = float(rate)

    def cdf(x):
        return np.where(x <= 0, 0.0, -np.expm1(-r * np.maximum(x, 0.0)))

    def density(x):
        return np.where(x < 0, 0.0, r * np.exp(-r * np.maximum(x, 0.0)))

    def quantile(u):
        return -np.log1p(-np.asarray(u, dtype=float)) / r

    return _validate(
        WeightDistribution(
            "exponential", (r,),
            _scalar_ok(cdf), _scalar_ok(density), _scalar_ok(quantile),
            support_lo=0.0, support_hi=np.inf,
        )
    )


def shifted_exponential(k: float) -> WeightDistribution:
    """1 + E/k with E standard exponential: support [1, inf).

    Large k concentrates the law near 1, which is the deterministic-weight
    limit; the growth-rate solver is exercised against that limit in tests.
    """
    if not k > 0:
        raise WeightModelError(f"shifted_exponential k must be positive, got {k}")
    kk = float(k)

    def cdf(x):
        z = np.maximum(np.asarray(x, dtype=float) - 1.0, 0.0)
        return -np.expm1(-kk * z)

    def density(x):
        arr = np.asarray(x, dtype=float)
        return np.where(arr < 1.0, 0.0, kk * np.exp(-kk * np.maximum(arr - 1.0, 0.0)))

    def quantile(u):
        return 1.0 - np.log1p(-np.asarray(u, dtype=float)) / kk

    return _validate(
        WeightDistribution(
            "shifted_exponential", (kk,),
            _scalar_ok(cdf), _scalar_ok(density), _scalar_ok(quantile),
            support_lo=1.0, support_hi=np.inf,
        )
    )


def power_exponential(s: float) -> WeightDistribution:
    """Law of E^s for E standard exponential: cdf 1 - exp(-x^(1/s)).

    For s > 1 the density diverges at the origin (integrably); density(0)
    returns inf there as a sentinel. s < 1 squeezes the law toward small
    weights and pushes the growth rate very high at large offspring means.
    """
    if not s > 0:
        raise WeightModelError(f"power_exponential s must be positive, got {s}")
    ss = float(s)
    p = 1.0 / ss
    if ss > 1.0:
        at_zero = np.inf
    elif ss == 1.0:
        at_zero = 1.0
    else:
        at_zero = 0.0

    def cdf(x):
        arr = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-np.power(arr, p))

    def density(x):
        arr = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            core = p * np.power(arr, p - 1.0) * np.exp(-np.power(np.maximum(arr, 0.0), p))
        return np.where(arr < 0, 0.0, np.where(arr == 0.0, at_zero, core))

    def quantile(u):
        return np.power(-np.log1p(-np.asarray(u, dtype=float)), ss)

    return _validate(
        WeightDistribution(
            "power_exponential", (ss,),
            _scalar_ok(cdf), _scalar_ok(density), _scalar_ok(quantile),
            support_lo=0.0, support_hi=np.inf,
        )
    )


def uniform(b: float) -> WeightDistribution:
    """Uniform law on (0, b)."""
    if not b > 0:
        raise WeightModelError(f"uniform upper endpoint must be positive, got {b}")
    bb = float(b)

    def cdf(x):
        return np.clip(np.asarray(x, dtype=float) / bb, 0.0, 1.0)

    def density(x):
        arr = np.asarray(x, dtype=float)
        return np.where((arr >= 0) & (arr <= bb), 1.0 / bb, 0.0)

    def quantile(u):
        return np.asarray(u, dtype=float) * bb

    return _validate(
        WeightDistribution(
            "uniform", (bb,),
            _scalar_ok(cdf), _scalar_ok(density), _scalar_ok(quantile),
            support_lo=0.0, support_hi=bb,
        )
    )


def user_table(levels, quantiles) -> WeightDistribution:
    """Piecewise-linear quantile function from a (probability, quantile) table.

    levels must start at 0.0, end at 1.0, and be strictly increasing;
    quantiles must be nonnegative and strictly increasing (strictness in
    both columns is what rules out atoms and flat spots). The implied cdf
    is the piecewise-linear inverse and the density is piecewise constant.
    """
    p = np.asarray(levels, dtype=float)
    q = np.asarray(quantiles, dtype=float)
    if p.ndim != 1 or q.ndim != 1 or p.size != q.size or p.size < 2:
        raise WeightModelError("user_table needs two equal-length columns, >= 2 rows")
    if p[0] != 0.0 or p[-1] != 1.0:
        raise WeightModelError("user_table probability column must run 0.0 .. 1.0")
    if np.any(np.diff(p) <= 0):
        raise WeightModelError("user_table probability column must be strictly increasing")
    if np.any(np.diff(q) <= 0):
        raise WeightModelError(
            "user_table quantile column must be strictly increasing (atoms not allowed)"
        )
    if q[0] < 0:
        raise WeightModelError("user_table quantiles must be nonnegative")
    slopes = np.diff(p) / np.diff(q)  # density value on each segment

    def cdf(x):
        return np.interp(np.asarray(x, dtype=float), q, p, left=0.0, right=1.0)

    def density(x):
        arr = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(q, arr, side="right") - 1, 0, slopes.size - 1)
        inside = (arr >= q[0]) & (arr <= q[-1])
        return np.where(inside, slopes[idx], 0.0)

    def quantile(u):
        return np.interp(np.asarray(u, dtype=float), p, q)

    return _validate(
        WeightDistribution(
            "user_table", (tuple(p.tolist()), tuple(q.tolist())),
            _scalar_ok(cdf), _scalar_ok(density), _scalar_ok(quantile),
            support_lo=float(q[0]), support_hi=float(q[-1]),
        )
    )


_FACTORIES = {
    "exponential": exponential,
    "shifted_exponential": shifted_exponential,
    "power_exponential": power_exponential,
    "uniform": uniform,
}


def from_spec(kind: str, params) -> WeightDistribution:
    """Rebuild a distribution from a (kind, params) handle."""
    if kind == "user_table":
        levels, quants = params
        return user_table(levels, quants)
    try:
        factory = _FACTORIES[kind]
    except KeyError:
        raise WeightModelError(f"unknown weight kind {kind!r}") from None
    return factory(*params)


# ---------------------------------------------------------------------------
# io


def load_table(path) -> WeightDistribution:
    """Read a two-column (probability, quantile) text table."""
    rows = np.loadtxt(path, dtype=float, ndmin=2)
    if rows.shape[1] != 2:
        raise WeightModelError(f"{path}: expected two columns, got {rows.shape[1]}")
    return user_table(rows[:, 0], rows[:, 1])


def save_table(dist: WeightDistribution, path, n_rows: int = 257) -> None:
    """Write a (probability, quantile) table approximating the law."""
    p = np.linspace(0.0, 1.0, n_rows)
    p[-1] = 1.0
    # tail rows of unbounded laws would be inf; pin the last level slightly in
    if np.isinf(dist.support_hi):
        p = np.concatenate([p[:-1], [1.0 - 1e-9, 1.0]])
        q = dist.quantile(p[:-1])
        q = np.concatenate([q, [q[-1] * (1 + 1e-9) + 1e-12]])
    else:
        q = dist.quantile(p)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pi, qi in zip(p, q):
            fh.write(f"{float(pi)!r} {float(qi)!r}\n")


# ---------------------------------------------------------------------------
# operations


def sample(dist: WeightDistribution, rng: np.random.Generator, size=None):
    """Inverse-CDF sampling: exactly one uniform consumed per variate."""
    return dist.quantile(rng.random(size))


def evaluate(dist: WeightDistribution, x):
    """Return (cdf(x), density(x)); x must be nonnegative."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise WeightModelError("weights live on [0, inf); negative query")
    return dist.cdf(x), dist.density(x)
