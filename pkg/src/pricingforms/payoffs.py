"""Payoffs with explicit asymptotic growth coordinates.

A payoff is an evaluator on spot S in (0, inf) together with declared
asymptotic coefficients along the growth directions that a pricing form
can put weight on:

* ``LINEAR_AT_INFINITY``:    lim_{S->inf} f(S)/S
* ``QUADRATIC_AT_INFINITY``: lim_{S->inf} f(S)/S^2
* ``LOG_AT_ZERO``:           -lim_{S->0} f(S)/ln(S)

Coefficients are exact for the built-in closed-form payoff family; a
divergent coefficient (e.g. the linear coefficient of a squared call) is
recorded as ``math.inf`` — a distinguished value, never the result of a
floating overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

__all__ = [
    "GrowthDirection",
    "GrowthClass",
    "Payoff",
    "DominatingFunction",
    "make_call",
    "make_put",
    "make_forward",
    "make_bond",
    "make_power_call",
    "make_log_contract",
    "one_plus_s",
    "one_plus_s_squared",
    "one_plus_s_minus_log",
    "default_norm_grid",
    "payoff_norm",
]


class GrowthDirection(Enum):
    """Growth directions carrying the beyond-measure price coordinates."""

    LINEAR_AT_INFINITY = "linear_inf"
    QUADRATIC_AT_INFINITY = "quad_inf"
    LOG_AT_ZERO = "log_zero"


_DIRECTIONS = (
    GrowthDirection.LINEAR_AT_INFINITY,
    GrowthDirection.QUADRATIC_AT_INFINITY,
    GrowthDirection.LOG_AT_ZERO,
)


@dataclass(frozen=True)
class GrowthClass:
    """Dominating-power descriptor: max p with f(S)/S^p bounded at infinity,
    plus a flag for logarithmic blowup at S=0."""

    power: int
    log_at_zero: bool = False


def _sum_coeffs(terms: list[float]) -> float:
    """Sum asymptotic coefficients, keeping inf/indeterminate bookkeeping.

    inf + inf of the same sign stays inf; opposite signs (or any nan input)
    give nan, meaning "indeterminate — treat as not dominated".
    """
    if any(math.isnan(t) for t in terms):
        return math.nan
    pos = any(t == math.inf for t in terms)
    neg = any(t == -math.inf for t in terms)
    if pos and neg:
        return math.nan
    if pos:
        return math.inf
    if neg:
        return -math.inf
    return math.fsum(terms)


@dataclass(frozen=True)
class Payoff:
    """A closed-form-tagged payoff with exact asymptotic coefficients.

    ``evaluator`` is vectorized over numpy arrays and finite on (0, inf);
    at S=0 it returns the limit value (possibly ``inf`` for the log
    contract).  ``special_points`` are the kink locations, used to make
    norm grids exact for the piecewise-affine family.
    """

    kind: str
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    asym: dict[GrowthDirection, float] = field(compare=False)
    growth: GrowthClass
    strike: float | None = None
    special_points: tuple[float, ...] = ()

    def __call__(self, spot):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.evaluator(np.asarray(spot, dtype=float))

    def coeff(self, direction: GrowthDirection) -> float:
        return self.asym.get(direction, 0.0)

    # Payoffs form a vector space; combinations keep coefficient bookkeeping.
    def __mul__(self, alpha: float) -> "Payoff":
        alpha = float(alpha)
        base = self

        def ev(s, _b=base, _a=alpha):
            return _a * _b(s)

        if alpha == 0.0:
            asym = {d: 0.0 for d in _DIRECTIONS}
            growth = GrowthClass(0, False)
        else:
            asym = {d: _sum_coeffs([alpha * base.coeff(d)]) for d in _DIRECTIONS}
            growth = base.growth
        return Payoff(
            kind="combination",
            evaluator=ev,
            asym=asym,
            growth=growth,
            special_points=base.special_points,
        )

    __rmul__ = __mul__

    def __neg__(self) -> "Payoff":
        return self * -1.0

    def __add__(self, other: "Payoff") -> "Payoff":
        a, b = self, other

        def ev(s, _a=a, _b=b):
            return _a(s) + _b(s)

        asym = {d: _sum_coeffs([a.coeff(d), b.coeff(d)]) for d in _DIRECTIONS}
        growth = GrowthClass(
            max(a.growth.power, b.growth.power),
            a.growth.log_at_zero or b.growth.log_at_zero,
        )
        return Payoff(
            kind="combination",
            evaluator=ev,
            asym=asym,
            growth=growth,
            special_points=tuple(sorted(set(a.special_points) | set(b.special_points))),
        )

    def __sub__(self, other: "Payoff") -> "Payoff":
        return self + (-other)

    def to_json(self) -> dict:
        """Serialize as ``{kind, strike, asym:{...}}``; non-finite
        coefficients are omitted (they are implied by the kind)."""
        asym = {
            d.value: c for d, c in self.asym.items() if math.isfinite(c) and c != 0.0
        }
        out: dict = {"kind": self.kind, "asym": asym}
        if self.strike is not None:
            out["strike"] = self.strike
        return out


_MAKERS: dict[str, Callable] = {}


def payoff_from_json(obj: dict) -> Payoff:
    """Rebuild a built-in payoff from its ``{kind, strike, asym}`` descriptor."""
    kind = obj["kind"]
    if kind not in _MAKERS:
        raise ValueError(f"unknown payoff kind {kind!r}")
    maker = _MAKERS[kind]
    payoff = maker(obj["strike"]) if "strike" in obj else maker()
    declared = obj.get("asym", {})
    for key, value in declared.items():
        direction = GrowthDirection(key)
        if not math.isclose(payoff.coeff(direction), value, rel_tol=0, abs_tol=1e-12):
            raise ValueError(
                f"declared asym[{key}]={value} inconsistent with kind {kind!r}"
            )
    return payoff


def _register(kind: str):
    def deco(fn):
        _MAKERS[kind] = fn
        return fn

    return deco


def _check_strike(strike: float) -> float:
    strike = float(strike)
    if not strike > 0.0:
        raise ValueError(f"strike must be positive, got {strike}")
    return strike


@_register("call")
def make_call(strike: float) -> Payoff:
    """(S - K)^+"""
    k = _check_strike(strike)
    return Payoff(
        kind="call",
        evaluator=lambda s: np.maximum(s - k, 0.0),
        asym={
            GrowthDirection.LINEAR_AT_INFINITY: 1.0,
            GrowthDirection.QUADRATIC_AT_INFINITY: 0.0,
            GrowthDirection.LOG_AT_ZERO: 0.0,
        },
        growth=GrowthClass(1),
        strike=k,
        special_points=(k,),
    )


@_register("put")
def make_put(strike: float) -> Payoff:
    """(K - S)^+"""
    k = _check_strike(strike)
    return Payoff(
        kind="put",
        evaluator=lambda s: np.maximum(k - s, 0.0),
        asym={
            GrowthDirection.LINEAR_AT_INFINITY: 0.0,
            GrowthDirection.QUADRATIC_AT_INFINITY: 0.0,
            GrowthDirection.LOG_AT_ZERO: 0.0,
        },
        growth=GrowthClass(0),
        strike=k,
        special_points=(k,),
    )


@_register("forward")
def make_forward(strike: float) -> Payoff:
    """S - K (strike 0 allowed: the share itself)."""
    k = float(strike)
    if k < 0.0:
        raise ValueError(f"forward strike must be >= 0, got {k}")
    return Payoff(
        kind="forward",
        evaluator=lambda s: s - k,
        asym={
            GrowthDirection.LINEAR_AT_INFINITY: 1.0,
            GrowthDirection.QUADRATIC_AT_INFINITY: 0.0,
            GrowthDirection.LOG_AT_ZERO: 0.0,
        },
        growth=GrowthClass(1),
        strike=k,
        special_points=(k,) if k > 0 else (),
    )


@_register("bond")
def make_bond() -> Payoff:
    """Unit zero-coupon: pays 1 in every state."""
    return Payoff(
        kind="bond",
        evaluator=lambda s: np.ones_like(s),
        asym={
            GrowthDirection.LINEAR_AT_INFINITY: 0.0,
            GrowthDirection.QUADRATIC_AT_INFINITY: 0.0,
            GrowthDirection.LOG_AT_ZERO: 0.0,
        },
        growth=GrowthClass(0),
    )


@_register("power_call")
def make_power_call(strike: float) -> Payoff:
    """[(S - K)^+]^2.  Its linear-at-infinity coefficient diverges and is
    recorded as inf: a form with weight on the linear direction cannot
    price it."""
    k = _check_strike(strike)
    return Payoff(
        kind="power_call",
        evaluator=lambda s: np.maximum(s - k, 0.0) ** 2,
        asym={
            GrowthDirection.LINEAR_AT_INFINITY: math.inf,
            GrowthDirection.QUADRATIC_AT_INFINITY: 1.0,
            GrowthDirection.LOG_AT_ZERO: 0.0,
        },
        growth=GrowthClass(2),
        strike=k,
        special_points=(k,),
    )


@_register("log_contract")
def make_log_contract(strike: float) -> Payoff:
    """-ln(S/K) + S - K, nonnegative, with log blowup at S=0."""
    k = _check_strike(strike)

    def ev(s, _k=k):
        out = np.where(s > 0.0, -np.log(s / _k) + s - _k, math.inf)
        return out

    return Payoff(
        kind="log_contract",
        evaluator=ev,
        asym={
            GrowthDirection.LINEAR_AT_INFINITY: 1.0,
            GrowthDirection.QUADRATIC_AT_INFINITY: 0.0,
            GrowthDirection.LOG_AT_ZERO: 1.0,
        },
        growth=GrowthClass(1, log_at_zero=True),
        strike=k,
        special_points=(k,),
    )


@dataclass(frozen=True)
class DominatingFunction:
    """Nonnegative reference payoff f* inducing the norm
    ||f|| = inf{M : |f| <= M f*}."""

    kind: str
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    asym: dict[GrowthDirection, float] = field(compare=False)
    growth: GrowthClass
    special_points: tuple[float, ...] = ()

    def __call__(self, spot):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.evaluator(np.asarray(spot, dtype=float))

    def coeff(self, direction: GrowthDirection) -> float:
        return self.asym.get(direction, 0.0)


def one_plus_s() -> DominatingFunction:
    return DominatingFunction(
        kind="one_plus_s",
        evaluator=lambda s: 1.0 + s,
        asym={
            GrowthDirection.LINEAR_AT_INFINITY: 1.0,
            GrowthDirection.QUADRATIC_AT_INFINITY: 0.0,
            GrowthDirection.LOG_AT_ZERO: 0.0,
        },
        growth=GrowthClass(1),
    )


def one_plus_s_squared() -> DominatingFunction:
    return DominatingFunction(
        kind="one_plus_s2",
        evaluator=lambda s: 1.0 + s * s,
        asym={
            GrowthDirection.LINEAR_AT_INFINITY: 0.0,
            GrowthDirection.QUADRATIC_AT_INFINITY: 1.0,
            GrowthDirection.LOG_AT_ZERO: 0.0,
        },
        growth=GrowthClass(2),
    )


def one_plus_s_minus_log() -> DominatingFunction:
    """1 + S - ln(min(S, 1)): additionally dominates log-at-zero payoffs."""

    def ev(s):
        return np.where(
            s > 0.0, 1.0 + s - np.log(np.minimum(s, 1.0)), math.inf
        )

    return DominatingFunction(
        kind="one_plus_s_log",
        evaluator=ev,
        asym={
            GrowthDirection.LINEAR_AT_INFINITY: 1.0,
            GrowthDirection.QUADRATIC_AT_INFINITY: 0.0,
            GrowthDirection.LOG_AT_ZERO: 1.0,
        },
        growth=GrowthClass(1, log_at_zero=True),
        special_points=(1.0,),
    )


def default_norm_grid(*payoffs) -> np.ndarray:
    """Geometric grid on [1e-6, 1e8] (4096 points) plus S=0, plus every
    special point of the given payoffs and a small neighborhood of each.

    On this grid the supremum of |f|/f* is exact for piecewise-affine f
    against 1+S (ratios of affines are monotone between kinks), and a
    tight lower bound otherwise; asymptotic-coefficient ratios cap the
    behavior at the boundary of the state space.
    """
    pieces = [np.array([0.0]), np.geomspace(1e-6, 1e8, 4096)]
    for p in payoffs:
        for k in getattr(p, "special_points", ()):
            if k > 0.0:
                pieces.append(np.array([k, k * (1 - 1e-3), k * (1 + 1e-3)]))
    grid = np.unique(np.concatenate(pieces))
    return grid


def payoff_norm(f, fstar: DominatingFunction, grid: np.ndarray | None = None) -> float:
    """f*-relative norm: max of the grid supremum of |f|/f* and the ratio of
    asymptotic coefficients along each direction.

    Returns ``math.inf`` when f is not dominated by f* (this is a valid
    result, not an error): a growth direction where f carries a nonzero,
    divergent or indeterminate coefficient that f* does not cover.
    """
    if grid is None:
        grid = default_norm_grid(f, fstar)

    # Growth at infinity is ordered: quadratic coverage subsumes linear
    # growth (a divergent linear coefficient just records that the
    # quadratic term dominates), so compare f's top growth against the
    # top direction f* covers.  The log-at-zero direction is independent.
    ratios: list[float] = []
    quad_f = f.coeff(GrowthDirection.QUADRATIC_AT_INFINITY)
    lin_f = f.coeff(GrowthDirection.LINEAR_AT_INFINITY)
    quad_s = fstar.coeff(GrowthDirection.QUADRATIC_AT_INFINITY)
    lin_s = fstar.coeff(GrowthDirection.LINEAR_AT_INFINITY)
    if quad_s > 0.0:
        if math.isnan(quad_f):
            return math.inf
        ratios.append(abs(quad_f) / quad_s)
    elif lin_s > 0.0:
        if math.isnan(quad_f) or quad_f != 0.0 or not math.isfinite(lin_f):
            return math.inf
        ratios.append(abs(lin_f) / lin_s)
    else:
        if math.isnan(quad_f) or quad_f != 0.0 or math.isnan(lin_f) or lin_f != 0.0:
            return math.inf
    log_f = f.coeff(GrowthDirection.LOG_AT_ZERO)
    log_s = fstar.coeff(GrowthDirection.LOG_AT_ZERO)
    if log_s > 0.0:
        if math.isnan(log_f):
            return math.inf
        ratios.append(abs(log_f) / log_s)
    elif math.isnan(log_f) or log_f != 0.0:
        return math.inf

    fv = np.abs(f(grid))
    sv = fstar(grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = fv / sv
    # inf/inf (e.g. log contract against the log-dominating f* at S=0) is
    # settled by the direction ratio, so indeterminate points are dropped.
    both_inf = np.isinf(fv) & np.isinf(sv)
    r = np.where(both_inf, 0.0, r)
    if np.any(np.isnan(r)):
        return math.inf
    sup = float(np.max(r)) if r.size else 0.0
    return max([sup] + ratios)
