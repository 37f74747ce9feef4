"""Finite markets on an augmented state space and LP price bounds.

The state space is a spot grid augmented with growth-direction
coordinates; an instrument is its payoff vector over that space plus a
quoted price.  Consistency of the quotes with some positive pricing form,
super/sub-replication bounds for a target payoff and market completeness
all reduce to small dense LPs with explicit dual certificates.

The choice of which growth directions a market includes is user input by
design: truncating the state space (dropping the linear-at-infinity
coordinate) silently changes price bounds, and exposing the coordinate is
the point of the exercise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .forms import ArbitrageDetected, GeneralizedPricingForm
from .payoffs import GrowthDirection, payoff_from_json
from .simplex import FEAS_TOL, LPProblem, solve_lp

__all__ = [
    "AugmentedStateSpace",
    "Instrument",
    "FiniteMarket",
    "ConsistencyResult",
    "check_consistency",
    "BoundsResult",
    "price_bounds",
    "CompletenessReport",
    "is_complete",
]


@dataclass(frozen=True)
class AugmentedStateSpace:
    """Spot grid nodes plus growth directions as extra coordinates.

    Coordinates are ordered grid-first, then directions in the order given.
    """

    grid: np.ndarray
    directions: tuple[GrowthDirection, ...] = ()

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "directions", tuple(self.directions))
        if g.ndim != 1 or g.size == 0:
            raise ValueError("grid must be a nonempty 1-d array")
        if np.any(g < 0) or np.any(np.diff(g) <= 0):
            raise ValueError("grid nodes must be >= 0 and strictly increasing")
        if len(set(self.directions)) != len(self.directions):
            raise ValueError("duplicate growth directions")

    @property
    def dim(self) -> int:
        return self.grid.size + len(self.directions)

    def labels(self) -> list[str]:
        return [f"S={s:g}" for s in self.grid] + [d.value for d in self.directions]

    def payoff_vector(self, payoff) -> np.ndarray:
        """Coordinates of a payoff: values at grid nodes, then asymptotic
        coefficients along the included directions."""
        values = np.asarray(payoff(self.grid), dtype=float)
        coeffs = []
        for d in self.directions:
            c = payoff.coeff(d)
            if not math.isfinite(c):
                raise ValueError(
                    f"payoff has no finite coefficient along {d.value}; "
                    "include a higher growth direction instead"
                )
            coeffs.append(c)
        vec = np.concatenate([values, np.asarray(coeffs, dtype=float)])
        if not np.all(np.isfinite(vec)):
            raise ValueError("payoff vector has non-finite entries")
        return vec

    def form_from_weights(self, weights: np.ndarray) -> GeneralizedPricingForm:
        """Positive weights on the augmented coordinates as a pricing form."""
        w = np.asarray(weights, dtype=float)
        if w.size != self.dim:
            raise ValueError("weight vector does not match space dimension")
        m = self.grid.size
        atoms = tuple((float(s), float(x)) for s, x in zip(self.grid, w[:m]))
        boundary = {d: float(x) for d, x in zip(self.directions, w[m:])}
        return GeneralizedPricingForm(atoms=atoms, boundary_weights=boundary)


@dataclass(frozen=True)
class Instrument:
    name: str
    vector: np.ndarray
    price: float

    def __post_init__(self):
        object.__setattr__(self, "vector", np.asarray(self.vector, dtype=float))


@dataclass(frozen=True)
class FiniteMarket:
    space: AugmentedStateSpace
    instruments: tuple[Instrument, ...]

    def __post_init__(self):
        object.__setattr__(self, "instruments", tuple(self.instruments))
        if not self.instruments:
            raise ValueError("market needs at least one instrument")
        for inst in self.instruments:
            if inst.vector.size != self.space.dim:
                raise ValueError(
                    f"instrument {inst.name!r} vector length {inst.vector.size} "
                    f"!= space dimension {self.space.dim}"
                )

    def canonical(self) -> "FiniteMarket":
        """Drop exact duplicates (same vector and price)."""
        seen: set[bytes] = set()
        kept = []
        for inst in self.instruments:
            key = inst.vector.tobytes() + repr(float(inst.price)).encode()
            if key not in seen:
                seen.add(key)
                kept.append(inst)
        return FiniteMarket(space=self.space, instruments=tuple(kept))

    def payoff_matrix(self) -> np.ndarray:
        return np.vstack([inst.vector for inst in self.instruments])

    def prices(self) -> np.ndarray:
        return np.array([inst.price for inst in self.instruments], dtype=float)

    def add(self, instrument: Instrument) -> "FiniteMarket":
        return FiniteMarket(self.space, self.instruments + (instrument,))

    def to_json(self) -> dict:
        return {
            "grid": self.space.grid.tolist(),
            "directions": [d.value for d in self.space.directions],
            "instruments": [
                {"name": i.name, "vector": i.vector.tolist(), "price": float(i.price)}
                for i in self.instruments
            ],
        }

    @staticmethod
    def from_json(obj: dict) -> "FiniteMarket":
        space = AugmentedStateSpace(
            grid=np.asarray(obj["grid"], dtype=float),
            directions=tuple(GrowthDirection(d) for d in obj.get("directions", [])),
        )
        instruments = []
        for k, item in enumerate(obj["instruments"]):
            name = item.get("name", f"instrument[{k}]")
            if "vector" in item:
                vec = np.asarray(item["vector"], dtype=float)
            elif "payoff" in item:
                vec = space.payoff_vector(payoff_from_json(item["payoff"]))
            else:
                raise ValueError(f"instrument {name!r} needs 'vector' or 'payoff'")
            instruments.append(Instrument(name=name, vector=vec, price=float(item["price"])))
        return FiniteMarket(space=space, instruments=tuple(instruments))


@dataclass(frozen=True)
class ConsistencyResult:
    consistent: bool
    form: GeneralizedPricingForm | None = None
    weights: np.ndarray | None = None
    arbitrage: dict[str, float] | None = None  # portfolio: name -> position


def check_consistency(market: FiniteMarket) -> ConsistencyResult:
    """Existence of a positive form on the augmented space repricing every
    quote; otherwise an arbitrage portfolio with nonnegative payoff on
    every coordinate and negative cost."""
    market = market.canonical()
    v = market.payoff_matrix()
    p = market.prices()
    solution = solve_lp(LPProblem(c=np.zeros(market.space.dim), a_eq=v, b_eq=p))
    if solution.status == "optimal":
        w = solution.x
        residual = float(np.max(np.abs(v @ w - p), initial=0.0))
        if residual > FEAS_TOL * (1.0 + float(np.max(np.abs(p), initial=0.0))):
            raise ArbitrageDetected(
                f"witness form fails to reprice quotes (residual {residual:.3g})"
            )
        return ConsistencyResult(
            consistent=True, form=market.space.form_from_weights(w), weights=w
        )
    if solution.status == "infeasible":
        lam = -solution.farkas
        payoff = lam @ v
        cost = float(lam @ p)
        if float(np.min(payoff)) < -FEAS_TOL * (1.0 + float(np.max(np.abs(v)))) or cost >= 0:
            raise ArbitrageDetected("Farkas certificate failed verification")
        portfolio = {
            inst.name: float(x) for inst, x in zip(market.instruments, lam) if x != 0.0
        }
        return ConsistencyResult(consistent=False, arbitrage=portfolio)
    raise ArbitrageDetected(f"unexpected LP status {solution.status!r}")


@dataclass(frozen=True)
class BoundsResult:
    lower: float
    upper: float
    lower_form: GeneralizedPricingForm | None
    upper_form: GeneralizedPricingForm | None
    subhedge: np.ndarray | None  # portfolio with payoff <= target, cost = lower
    superhedge: np.ndarray | None  # portfolio with payoff >= target, cost = upper
    instrument_names: tuple[str, ...] = ()


def _target_vector(market: FiniteMarket, target) -> np.ndarray:
    if hasattr(target, "coeff") or hasattr(target, "asym"):
        return market.space.payoff_vector(target)
    t = np.asarray(target, dtype=float)
    if t.size != market.space.dim:
        raise ValueError("target vector does not match space dimension")
    return t


def price_bounds(market: FiniteMarket, target) -> BoundsResult:
    """Sub/super-replication price bounds for a target payoff.

    Every arbitrage-free extension of the quoted prices values the target
    inside [lower, upper]; each finite bound is attained by an explicit
    positive form and certified by a dual hedge portfolio.
    """
    market = market.canonical()
    consistency = check_consistency(market)
    if not consistency.consistent:
        raise ArbitrageDetected(
            f"market admits arbitrage: {consistency.arbitrage}"
        )
    v = market.payoff_matrix()
    p = market.prices()
    t = _target_vector(market, target)
    names = tuple(inst.name for inst in market.instruments)
    scale = 1.0 + float(np.max(np.abs(t)))

    out: dict[str, object] = {}
    for side, maximize in (("lower", False), ("upper", True)):
        solution = solve_lp(LPProblem(c=t, a_eq=v, b_eq=p, maximize=maximize))
        if solution.status == "optimal":
            bound = float(solution.objective)
            form = market.space.form_from_weights(solution.x)
            # Dual hedge: lam' v <= t (subhedge) or >= t (superhedge), with
            # cost lam' p equal to the bound (weak duality, tight at optimum).
            lam = solution.duals
            hedge_payoff = lam @ v
            gap = float(lam @ p) - bound
            if maximize:
                dominates = float(np.min(hedge_payoff - t)) >= -FEAS_TOL * scale
            else:
                dominates = float(np.max(hedge_payoff - t)) <= FEAS_TOL * scale
            if not dominates or abs(gap) > FEAS_TOL * (1.0 + abs(bound)):
                raise ArbitrageDetected(
                    f"{side} hedge certificate failed (gap {gap:.3g})"
                )
            out[side] = (bound, form, lam)
        elif solution.status == "unbounded":
            out[side] = (-math.inf if not maximize else math.inf, None, None)
        else:  # pragma: no cover - consistency was checked above
            raise ArbitrageDetected("bounds LP unexpectedly infeasible")

    lower, lower_form, sub = out["lower"]
    upper, upper_form, sup = out["upper"]
    return BoundsResult(
        lower=lower,
        upper=upper,
        lower_form=lower_form,
        upper_form=upper_form,
        subhedge=sub,
        superhedge=sup,
        instrument_names=names,
    )


@dataclass(frozen=True)
class CompletenessReport:
    complete: bool
    widest_gap: float
    widest_label: str
    gaps: tuple[tuple[str, float, float, float], ...]  # (label, lower, upper, gap)


def is_complete(market: FiniteMarket, basis_payoffs, tol: float = 1e-8) -> CompletenessReport:
    """A market is complete when every basis payoff is priced uniquely:
    super- and sub-replication bounds coincide within tol."""
    gaps = []
    widest = -1.0
    widest_label = ""
    for i, payoff in enumerate(basis_payoffs):
        label = getattr(payoff, "kind", None)
        if label is not None and getattr(payoff, "strike", None) is not None:
            label = f"{label}(K={payoff.strike:g})"
        elif label is None:
            label = f"basis[{i}]"
        bounds = price_bounds(market, payoff)
        gap = bounds.upper - bounds.lower
        gaps.append((label, bounds.lower, bounds.upper, gap))
        if gap > widest:
            widest = gap
            widest_label = label
    return CompletenessReport(
        complete=bool(widest <= tol),
        widest_gap=float(widest),
        widest_label=widest_label,
        gaps=tuple(gaps),
    )
