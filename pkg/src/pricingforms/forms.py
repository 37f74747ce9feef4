"""Generalized pricing linear forms: measure part plus boundary weights.

A form prices a payoff as

    price(f) = sum_i w_i f(s_i)                    (atoms)
             + integral of density * f             (quadrature on stored nodes)
             + sum_d boundary_weights[d] * asym_d  (contribution from the boundary)

The form is arbitrage-free iff every component is nonnegative.  The
boundary weights are the part of the price that no finite measure can
represent; a call curve with a strictly positive tail limit certifies a
nonzero linear-at-infinity weight.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .payoffs import (
    DominatingFunction,
    GrowthDirection,
    Payoff,
    default_norm_grid,
    make_call,
    payoff_norm,
)

__all__ = [
    "UnpriceablePayoff",
    "ArbitrageDetected",
    "TailFitError",
    "Density",
    "GeneralizedPricingForm",
    "CallCurve",
    "CurveVerdict",
    "Violation",
    "validate_call_curve",
    "ImpliedFormResult",
    "implied_form_from_curve",
    "NormTheoremReport",
    "verify_norm_theorem",
    "gauss_legendre_density",
]


class UnpriceablePayoff(Exception):
    """Payoff growth exceeds the directions the form covers."""


class ArbitrageDetected(Exception):
    """Raised when an operation finds static arbitrage; carries the verdict."""

    def __init__(self, message, verdict=None):
        super().__init__(message)
        self.verdict = verdict


class TailFitError(Exception):
    """Curve does not extend far enough for the tail limit to converge."""


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.zeros_like(nodes)
    if nodes.size >= 2:
        d = np.diff(nodes)
        w[:-1] += d / 2.0
        w[1:] += d / 2.0
    return w


@dataclass(frozen=True)
class Density:
    """Quadrature-grid density: nodes (nonuniform allowed), values, and
    quadrature weights (trapezoid weights of the nodes when not given)."""

    nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        if nodes.shape != values.shape or nodes.ndim != 1:
            raise ValueError("density nodes and values must be 1-d and same length")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("density nodes must be strictly increasing")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != nodes.shape:
                raise ValueError("density weights must match nodes")
            object.__setattr__(self, "weights", w)

    def quad_weights(self) -> np.ndarray:
        if self.weights is not None:
            return self.weights
        return _trapezoid_weights(self.nodes)

    def mass(self) -> float:
        return float(np.dot(self.quad_weights(), self.values))

    def integrate(self, fn) -> float:
        return float(np.dot(self.quad_weights() * self.values, fn(self.nodes)))


def gauss_legendre_density(fn, s_max: float, panels: int = 256, nodes_per_panel: int = 8) -> Density:
    """Sample an analytic density on composite Gauss-Legendre panels over
    [0, s_max].  The quadrature weights are stored with the form so prices
    keep Gauss accuracy; beyond s_max the tail must be negligible."""
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(0.0, float(s_max), panels + 1)
    nodes = []
    weights = []
    for a, b in zip(edges[:-1], edges[1:]):
        h = (b - a) / 2.0
        nodes.append(a + h * (x + 1.0))
        weights.append(h * w)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    return Density(nodes=nodes, values=np.asarray(fn(nodes), dtype=float), weights=weights)


@dataclass(frozen=True)
class GeneralizedPricingForm:
    """Atoms + density (the measure part) and boundary weights (beyond it)."""

    atoms: tuple[tuple[float, float], ...] = ()
    density: Density | None = None
    boundary_weights: dict[GrowthDirection, float] = field(default_factory=dict)

    def boundary(self, direction: GrowthDirection) -> float:
        return self.boundary_weights.get(direction, 0.0)

    def is_positive(self, tol: float = 0.0) -> bool:
        """Arbitrage freedom: every atom weight, density value and boundary
        weight nonnegative (within tol)."""
        if any(w < -tol for _, w in self.atoms):
            return False
        if self.density is not None and np.any(self.density.values < -tol):
            return False
        if any(w < -tol for w in self.boundary_weights.values()):
            return False
        return True

    def price(self, payoff) -> float:
        """Price a payoff; raises UnpriceablePayoff when its growth exceeds
        the directions this form covers (an infinite price, not a number)."""
        total = 0.0
        for s, w in self.atoms:
            if w == 0.0:
                continue
            v = float(payoff(s))
            if not math.isfinite(v):
                raise UnpriceablePayoff(
                    f"payoff is {v} at atom S={s}; growth not covered by an atom"
                )
            total += w * v
        if self.density is not None:
            vals = payoff(self.density.nodes)
            if not np.all(np.isfinite(vals)):
                raise UnpriceablePayoff("payoff not finite on density nodes")
            total += float(np.dot(self.density.quad_weights() * self.density.values, vals))
        for d, w in self.boundary_weights.items():
            if w == 0.0:
                continue
            c = payoff.coeff(d) if hasattr(payoff, "coeff") else payoff.asym.get(d, 0.0)
            if not math.isfinite(c):
                raise UnpriceablePayoff(
                    f"payoff coefficient along {d.value} is {c}; "
                    "a weighted boundary direction would give an infinite price"
                )
            total += w * c
        return total

    def call_curve(self, strikes) -> "CallCurve":
        strikes = np.asarray(strikes, dtype=float)
        if strikes.ndim != 1 or strikes.size == 0:
            raise ValueError("strikes must be a nonempty 1-d grid")
        if np.any(strikes < 0) or np.any(np.diff(strikes) <= 0):
            raise ValueError("strikes must be nonnegative and increasing")
        prices = np.array([self.price(make_call(k)) if k > 0 else self.price_forward0()
                           for k in strikes])
        return CallCurve(strikes=strikes, prices=prices)

    def price_forward0(self):
        """Price of the K=0 call, i.e. the share itself."""
        from .payoffs import make_forward

        return self.price(make_forward(0.0))

    def to_json(self) -> dict:
        out: dict = {
            "atoms": [[float(s), float(w)] for s, w in self.atoms],
            "density": None,
            "boundary": {d.value: float(w) for d, w in self.boundary_weights.items()},
        }
        if self.density is not None:
            dens = {
                "nodes": self.density.nodes.tolist(),
                "values": self.density.values.tolist(),
            }
            if self.density.weights is not None:
                dens["weights"] = self.density.weights.tolist()
            out["density"] = dens
        return out

    @staticmethod
    def from_json(obj: dict) -> "GeneralizedPricingForm":
        atoms = tuple((float(s), float(w)) for s, w in obj.get("atoms", []))
        density = None
        if obj.get("density"):
            d = obj["density"]
            density = Density(
                nodes=np.asarray(d["nodes"], dtype=float),
                values=np.asarray(d["values"], dtype=float),
                weights=np.asarray(d["weights"], dtype=float) if "weights" in d else None,
            )
        boundary = {
            GrowthDirection(k): float(v) for k, v in obj.get("boundary", {}).items()
        }
        return GeneralizedPricingForm(atoms=atoms, density=density, boundary_weights=boundary)


@dataclass(frozen=True)
class CallCurve:
    """Sampled call prices on an increasing strike grid."""

    strikes: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.strikes, dtype=float)
        p = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "strikes", k)
        object.__setattr__(self, "prices", p)
        if k.shape != p.shape or k.ndim != 1:
            raise ValueError("strikes and prices must be 1-d and same length")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["strike", "price"])
        for k, p in zip(self.strikes, self.prices):
            writer.writerow([repr(float(k)), repr(float(p))])
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "CallCurve":
        reader = csv.reader(io.StringIO(text))
        rows = [row for row in reader if row]
        if not rows or [c.strip() for c in rows[0]] != ["strike", "price"]:
            raise ValueError("curve CSV must start with header 'strike,price'")
        try:
            data = np.array([[float(r[0]), float(r[1])] for r in rows[1:]])
        except (ValueError, IndexError) as exc:
            raise ValueError(f"malformed curve CSV row: {exc}") from exc
        if data.size == 0:
            raise ValueError("curve CSV has no data rows")
        order = np.argsort(data[:, 0])
        return CallCurve(strikes=data[order, 0], prices=data[order, 1])


@dataclass(frozen=True)
class Violation:
    kind: str  # negative | increasing | non-convex | above-spot | below-intrinsic
    strike: float
    magnitude: float

    def to_json(self) -> dict:
        return {"kind": self.kind, "strike": self.strike, "magnitude": self.magnitude}


@dataclass(frozen=True)
class CurveVerdict:
    ok: bool
    violations: tuple[Violation, ...]

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_json() for v in self.violations]}


def validate_call_curve(curve: CallCurve, spot: float, tol: float = 1e-8) -> CurveVerdict:
    """Static no-arbitrage checks on a call curve, with tol*(1+|price|) slack:
    nonnegative, non-increasing, midpoint-convex on consecutive triples,
    below spot, above intrinsic S0-K (unit zero-coupon, zero rates)."""
    k = curve.strikes
    c = curve.prices
    if k.size < 3:
        raise ValueError("need at least 3 strikes to validate a curve")
    slack = tol * (1.0 + np.abs(c))
    violations: list[Violation] = []

    for i in np.nonzero(c < -slack)[0]:
        violations.append(Violation("negative", float(k[i]), float(-c[i])))
    rise = c[1:] - c[:-1]
    for i in np.nonzero(rise > slack[1:])[0]:
        violations.append(Violation("increasing", float(k[i + 1]), float(rise[i])))
    # Midpoint convexity on consecutive triples: C(K1) must not exceed the
    # chord through (K0, K2) evaluated at K1.
    lam = (k[1:-1] - k[:-2]) / (k[2:] - k[:-2])
    chord = (1.0 - lam) * c[:-2] + lam * c[2:]
    bulge = c[1:-1] - chord
    for i in np.nonzero(bulge > slack[1:-1])[0]:
        violations.append(Violation("non-convex", float(k[i + 1]), float(bulge[i])))
    above = c - spot
    for i in np.nonzero(above > slack)[0]:
        violations.append(Violation("above-spot", float(k[i]), float(above[i])))
    below = (spot - k) - c
    for i in np.nonzero(below > slack)[0]:
        violations.append(Violation("below-intrinsic", float(k[i]), float(below[i])))

    return CurveVerdict(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class ImpliedFormResult:
    form: GeneralizedPricingForm
    boundary_weight: float
    atom_at_zero: float
    representable_by_probability: bool
    tail_error_estimate: float


def implied_form_from_curve(
    curve: CallCurve,
    spot: float,
    tol: float = 1e-8,
    tail_tol: float = 1e-6,
    representability_tol: float = 1e-6,
) -> ImpliedFormResult:
    """Extract the pricing form a call curve implies.

    The linear-at-infinity weight is the fitted tail limit of the curve;
    the density is the second finite difference on interior strikes; the
    atom at 0 absorbs the mass deficit so that price(bond)=1.  The curve
    is representable by a probability measure iff the tail limit vanishes.
    """
    k = curve.strikes
    c = curve.prices
    if k.size < 5:
        raise ValueError("need at least 5 strikes to extract a form")

    # Tail limit: a = Call(K_max), declared converged when the remaining
    # tail, extrapolated from the decay of Call over successive half
    # intervals, is below tail_tol * spot.
    k_max = k[-1]
    i_half = int(np.searchsorted(k, k_max / 2.0))
    i_quarter = int(np.searchsorted(k, k_max / 4.0))
    if i_half >= k.size - 1 or i_quarter >= i_half:
        raise TailFitError("curve too short to bracket K_max/2 and K_max/4")
    a_hat = float(c[-1])
    d1 = float(c[i_half] - c[-1])
    d2 = float(c[i_quarter] - c[i_half])
    scale = max(abs(float(spot)), 1e-12)
    if d1 <= tail_tol * scale * 1e-3:
        tail_err = abs(d1)
    elif d2 > 0.0 and d1 / d2 < 1.0:
        rho = d1 / d2
        tail_err = d1 * rho / (1.0 - rho)
    else:
        tail_err = math.inf
    if not tail_err < tail_tol * scale:
        raise TailFitError(
            f"tail fit not converged: estimated remaining tail {tail_err:.3g} "
            f"exceeds {tail_tol:.1g} * spot"
        )

    # Implied density: central second difference on interior strikes.
    h0 = k[1:-1] - k[:-2]
    h1 = k[2:] - k[1:-1]
    dens = 2.0 * (
        c[:-2] / (h0 * (h0 + h1)) - c[1:-1] / (h0 * h1) + c[2:] / (h1 * (h0 + h1))
    )
    dens_scale = max(float(np.max(dens, initial=0.0)), 1e-300)
    neg = np.nonzero(dens < -tol * (1.0 + dens_scale))[0]
    if neg.size:
        i = int(neg[np.argmin(dens[neg])])
        verdict = CurveVerdict(
            ok=False,
            violations=(Violation("non-convex", float(k[i + 1]), float(-dens[i])),),
        )
        raise ArbitrageDetected(
            f"implied density negative at K={k[i + 1]:g} ({dens[i]:.3g})",
            verdict=verdict,
        )
    dens = np.maximum(dens, 0.0)
    density = Density(nodes=k[1:-1].copy(), values=dens)
    mass = density.mass()
    atom0 = 1.0 - mass
    if atom0 < -tol * 10.0:
        raise ArbitrageDetected(
            f"implied density mass {mass:.6g} exceeds the unit bond price"
        )
    atom0 = max(atom0, 0.0)

    form = GeneralizedPricingForm(
        atoms=((0.0, atom0),),
        density=density,
        boundary_weights={GrowthDirection.LINEAR_AT_INFINITY: a_hat},
    )
    return ImpliedFormResult(
        form=form,
        boundary_weight=a_hat,
        atom_at_zero=atom0,
        representable_by_probability=bool(a_hat <= representability_tol),
        tail_error_estimate=tail_err,
    )


@dataclass(frozen=True)
class NormCounterexample:
    label: str
    kind: str  # "bound" or "positivity"
    price: float
    bound: float


@dataclass(frozen=True)
class NormTheoremReport:
    """Outcome of checking |pi(f)| <= pi(f*) ||f|| over a payoff sample."""

    max_ratio: float
    saturation_gap: float
    pi_fstar: float
    counterexamples: tuple[NormCounterexample, ...]

    @property
    def ok(self) -> bool:
        return not self.counterexamples


def verify_norm_theorem(
    form: GeneralizedPricingForm,
    payoffs,
    fstar: DominatingFunction,
    tol: float = 1e-9,
) -> NormTheoremReport:
    """Check the equivalence of positivity and norm-continuity on samples:
    |price(f)| <= price(f*) * ||f|| for every sample payoff, with the bound
    saturated exactly by f = f*.  Violations (including positivity failures
    on nonnegative samples) are reported as counterexamples, not raised."""
    pi_star = form.price(fstar)
    counterexamples: list[NormCounterexample] = []
    max_ratio = 0.0

    payoffs = list(payoffs)
    for i, f in enumerate(payoffs):
        label = getattr(f, "kind", f"payoff[{i}]")
        if getattr(f, "strike", None) is not None:
            label = f"{label}(K={f.strike:g})"
        grid = default_norm_grid(f, fstar)
        norm = payoff_norm(f, fstar, grid)
        pi_f = form.price(f)
        bound = pi_star * norm
        if math.isfinite(bound):
            if abs(pi_f) > bound + tol * (1.0 + abs(bound)):
                counterexamples.append(
                    NormCounterexample(label, "bound", pi_f, bound)
                )
            if bound > 0.0:
                max_ratio = max(max_ratio, abs(pi_f) / bound)
        fv = f(grid)
        nonneg = bool(np.all(fv >= -1e-12)) and all(
            (math.isnan(f.coeff(d)) or f.coeff(d) >= 0.0) for d in f.asym
        )
        if nonneg and pi_f < -tol * (1.0 + abs(pi_f)):
            counterexamples.append(NormCounterexample(label, "positivity", pi_f, 0.0))

    # Saturation: f = f* has norm exactly 1, so its ratio must be exactly 1.
    norm_star = payoff_norm(fstar, fstar)
    saturation_gap = abs(pi_star * norm_star - pi_star) / max(abs(pi_star), 1e-300)
    return NormTheoremReport(
        max_ratio=max_ratio,
        saturation_gap=saturation_gap,
        pi_fstar=pi_star,
        counterexamples=tuple(counterexamples),
    )
