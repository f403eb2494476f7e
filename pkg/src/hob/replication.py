"""Static-replication portfolios: flat weighted lists of binaries, cash and forwards."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .binaries import BinarySpec, Kind, MarketParams, Sign, price_binary
from .errors import MissingDate, TimeAfterFirstExpiry, ValidationError


@dataclass(frozen=True)
class Cash:
    amount: float
    pay_date: float


@dataclass(frozen=True)
class AssetForward:
    """One unit of the asset delivered at ``pay_date``."""

    pay_date: float


Leg = Union[BinarySpec, Cash, AssetForward]


def leg_first_date(leg: Leg) -> float:
    return leg.first_date if isinstance(leg, BinarySpec) else leg.pay_date


def leg_last_date(leg: Leg) -> float:
    return leg.last_date if isinstance(leg, BinarySpec) else leg.pay_date


@dataclass(frozen=True)
class PortfolioTerm:
    weight: float
    leg: Leg

    def __post_init__(self):
        if not math.isfinite(self.weight):
            raise ValidationError(f"weight must be finite, got {self.weight}", field="weight")
        object.__setattr__(self, "weight", float(self.weight))


@dataclass(frozen=True)
class Portfolio:
    terms: tuple[PortfolioTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __add__(self, other: "Portfolio") -> "Portfolio":
        return Portfolio(self.terms + other.terms)

    def __len__(self):
        return len(self.terms)

    def scaled(self, factor: float) -> "Portfolio":
        return Portfolio(tuple(PortfolioTerm(factor * term.weight, term.leg)
                               for term in self.terms))

    def dates(self) -> list[float]:
        """Every date any leg observes, sorted."""
        out = set()
        for term in self.terms:
            if isinstance(term.leg, BinarySpec):
                out.update(term.leg.expiries)
            else:
                out.add(term.leg.pay_date)
        return sorted(out)


def price_leg(x: float, t: float, leg: Leg, params: MarketParams,
              tol: float | None = None) -> float:
    if isinstance(leg, BinarySpec):
        return price_binary(x, t, leg, params, tol)
    if not t < leg.pay_date:
        raise TimeAfterFirstExpiry(f"valuation time {t} is not before pay date {leg.pay_date}",
                                   field="time")
    if isinstance(leg, Cash):
        return leg.amount * math.exp(-params.r * (leg.pay_date - t))
    return x * math.exp(-params.q * (leg.pay_date - t))


def price_portfolio(x: float, t: float, p: Portfolio, params: MarketParams,
                    tol: float | None = None) -> float:
    """Sum of weight times leg price; an empty portfolio is worth 0."""
    return math.fsum(term.weight * price_leg(x, t, term.leg, params, tol) for term in p.terms)


def leg_payoff(leg: Leg, path_values: Mapping[float, float | np.ndarray]):
    """Cash paid by one unit of ``leg`` at its last date.

    Works elementwise when the path values are arrays.  Indicators are strict:
    a spot exactly at the exercise price does not trigger.
    """
    def spot(date):
        try:
            return path_values[date]
        except KeyError:
            raise MissingDate(f"no spot supplied for date {date}") from None

    if isinstance(leg, Cash):
        spot(leg.pay_date)
        return leg.amount
    if isinstance(leg, AssetForward):
        return spot(leg.pay_date)
    live = True
    for s, xi, T in zip(leg.signs, leg.exercise_prices, leg.expiries):
        live = live & (int(s) * spot(T) > int(s) * xi)
    x_last = spot(leg.last_date)
    if leg.kind is Kind.ASSET:
        value = x_last
    elif leg.kind is Kind.BOND:
        value = 1.0
    else:
        value = int(leg.signs[-1]) * (x_last - leg.strike)
    return np.where(live, value, 0.0) if isinstance(live, np.ndarray) else (value if live else 0.0)


def expiry_payoff(p: Portfolio, path_values: Mapping[float, float | np.ndarray],
                  rate: float = 0.0):
    """Realised payoff of ``p`` expressed at its latest date.

    Legs maturing earlier are rolled forward to the latest date at ``rate``
    (the default 0 simply adds the amounts).
    """
    if not p.terms:
        return 0.0
    last = max(leg_last_date(term.leg) for term in p.terms)
    total = 0.0
    for term in p.terms:
        grow = math.exp(rate * (last - leg_last_date(term.leg)))
        total = total + term.weight * grow * leg_payoff(term.leg, path_values)
    return total


# ---------------------------------------------------------------------------
# JSON form
# ---------------------------------------------------------------------------

def leg_to_dict(leg: Leg) -> dict:
    if isinstance(leg, Cash):
        return {"type": "cash", "amount": leg.amount, "pay_date": leg.pay_date}
    if isinstance(leg, AssetForward):
        return {"type": "asset_forward", "pay_date": leg.pay_date}
    out = {
        "type": "binary",
        "kind": leg.kind.value,
        "signs": [str(s) for s in leg.signs],
        "exercise_prices": list(leg.exercise_prices),
        "expiries": list(leg.expiries),
    }
    if leg.kind is Kind.Q:
        out["strike"] = leg.strike
    return out


def leg_from_dict(data: Mapping) -> Leg:
    if not isinstance(data, Mapping):
        raise ValidationError("leg must be an object", field="leg")
    kind = data.get("type")
    try:
        if kind == "cash":
            return Cash(_num(data["amount"], "amount"), _num(data["pay_date"], "pay_date"))
        if kind == "asset_forward":
            return AssetForward(_num(data["pay_date"], "pay_date"))
        if kind == "binary":
            strike = data.get("strike")
            return BinarySpec(
                Kind(data["kind"]),
                tuple(Sign.parse(s) for s in data["signs"]),
                tuple(_num(v, "exercise_prices") for v in data["exercise_prices"]),
                tuple(_num(v, "expiries") for v in data["expiries"]),
                None if strike is None else _num(strike, "strike"),
            )
    except KeyError as exc:
        raise ValidationError(f"leg is missing field {exc.args[0]!r}", field=exc.args[0]) from None
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc), field="kind") from None
    raise ValidationError(f"unknown leg type {kind!r}", field="type")


def portfolio_to_dict(p: Portfolio) -> dict:
    return {"terms": [{"weight": term.weight, "leg": leg_to_dict(term.leg)} for term in p.terms]}


def portfolio_from_dict(data: Mapping) -> Portfolio:
    terms = data.get("terms") if isinstance(data, Mapping) else None
    if not isinstance(terms, list):
        raise ValidationError("portfolio needs a 'terms' list", field="terms")
    out = []
    for item in terms:
        if not isinstance(item, Mapping) or "weight" not in item or "leg" not in item:
            raise ValidationError("each term needs 'weight' and 'leg'", field="terms")
        out.append(PortfolioTerm(_num(item["weight"], "weight"), leg_from_dict(item["leg"])))
    return Portfolio(tuple(out))


def _num(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number, got {value!r}", field=name)
    return float(value)
