"""Closed-form prices of first and higher order asset, bond and Q binaries.

An n-th order binary pays, at its last date T_{n-1}, a unit of the asset (asset
binary), a unit of cash (bond binary) or ``s_{n-1} (x - K)`` (Q binary), provided
that at every date T_i the spot satisfied ``s_i x(T_i) > s_i xi_i``.  Under
Black-Scholes dynamics its value is a discounted n-variate normal probability
whose correlation matrix comes from the expiry grid.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonIncreasingExpiries, TimeAfterFirstExpiry, ValidationError
from .numerics import CorrelationMatrix, mvn_cdf

NEAR_EXPIRY = 1e-10
MIN_DATE_GAP = 1e-9


@dataclass(frozen=True)
class MarketParams:
    r: float
    q: float
    sigma: float

    def __post_init__(self):
        for name in ("r", "q", "sigma"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValidationError(f"{name} must be a finite number, got {v!r}", field=name)
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}", field="sigma")


class Sign(enum.IntEnum):
    UP = 1
    DOWN = -1

    @classmethod
    def parse(cls, value) -> "Sign":
        if isinstance(value, Sign):
            return value
        if value in ("+", "up", "UP", 1):
            return cls.UP
        if value in ("-", "down", "DOWN", -1):
            return cls.DOWN
        raise ValidationError(f"not a sign indicator: {value!r}", field="signs")

    def __str__(self):
        return "+" if self is Sign.UP else "-"


class Kind(str, enum.Enum):
    ASSET = "asset"
    BOND = "bond"
    Q = "q"


@dataclass(frozen=True)
class BinarySpec:
    """An n-th order binary.

    ``strike`` is used only by Q binaries, where it is the cash leg of the
    payoff ``s_{n-1} (x - strike)`` paid at the last date.
    """

    kind: Kind
    signs: tuple[Sign, ...]
    exercise_prices: tuple[float, ...]
    expiries: tuple[float, ...]
    strike: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "signs", tuple(Sign.parse(s) for s in self.signs))
        object.__setattr__(self, "exercise_prices", tuple(float(v) for v in self.exercise_prices))
        object.__setattr__(self, "expiries", tuple(float(v) for v in self.expiries))
        n = len(self.signs)
        if n < 1:
            raise ValidationError("a binary needs at least one date", field="signs")
        if len(self.exercise_prices) != n or len(self.expiries) != n:
            raise ValidationError("signs, exercise_prices and expiries must have equal length",
                                  field="expiries")
        for xi in self.exercise_prices:
            if not (xi > 0 and math.isfinite(xi)):
                raise ValidationError(f"exercise prices must be positive, got {xi}",
                                      field="exercise_prices")
        _check_increasing(self.expiries)
        if self.kind is Kind.Q:
            if self.strike is None or not (self.strike > 0 and math.isfinite(self.strike)):
                raise ValidationError(f"Q binary needs a positive strike, got {self.strike}",
                                      field="strike")
            object.__setattr__(self, "strike", float(self.strike))
        elif self.strike is not None:
            raise ValidationError(f"{self.kind.value} binary takes no strike", field="strike")

    @property
    def order(self) -> int:
        return len(self.signs)

    @property
    def first_date(self) -> float:
        return self.expiries[0]

    @property
    def last_date(self) -> float:
        return self.expiries[-1]

    def with_sign(self, index: int, sign: Sign) -> "BinarySpec":
        signs = list(self.signs)
        signs[index] = Sign.parse(sign)
        return BinarySpec(self.kind, tuple(signs), self.exercise_prices, self.expiries,
                          self.strike)

    def without(self, index: int) -> "BinarySpec":
        """The (n-1)-th order binary with date ``index`` removed."""
        keep = [i for i in range(self.order) if i != index]
        return BinarySpec(self.kind, tuple(self.signs[i] for i in keep),
                          tuple(self.exercise_prices[i] for i in keep),
                          tuple(self.expiries[i] for i in keep), self.strike)

    def label(self) -> str:
        signs = "".join(str(s) for s in self.signs)
        head = {Kind.ASSET: "A", Kind.BOND: "B", Kind.Q: "Q"}[self.kind]
        return f"{head}^{signs}"


def asset_binary(signs, exercise_prices, expiries) -> BinarySpec:
    return BinarySpec(Kind.ASSET, tuple(signs), tuple(exercise_prices), tuple(expiries))


def bond_binary(signs, exercise_prices, expiries) -> BinarySpec:
    return BinarySpec(Kind.BOND, tuple(signs), tuple(exercise_prices), tuple(expiries))


def q_binary(signs, exercise_prices, expiries, strike) -> BinarySpec:
    return BinarySpec(Kind.Q, tuple(signs), tuple(exercise_prices), tuple(expiries), strike)


def _check_increasing(expiries: Sequence[float]):
    for a, b in zip(expiries[:-1], expiries[1:]):
        if not b - a >= MIN_DATE_GAP:
            raise NonIncreasingExpiries(
                f"expiries must increase by at least {MIN_DATE_GAP:g}: {a} then {b}",
                field="expiries")


def _check_time(t: float, first: float):
    if not t < first:
        raise TimeAfterFirstExpiry(f"valuation time {t} is not before first date {first}",
                                   field="time")


# ---------------------------------------------------------------------------
# expiry-grid matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrecisionMatrix:
    """Tridiagonal inverse of the expiry-grid correlation matrix.

    ``entries`` already carries the sign adjustment ``s_i s_j a_ij``.
    """

    entries: np.ndarray
    t: float
    expiries: tuple[float, ...]

    @classmethod
    def from_expiries(cls, t: float, expiries: Sequence[float],
                      signs: Sequence[Sign] | None = None) -> "PrecisionMatrix":
        T = tuple(float(v) for v in expiries)
        _check_increasing(T)
        _check_time(t, T[0])
        n = len(T)
        a = np.zeros((n, n))
        tau = [Ti - t for Ti in T]
        a[0, 0] = 1.0
        for i in range(n):
            if i > 0:
                a[i, i] += tau[i] / (T[i] - T[i - 1])
            if i < n - 1:
                a[i, i] += tau[i] / (T[i + 1] - T[i])
                a[i, i + 1] = a[i + 1, i] = -math.sqrt(tau[i] * tau[i + 1]) / (T[i + 1] - T[i])
        if signs is not None:
            s = np.array([int(Sign.parse(v)) for v in signs], dtype=float)
            a = a * np.outer(s, s)
        return cls(a, float(t), T)

    def det(self) -> float:
        """Closed-form determinant: prod_k (T_k - t) / (T_k - T_{k-1}), k >= 1."""
        T, t = self.expiries, self.t
        out = 1.0
        for k in range(1, len(T)):
            out *= (T[k] - t) / (T[k] - T[k - 1])
        return out


def correlation_from_expiries(t: float, expiries: Sequence[float],
                              signs: Sequence[Sign] | None = None) -> CorrelationMatrix:
    """Correlations ``s_i s_j sqrt((T_min - t)/(T_max - t))`` of the expiry grid."""
    T = np.asarray(expiries, dtype=float)
    _check_increasing(T)
    _check_time(t, T[0])
    tau = T - t
    m = np.sqrt(np.minimum.outer(tau, tau) / np.maximum.outer(tau, tau))
    if signs is not None:
        s = np.array([int(Sign.parse(v)) for v in signs], dtype=float)
        if s.size != T.size:
            raise ValidationError("signs and expiries differ in length", field="signs")
        m = m * np.outer(s, s)
    return CorrelationMatrix(m)


# ---------------------------------------------------------------------------
# pricing
# ---------------------------------------------------------------------------

def d_values(x: float, t: float, spec: BinarySpec,
             params: MarketParams) -> tuple[np.ndarray, np.ndarray]:
    """The vectors d_i and d'_i = d_i - sigma sqrt(T_i - t).

    Dates closer than ``NEAR_EXPIRY`` get their limiting values: +-inf by the
    side of the exercise price the spot is on, 0 when exactly at it.
    """
    if not x > 0:
        raise ValidationError(f"spot must be positive, got {x}", field="spot")
    _check_time(t, spec.first_date)
    sig = params.sigma
    drift = params.r - params.q + 0.5 * sig * sig
    d = np.empty(spec.order)
    dp = np.empty(spec.order)
    for i, (xi, T) in enumerate(zip(spec.exercise_prices, spec.expiries)):
        tau = T - t
        if tau < NEAR_EXPIRY:
            lm = math.log(x / xi)
            d[i] = dp[i] = math.copysign(math.inf, lm) if lm != 0.0 else 0.0
            continue
        vol = sig * math.sqrt(tau)
        d[i] = (math.log(x / xi) + drift * tau) / vol
        dp[i] = d[i] - vol
    return d, dp


def _signed_prob(args: np.ndarray, t: float, spec: BinarySpec, tol: float | None) -> float:
    s = np.array([int(v) for v in spec.signs], dtype=float)
    if spec.order == 1:
        return mvn_cdf(s * args, CorrelationMatrix.identity(1), tol)
    corr = correlation_from_expiries(t, spec.expiries, spec.signs)
    return mvn_cdf(s * args, corr, tol)


def price_asset_binary(x: float, t: float, spec: BinarySpec, params: MarketParams,
                       tol: float | None = None) -> float:
    """x e^{-q(T_{n-1}-t)} N(s_0 d_0, ..., s_{n-1} d_{n-1}; signed grid correlation)."""
    d, _ = d_values(x, t, spec, params)
    return x * math.exp(-params.q * (spec.last_date - t)) * _signed_prob(d, t, spec, tol)


def price_bond_binary(x: float, t: float, spec: BinarySpec, params: MarketParams,
                      tol: float | None = None) -> float:
    _, dp = d_values(x, t, spec, params)
    return math.exp(-params.r * (spec.last_date - t)) * _signed_prob(dp, t, spec, tol)


def price_q_binary(x: float, t: float, spec: BinarySpec, params: MarketParams,
                   tol: float | None = None) -> float:
    """s_{n-1} [A - K B] with the same signs and exercise prices.

    Not clamped: a generalised Q binary whose exercise region admits negative
    payoffs has a negative price.
    """
    if spec.kind is not Kind.Q:
        raise ValidationError("price_q_binary needs a Q binary", field="kind")
    d, dp = d_values(x, t, spec, params)
    pa = _signed_prob(d, t, spec, tol)
    pb = _signed_prob(dp, t, spec, tol)
    tau = spec.last_date - t
    s_last = int(spec.signs[-1])
    return s_last * (x * math.exp(-params.q * tau) * pa
                     - spec.strike * math.exp(-params.r * tau) * pb)


def price_binary(x: float, t: float, spec: BinarySpec, params: MarketParams,
                 tol: float | None = None) -> float:
    """Dispatch on ``spec.kind``."""
    if spec.kind is Kind.ASSET:
        return price_asset_binary(x, t, spec, params, tol)
    if spec.kind is Kind.BOND:
        return price_bond_binary(x, t, spec, params, tol)
    return price_q_binary(x, t, spec, params, tol)
