"""Multiple-expiry exotics priced as static portfolios of higher-order binaries.

Each pricer builds the replication ``Portfolio`` for the interval containing
the valuation time and prices it with ``replication.price_portfolio``.  Exercise
boundaries are found backwards in time, because the continuation value at one
date is itself a portfolio that references the later boundaries.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .binaries import (MIN_DATE_GAP, MarketParams, Sign, asset_binary, bond_binary,
                       price_q_binary, q_binary)
from .errors import (ExtensionNeverOptimal, RootNotBracketed, TimeAfterFirstExpiry,
                     ValidationError)
from .numerics import bvn_cdf, norm_cdf
from .replication import Portfolio, PortfolioTerm, price_portfolio

UP, DOWN = Sign.UP, Sign.DOWN
ROOT_FTOL = 1e-10
_MAX_DOUBLINGS = 40


def _check_dates(dates: Sequence[float], name: str):
    for a, b in zip(dates[:-1], dates[1:]):
        if not b - a >= MIN_DATE_GAP:
            raise ValidationError(f"{name} must be strictly increasing", field=name)


def _positive(values: Sequence[float], name: str, allow_zero: bool = False):
    for v in values:
        ok = (v >= 0) if allow_zero else (v > 0)
        if not (ok and math.isfinite(v)):
            raise ValidationError(f"{name} must be {'nonnegative' if allow_zero else 'positive'},"
                                  f" got {v}", field=name)


@dataclass(frozen=True)
class BermudanPut:
    strike: float
    exercise_dates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "exercise_dates", tuple(float(v) for v in self.exercise_dates))
        _positive([self.strike], "strike")
        if not self.exercise_dates:
            raise ValidationError("at least one exercise date is required",
                                  field="exercise_dates")
        _check_dates(self.exercise_dates, "exercise_dates")


@dataclass(frozen=True)
class BermudanBoundaries:
    a: tuple[float, ...]


@dataclass(frozen=True)
class ExtendableCall:
    decision_dates: tuple[float, ...]
    strikes: tuple[float, ...]
    extension_premiums: tuple[float, ...]

    def __post_init__(self):
        for name in ("decision_dates", "strikes", "extension_premiums"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        n = len(self.decision_dates) - 1
        if n < 0:
            raise ValidationError("at least one date is required", field="decision_dates")
        if len(self.strikes) != n + 1:
            raise ValidationError("need one strike per decision date", field="strikes")
        if len(self.extension_premiums) != n:
            raise ValidationError("need one premium per extension right",
                                  field="extension_premiums")
        _check_dates(self.decision_dates, "decision_dates")
        _positive(self.strikes, "strikes")
        _positive(self.extension_premiums, "extension_premiums", allow_zero=True)

    @property
    def n_extensions(self) -> int:
        return len(self.decision_dates) - 1


@dataclass(frozen=True)
class ExtendableBoundaries:
    pairs: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class TwiceShoutCall:
    strike: float
    shout_dates: tuple[float, float]
    final_expiry: float

    def __post_init__(self):
        object.__setattr__(self, "shout_dates", tuple(float(v) for v in self.shout_dates))
        _positive([self.strike], "strike")
        if len(self.shout_dates) != 2:
            raise ValidationError("exactly two shout dates are supported", field="shout_dates")
        T0, T1 = self.shout_dates
        if not T0 > 0:
            raise ValidationError("shout dates must be positive", field="shout_dates")
        _check_dates((T0, T1, self.final_expiry), "shout_dates")


# ---------------------------------------------------------------------------
# root finding
# ---------------------------------------------------------------------------

def _solve(f: Callable[[float], float], lo: float, hi: float, flo: float, fhi: float,
           ftol: float) -> float:
    """Bisection safeguarded secant on a bracket with f(lo) f(hi) < 0."""
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    x = 0.5 * (lo + hi)
    for it in range(300):
        # secant inside the bracket, bisect when it stalls
        x = hi - fhi * (hi - lo) / (fhi - flo)
        if not lo < x < hi or it % 4 == 3:
            x = 0.5 * (lo + hi)
        fx = f(x)
        if abs(fx) <= ftol:
            return x
        if (fx < 0) == (flo < 0):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        if hi - lo <= 4e-16 * hi:
            break
    return x


# ---------------------------------------------------------------------------
# Bermudan put
# ---------------------------------------------------------------------------

def bermudan_tail_portfolio(c: BermudanPut, start: int, a: Sequence[float]) -> Portfolio:
    """Value on the interval whose next exercise date is ``c.exercise_dates[start]``.

    One Q binary per tail length: up-signs on the boundaries a_start..a_{k-1},
    a down sign at the last date, strike K throughout.  ``a`` holds one boundary
    per exercise date except the last.
    """
    dates = c.exercise_dates
    n = len(dates)
    K = c.strike
    terms = []
    for k in range(start, n):
        prices = list(a[start:k]) + [K if k == n - 1 else a[k]]
        signs = [UP] * (k - start) + [DOWN]
        terms.append(PortfolioTerm(1.0, q_binary(signs, prices, dates[start:k + 1], K)))
    return Portfolio(tuple(terms))


@functools.lru_cache(maxsize=256)
def bermudan_boundaries(c: BermudanPut, params: MarketParams,
                        tol: float | None = None) -> BermudanBoundaries:
    """Early-exercise boundaries a_1..a_{n-1}, solved backwards.

    Raises:
        RootNotBracketed: continuation minus intrinsic does not change sign on
            (1e-8 K, K), e.g. a put with r = 0 where early exercise never pays.
    """
    dates = c.exercise_dates
    n = len(dates)
    K = c.strike
    a = [0.0] * (n - 1)
    for i in range(n - 2, -1, -1):
        cont = bermudan_tail_portfolio(c, i + 1, a)
        ti = dates[i]

        def f(x, cont=cont, ti=ti):
            return price_portfolio(x, ti, cont, params, tol) - (K - x)

        lo, hi = 1e-8 * K, K * (1.0 - 1e-12)
        flo, fhi = f(lo), f(hi)
        if not (flo < 0.0 < fhi):
            raise RootNotBracketed(
                f"no exercise boundary at date {ti}: f({lo:g})={flo:.3e}, f({hi:g})={fhi:.3e}")
        a[i] = _solve(f, lo, hi, flo, fhi, ROOT_FTOL * K)
    return BermudanBoundaries(tuple(a))


def _interval_index(dates: Sequence[float], t: float) -> int:
    for i, d in enumerate(dates):
        if t < d:
            return i
    raise TimeAfterFirstExpiry(f"valuation time {t} is at or after the final date {dates[-1]}",
                               field="time")


def bermudan_portfolio(c: BermudanPut, t: float, params: MarketParams,
                       tol: float | None = None) -> Portfolio:
    start = _interval_index(c.exercise_dates, t)
    return bermudan_tail_portfolio(c, start, bermudan_boundaries(c, params, tol).a)


def price_bermudan_put(x: float, t: float, c: BermudanPut, params: MarketParams,
                       tol: float | None = None) -> float:
    """Price for any ``t`` before the final date.

    On an exercise date itself the returned value is the continuation value
    (the exercise decision at that date is taken as already made).
    """
    return price_portfolio(x, t, bermudan_portfolio(c, t, params, tol), params, tol)


# ---------------------------------------------------------------------------
# n-times extendable call
# ---------------------------------------------------------------------------

def _q_or_split(weight: float, signs, prices, dates, strike: float) -> list[PortfolioTerm]:
    # Q binaries need a positive strike; otherwise write s[A - K B] out
    if strike > 0:
        return [PortfolioTerm(weight, q_binary(signs, prices, dates, strike))]
    s = int(signs[-1])
    return [PortfolioTerm(s * weight, asset_binary(signs, prices, dates)),
            PortfolioTerm(-s * weight * strike, bond_binary(signs, prices, dates))]


def extendable_tail_portfolio(c: ExtendableCall, start: int,
                              pairs: Sequence[tuple[float, float]]) -> Portfolio:
    """Value on [T_{start-1}, T_start), given boundaries (a_k, b_k) for k >= start."""
    T, K, C = c.decision_dates, c.strikes, c.extension_premiums
    n = c.n_extensions
    terms: list[PortfolioTerm] = []

    def choices(lo, hi):
        # (boundary, sign) per level: a -> +1, b -> -1
        return itertools.product(*[((pairs[m][0], 1.0), (pairs[m][1], -1.0))
                                   for m in range(lo, hi)])

    for combo in choices(start, n):
        w = math.prod(s for _, s in combo)
        prices = [j for j, _ in combo] + [K[n]]
        terms += _q_or_split(w, [UP] * len(prices), prices, T[start:n + 1], K[n])
    for k in range(start, n):
        a_k, b_k = pairs[k]
        for combo in choices(start, k):
            w = math.prod(s for _, s in combo)
            head = [j for j, _ in combo]
            signs = [UP] * (len(head) + 1)
            terms += _q_or_split(w, signs, head + [b_k], T[start:k + 1], K[k] - C[k])
            if C[k] != 0.0:
                terms.append(PortfolioTerm(-C[k] * w,
                                           bond_binary(signs, head + [a_k], T[start:k + 1])))
    return Portfolio(tuple(terms))


@functools.lru_cache(maxsize=256)
def extendable_boundaries(c: ExtendableCall, params: MarketParams,
                          tol: float | None = None) -> ExtendableBoundaries:
    """Pairs (a_k, b_k): extend when a_k < x(T_k) < b_k, exercise above b_k.

    Raises:
        RootNotBracketed: a root cannot be bracketed (zero premium, or no
            finite b_k because extending beats exercising for every large spot).
        ExtensionNeverOptimal: a_k < K_k < b_k fails.
    """
    T, K, C = c.decision_dates, c.strikes, c.extension_premiums
    n = c.n_extensions
    pairs: list[tuple[float, float]] = [(0.0, 0.0)] * n
    for k in range(n - 1, -1, -1):
        cont = extendable_tail_portfolio(c, k + 1, pairs)
        Tk, Kk, Ck = T[k], K[k], C[k]

        def f(x, cont=cont, Tk=Tk, Ck=Ck):
            return price_portfolio(x, Tk, cont, params, tol) - Ck

        lo = 1e-8 * Kk
        flo = f(lo)
        if not flo < 0.0:
            raise RootNotBracketed(
                f"extension premium C_{k}={Ck} never exceeds the continuation value near 0")
        hi, fhi = _expand_upwards(f, 4.0 * Kk, lambda v: v > 0.0,
                                  f"no lower boundary a_{k} at date {Tk}")
        a_k = _solve(f, lo, hi, flo, fhi, ROOT_FTOL * Kk)
        if not a_k < Kk:
            raise ExtensionNeverOptimal(
                f"a_{k}={a_k:.6g} is not below strike K_{k}={Kk:g}; extension never chosen")

        def h(x, f=f, Kk=Kk):
            return f(x) - (x - Kk)

        hK = h(Kk)
        if not hK > 0.0:
            raise ExtensionNeverOptimal(f"extension at date {Tk} is never worth its premium")
        hi, hhi = _expand_upwards(h, 4.0 * Kk, lambda v: v < 0.0,
                                  f"no upper boundary b_{k} at date {Tk}: extending beats "
                                  "exercise for every large spot")
        b_k = _solve(h, Kk, hi, hK, hhi, ROOT_FTOL * Kk)
        if not b_k > Kk:
            raise ExtensionNeverOptimal(f"b_{k}={b_k:.6g} is not above strike K_{k}={Kk:g}")
        pairs[k] = (a_k, b_k)
    return ExtendableBoundaries(tuple(pairs))


def _expand_upwards(f, start: float, done, message: str) -> tuple[float, float]:
    x = start
    for _ in range(_MAX_DOUBLINGS):
        fx = f(x)
        if done(fx):
            return x, fx
        x *= 2.0
    raise RootNotBracketed(message)


def extendable_portfolio(c: ExtendableCall, t: float, params: MarketParams,
                         tol: float | None = None) -> Portfolio:
    start = _interval_index(c.decision_dates, t)
    pairs = extendable_boundaries(c, params, tol).pairs if c.n_extensions else ()
    return extendable_tail_portfolio(c, start, pairs)


def price_extendable_call(x: float, t: float, c: ExtendableCall, params: MarketParams,
                          tol: float | None = None) -> float:
    return price_portfolio(x, t, extendable_portfolio(c, t, params, tol), params, tol)


# ---------------------------------------------------------------------------
# fixed-time shout call
# ---------------------------------------------------------------------------

def _d_pm(tau: float, params: MarketParams) -> tuple[float, float]:
    sq = math.sqrt(tau)
    base = (params.r - params.q) / params.sigma
    half = 0.5 * params.sigma
    return (base + half) * sq, (base - half) * sq


def shout_g(T1: float, T2: float, params: MarketParams) -> float:
    """At-the-money forward-start call value per unit spot over (T1, T2)."""
    if not T1 < T2:
        raise ValidationError("shout_g needs T1 < T2", field="shout_dates")
    tau = T2 - T1
    dp, dm = _d_pm(tau, params)
    return math.exp(-params.q * tau) * norm_cdf(dp) - math.exp(-params.r * tau) * norm_cdf(dm)


def shout_g1(T0: float, T1: float, T2: float, params: MarketParams) -> float:
    """Value per unit spot at T0 of the (-, +) second-order Q binary struck at the T0 spot."""
    if not T0 < T1 < T2:
        raise ValidationError("shout_g1 needs T0 < T1 < T2", field="shout_dates")
    rho = -math.sqrt((T1 - T0) / (T2 - T0))
    dp01, dm01 = _d_pm(T1 - T0, params)
    dp02, dm02 = _d_pm(T2 - T0, params)
    tau = T2 - T0
    return (math.exp(-params.q * tau) * bvn_cdf(-dp01, dp02, rho)
            - math.exp(-params.r * tau) * bvn_cdf(-dm01, dm02, rho))


def shout_G(T0: float, T1: float, T2: float, params: MarketParams) -> float:
    """Slope of the T0 value in the spot when the first shout is in the money."""
    dp01, dm01 = _d_pm(T1 - T0, params)
    lead = math.exp(-params.r * (T2 - T1)) + shout_g(T1, T2, params)
    return (lead * math.exp(-params.q * (T1 - T0)) * norm_cdf(dp01)
            + math.exp(-params.r * (T2 - T0)) * norm_cdf(-dm01)
            + shout_g1(T0, T1, T2, params))


def once_shout_portfolio(strike: float, T1: float, T2: float,
                         params: MarketParams) -> Portfolio:
    """Fixed-time call with a single shout at T1 and expiry T2, valid for t < T1."""
    K = strike
    return Portfolio((
        PortfolioTerm(1.0, q_binary([DOWN, UP], [K, K], [T1, T2], K)),
        PortfolioTerm(math.exp(-params.r * (T2 - T1)), q_binary([UP], [K], [T1], K)),
        PortfolioTerm(shout_g(T1, T2, params), asset_binary([UP], [K], [T1])),
    ))


def price_once_shout_call(x: float, t: float, strike: float, T1: float, T2: float,
                          params: MarketParams, tol: float | None = None) -> float:
    return price_portfolio(x, t, once_shout_portfolio(strike, T1, T2, params), params, tol)


def twice_shout_portfolio(c: TwiceShoutCall, params: MarketParams) -> Portfolio:
    K = c.strike
    T0, T1 = c.shout_dates
    T2 = c.final_expiry
    return Portfolio((
        PortfolioTerm(1.0, q_binary([DOWN, DOWN, UP], [K, K, K], [T0, T1, T2], K)),
        PortfolioTerm(math.exp(-params.r * (T2 - T1)),
                      q_binary([DOWN, UP], [K, K], [T0, T1], K)),
        PortfolioTerm(shout_g(T1, T2, params), asset_binary([DOWN, UP], [K, K], [T0, T1])),
        PortfolioTerm(shout_G(T0, T1, T2, params), asset_binary([UP], [K], [T0])),
        PortfolioTerm(-K * math.exp(-params.r * (T2 - T0)), bond_binary([UP], [K], [T0])),
    ))


def price_twice_shout_call(x: float, t: float, c: TwiceShoutCall, params: MarketParams,
                           tol: float | None = None) -> float:
    """Price for t before the first shout date."""
    if not t < c.shout_dates[0]:
        raise TimeAfterFirstExpiry("twice-shout pricing needs t before the first shout date",
                                   field="time")
    return price_portfolio(x, t, twice_shout_portfolio(c, params), params, tol)


def european_call(x: float, t: float, strike: float, expiry: float, params: MarketParams) -> float:
    return price_q_binary(x, t, q_binary([UP], [strike], [expiry], strike), params)


def european_put(x: float, t: float, strike: float, expiry: float, params: MarketParams) -> float:
    return price_q_binary(x, t, q_binary([DOWN], [strike], [expiry], strike), params)
