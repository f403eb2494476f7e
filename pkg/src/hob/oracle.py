"""Independent numerical validators for the closed forms.

* ``mc_price_portfolio`` / ``mc_twice_shout``: exact lognormal Monte Carlo.
  Random numbers come from the counter-based Philox4x64 generator.  Paths are
  grouped in fixed batches of ``BATCH`` and batch ``j`` draws from the stream
  keyed by ``(seed, j)``, so an estimate does not depend on how batches are
  scheduled.  Normals are produced by inverse-CDF from 53-bit uniforms.
* ``quadrature_standard_option``: the lognormal-kernel integral for a
  European payoff.
* ``lattice_bermudan``: CRR binomial tree with exercise only at the given dates.
* ``fd_extendable``: Crank-Nicolson in log-spot with extension decisions
  applied at each decision date.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import ndtri

from .binaries import MarketParams
from .errors import TimeAfterFirstExpiry, ValidationError
from .exotics import BermudanPut, ExtendableCall, TwiceShoutCall
from .numerics import gauss_quadrature
from .replication import Portfolio, leg_last_date, leg_payoff

BATCH = 1 << 16
_TWO_M53 = 2.0 ** -53


@dataclass(frozen=True)
class McConfig:
    n_paths: int
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 2:
            raise ValidationError("n_paths must be an integer >= 2", field="n_paths")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must fit in 64 unsigned bits", field="seed")


@dataclass(frozen=True)
class GridConfig:
    n_space: int = 800
    n_time_per_interval: int = 400
    x_max_multiple: float = 4.0

    def __post_init__(self):
        if self.n_space < 50:
            raise ValidationError("n_space must be >= 50", field="n_space")
        if self.n_time_per_interval < 50:
            raise ValidationError("n_time_per_interval must be >= 50",
                                  field="n_time_per_interval")
        if not self.x_max_multiple >= 4:
            raise ValidationError("x_max_multiple must be >= 4", field="x_max_multiple")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def normal_stream(seed: int, batch: int, count: int) -> np.ndarray:
    """``count`` standard normals from the Philox stream keyed by (seed, batch)."""
    bitgen = np.random.Philox(key=int(seed) | (int(batch) << 64))
    raw = bitgen.random_raw(count)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
    return ndtri(u)


def _simulate(x: float, t: float, dates: Sequence[float], params: MarketParams,
              z: np.ndarray) -> dict[float, np.ndarray]:
    """Spots at ``dates`` from normals ``z`` of shape (paths, len(dates))."""
    sig = params.sigma
    mu = params.r - params.q - 0.5 * sig * sig
    logx = np.full(z.shape[0], math.log(x))
    out = {}
    prev = t
    for j, T in enumerate(dates):
        dt = T - prev
        logx = logx + mu * dt + sig * math.sqrt(dt) * z[:, j]
        out[T] = np.exp(logx)
        prev = T
    return out


class _Accumulator:
    # Chan et al. pairwise update of mean and sum of squared deviations
    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, values: np.ndarray):
        m = values.size
        if m == 0:
            return
        # shifted by the first value so a constant payoff has exactly zero spread
        shift = values.flat[0]
        dev = values - shift
        dmean = dev.mean()
        bmean = float(shift + dmean)
        bm2 = float(((dev - dmean) ** 2).sum())
        delta = bmean - self.mean
        tot = self.n + m
        self.mean += delta * m / tot
        self.m2 += bm2 + delta * delta * self.n * m / tot
        self.n = tot

    def std_error(self) -> float:
        return math.sqrt(self.m2 / (self.n - 1) / self.n) if self.n > 1 else 0.0


def _run_mc(x: float, t: float, dates: Sequence[float], params: MarketParams, cfg: McConfig,
            payoff: Callable[[dict], np.ndarray]) -> McEstimate:
    dates = list(dates)
    if not dates or not t < dates[0]:
        raise TimeAfterFirstExpiry("Monte Carlo needs every date after the valuation time",
                                   field="time")
    d = len(dates)
    # with antithetic sampling each draw yields a pair of paths
    draws = (cfg.n_paths + 1) // 2 if cfg.antithetic else cfg.n_paths
    acc = _Accumulator()
    for j, start in enumerate(range(0, draws, BATCH)):
        m = min(BATCH, draws - start)
        z = normal_stream(cfg.seed, j, m * d).reshape(m, d)
        v = payoff(_simulate(x, t, dates, params, z))
        if cfg.antithetic:
            v = 0.5 * (v + payoff(_simulate(x, t, dates, params, -z)))
        acc.add(np.broadcast_to(np.asarray(v, dtype=float), (m,)))
    n_paths = 2 * draws if cfg.antithetic else draws
    return McEstimate(acc.mean, acc.std_error(), n_paths)


def mc_price_portfolio(x: float, t: float, p: Portfolio, params: MarketParams,
                       cfg: McConfig) -> McEstimate:
    """Risk-neutral Monte Carlo value of a replication portfolio.

    Each leg is paid at its own last date and discounted from there.  The
    standard error is over independent draws (antithetic pairs count once).
    """
    if not p.terms:
        return McEstimate(0.0, 0.0, cfg.n_paths)
    dates = p.dates()
    disc = [term.weight * math.exp(-params.r * (leg_last_date(term.leg) - t))
            for term in p.terms]

    def payoff(path):
        total = 0.0
        for w, term in zip(disc, p.terms):
            total = total + w * leg_payoff(term.leg, path)
        return total

    return _run_mc(x, t, dates, params, cfg, payoff)


def mc_twice_shout(x: float, c: TwiceShoutCall, params: MarketParams, cfg: McConfig,
                   t: float = 0.0) -> McEstimate:
    """Monte Carlo of max(x0 - K, x1 - K, x2 - K, 0) paid at the final expiry."""
    T0, T1 = c.shout_dates
    T2 = c.final_expiry
    K = c.strike
    disc = math.exp(-params.r * (T2 - t))

    def payoff(path):
        best = np.maximum(np.maximum(path[T0], path[T1]), path[T2])
        return disc * np.maximum(best - K, 0.0)

    return _run_mc(x, t, (T0, T1, T2), params, cfg, payoff)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def quadrature_standard_option(x: float, t: float, T: float, payoff: Callable[[float], float],
                               params: MarketParams, accuracy: float = 1e-9,
                               breakpoints: Sequence[float] = ()) -> float:
    """Discounted lognormal-kernel integral of ``payoff`` over terminal spots.

    ``breakpoints`` should list payoff discontinuities or kinks.
    """
    if not t < T:
        raise TimeAfterFirstExpiry("quadrature needs t < T", field="time")
    tau = T - t
    sig = params.sigma
    s = sig * math.sqrt(tau)
    m = math.log(x) + (params.r - params.q - 0.5 * sig * sig) * tau

    def integrand(z):
        w = (math.log(z) - m) / s
        if abs(w) > 40.0:
            return 0.0
        return math.exp(-0.5 * w * w) / (z * s * math.sqrt(2.0 * math.pi)) * payoff(z)

    centre = [math.exp(m + k * s) for k in (-6, -3, -1, 0, 1, 3, 6)]
    disc = math.exp(-params.r * tau)
    return disc * gauss_quadrature(integrand, accuracy / max(disc, 1e-300),
                                   breakpoints=[*centre, *breakpoints])


# ---------------------------------------------------------------------------
# binomial lattice
# ---------------------------------------------------------------------------

def lattice_bermudan(x: float, c: BermudanPut, params: MarketParams, steps: int,
                     t: float = 0.0) -> float:
    """CRR tree with the put's early exercise allowed only at its dates.

    Dates are snapped to the nearest time level.
    """
    if steps < 100:
        raise ValidationError("steps must be >= 100", field="steps")
    dates = c.exercise_dates
    if not t < dates[-1]:
        raise TimeAfterFirstExpiry("lattice needs t before the final date", field="time")
    K = c.strike
    dt = (dates[-1] - t) / steps
    u = math.exp(params.sigma * math.sqrt(dt))
    d = 1.0 / u
    p = (math.exp((params.r - params.q) * dt) - d) / (u - d)
    disc = math.exp(-params.r * dt)
    ex_levels = {int(round((T - t) / dt)) for T in dates if T > t}

    j = np.arange(steps + 1)
    spots = x * u ** (2.0 * j - steps)
    v = np.maximum(K - spots, 0.0)
    for level in range(steps - 1, -1, -1):
        v = disc * (p * v[1:] + (1.0 - p) * v[:-1])
        if level in ex_levels and level > 0:
            jj = np.arange(level + 1)
            v = np.maximum(v, K - x * u ** (2.0 * jj - level))
    return float(v[0])


def lattice_bermudan_richardson(x: float, c: BermudanPut, params: MarketParams, steps: int,
                                t: float = 0.0) -> tuple[float, float]:
    """Two-level Richardson extrapolation from ``steps // 2`` and ``steps``.

    Returns (extrapolated price, |P(steps) - P(steps // 2)| as error estimate).
    """
    fine = lattice_bermudan(x, c, params, steps, t)
    coarse = lattice_bermudan(x, c, params, steps // 2, t)
    return 2.0 * fine - coarse, abs(fine - coarse)


# ---------------------------------------------------------------------------
# Crank-Nicolson
# ---------------------------------------------------------------------------

_RANNACHER_STEPS = 4


def fd_extendable(x: float, c: ExtendableCall, params: MarketParams, cfg: GridConfig = GridConfig(),
                  t: float = 0.0) -> float:
    """Crank-Nicolson price of an extendable call.

    Backward from the final call payoff; at each decision date the value is
    replaced by max(continuation - premium, intrinsic).  Each interval starts
    with a few implicit Euler half steps to damp the kink.
    """
    T, K, C = c.decision_dates, c.strikes, c.extension_premiums
    if not t < T[-1]:
        raise TimeAfterFirstExpiry("grid needs t before the final date", field="time")
    m = cfg.x_max_multiple
    y_lo = math.log(min(x, min(K)) / m)
    y_hi = math.log(max(x, max(K)) * m)
    y = np.linspace(y_lo, y_hi, cfg.n_space)
    s = np.exp(y)
    h = y[1] - y[0]
    sig2 = params.sigma ** 2
    nu = params.r - params.q - 0.5 * sig2
    r = params.r
    # L V = a V_{i-1} + b V_i + c V_{i+1}
    lo_c = 0.5 * sig2 / h ** 2 - 0.5 * nu / h
    mid_c = -sig2 / h ** 2 - r
    up_c = 0.5 * sig2 / h ** 2 + 0.5 * nu / h

    def far_field(v):
        # payoff linear at s_max, valued as a forward
        lin = s[-1] - v[-1]
        return lambda tau: s[-1] * math.exp(-params.q * tau) - lin * math.exp(-r * tau)

    v = np.maximum(s - K[-1], 0.0)
    current = T[-1]
    for k in range(c.n_extensions - 1, -1, -1):
        if not T[k] > t:
            break
        v = _cn_interval(v, current - T[k], cfg.n_time_per_interval, lo_c, mid_c, up_c,
                         far_field(v))
        v = np.maximum(v - C[k], np.maximum(s - K[k], 0.0))
        current = T[k]
    v = _cn_interval(v, current - t, cfg.n_time_per_interval, lo_c, mid_c, up_c, far_field(v))
    return float(np.interp(math.log(x), y, v))


def _cn_interval(v: np.ndarray, length: float, n_steps: int, a: float, b: float, c: float,
                 upper: Callable[[float], float]) -> np.ndarray:
    n = v.size
    inner = n - 2
    dt = length / n_steps

    def banded(theta_dt):
        ab = np.zeros((3, inner))
        ab[0, 1:] = -theta_dt * c
        ab[1, :] = 1.0 - theta_dt * b
        ab[2, :-1] = -theta_dt * a
        return ab

    def step(v, tau_next, k_dt, theta):
        # theta = 1 implicit Euler, 0.5 Crank-Nicolson
        rhs = v[1:-1].copy()
        if theta < 1.0:
            ex = (1.0 - theta) * k_dt
            rhs += ex * (a * v[:-2] + b * v[1:-1] + c * v[2:])
        new = np.empty_like(v)
        new[0] = 0.0
        new[-1] = upper(tau_next)
        rhs[0] += theta * k_dt * a * new[0]
        rhs[-1] += theta * k_dt * c * new[-1]
        new[1:-1] = solve_banded((1, 1), banded(theta * k_dt), rhs)
        return new

    tau = 0.0
    for _ in range(_RANNACHER_STEPS):
        tau += 0.5 * dt
        v = step(v, tau, 0.5 * dt, 1.0)
    for _ in range(n_steps - _RANNACHER_STEPS // 2):
        tau += dt
        v = step(v, tau, dt, 0.5)
    return v
