"""Reference formulas coded independently of the package under test."""
import math

import numpy as np
from scipy import integrate
from scipy.stats import norm


def bs_call(S, K, tau, r, q, sigma):
    d1 = (math.log(S / K) + (r - q + 0.5 * sigma ** 2) * tau) / (sigma * math.sqrt(tau))
    d2 = d1 - sigma * math.sqrt(tau)
    return S * math.exp(-q * tau) * norm.cdf(d1) - K * math.exp(-r * tau) * norm.cdf(d2)


def bs_put(S, K, tau, r, q, sigma):
    d1 = (math.log(S / K) + (r - q + 0.5 * sigma ** 2) * tau) / (sigma * math.sqrt(tau))
    d2 = d1 - sigma * math.sqrt(tau)
    return K * math.exp(-r * tau) * norm.cdf(-d2) - S * math.exp(-q * tau) * norm.cdf(-d1)


def bvn_dblquad(h, k, rho, lo=-12.0):
    """P(X < h, Y < k) by 2-D adaptive quadrature of the density."""
    c = 1.0 / (2 * math.pi * math.sqrt(1 - rho * rho))

    def dens(y, x):
        return c * math.exp(-(x * x - 2 * rho * x * y + y * y) / (2 * (1 - rho * rho)))

    val, _ = integrate.dblquad(dens, lo, h, lo, k, epsabs=1e-13, epsrel=1e-13)
    return val


def random_corr(rng, d):
    a = rng.normal(size=(d, d + 2))
    s = a @ a.T
    dd = np.sqrt(np.diag(s))
    return s / np.outer(dd, dd)


def pde_residual(price, x, t, params, first_date):
    """Relative Black-Scholes operator residual of ``price(x, t)`` by central differences.

    Returns |V_t + (r-q) x V_x + sigma^2/2 x^2 V_xx - r V| over the sum of the
    absolute term magnitudes.
    """
    h = 1e-3 * x
    dt = 1e-4 * (first_date - t)
    v = price(x, t)
    vu, vd = price(x + h, t), price(x - h, t)
    v_x = (vu - vd) / (2 * h)
    v_xx = (vu - 2 * v + vd) / (h * h)
    v_t = (price(x, t + dt) - price(x, t - dt)) / (2 * dt) if t - dt >= 0 else \
        (-3 * v + 4 * price(x, t + dt) - price(x, t + 2 * dt)) / (2 * dt)
    terms = (v_t, (params.r - params.q) * x * v_x, 0.5 * params.sigma ** 2 * x * x * v_xx,
             -params.r * v)
    scale = sum(abs(z) for z in terms)
    return abs(sum(terms)) / scale if scale > 0 else 0.0


def random_spec(rng, kind, n, x=100.0):
    """A random binary of order ``n`` with expiries in (0.1, 3) and prices near ``x``."""
    from hob.binaries import BinarySpec
    T = np.sort(rng.uniform(0.1, 3.0, size=n))
    while n > 1 and np.min(np.diff(T)) < 0.05:
        T = np.sort(rng.uniform(0.1, 3.0, size=n))
    xi = x * np.exp(rng.normal(0.0, 0.1, size=n))
    signs = rng.choice([1, -1], size=n)
    strike = float(x * math.exp(rng.normal(0.0, 0.2))) if kind == "q" else None
    return BinarySpec(kind, tuple(int(s) for s in signs), tuple(xi), tuple(T), strike)


def random_params(rng):
    from hob.binaries import MarketParams
    return MarketParams(float(rng.uniform(-0.01, 0.08)), float(rng.uniform(0.0, 0.05)),
                        float(rng.uniform(0.1, 0.5)))


def pde_point(rng, kind, n):
    """Random (spec, params, x, t) whose first-date volatility sigma sqrt(T_0 - t) is >= 0.1.

    Closer to the first date the fixed step h = 1e-3 x no longer resolves the
    curvature and the stencil's own truncation error exceeds 1e-4.
    """
    while True:
        spec = random_spec(rng, kind, n)
        p = random_params(rng)
        t = float(rng.uniform(0.0, spec.first_date))
        if p.sigma ** 2 * (spec.first_date - t) >= 0.01:
            return spec, p, float(rng.uniform(70, 140)), t
