"""Normal distribution functions, Cholesky factorisation and quadrature.

The multivariate normal CDF is the workhorse of every closed-form price in the
package.  Its evaluation is dispatched by dimension:

* dim 1: ``norm_cdf``
* dim 2: Drezner-Wesolowsky / Genz Gauss-Legendre bivariate routine
  (near machine accuracy)
* dim 3: one-dimensional adaptive quadrature of a conditional bivariate
* dim >= 4 with a Markov (tridiagonal precision) correlation structure, which is
  what every expiry grid produces: recursive conditioning on a middle
  coordinate, splitting the rest into two independent blocks
* anything else: Genz separation-of-variables with randomised lattice QMC
  (fixed internal seed, so results are deterministic)

Coordinates at ``+inf`` are marginalised out exactly and any ``-inf``
coordinate gives probability zero.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import ndtr, ndtri

from .errors import DimensionMismatch, NonConvergent, NotPositiveDefinite, ValidationError

DEFAULT_MVN_TOL = 1e-7
MVN_TOL_ENV = "HOB_MVN_TOL"

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_TWO_PI = 2.0 * math.pi

# Gauss-Legendre rules used by the bivariate routine (6, 12 and 20 points).
_GL = {n: leggauss(n) for n in (6, 12, 20)}

_PHI0 = 1.0 / math.sqrt(2.0 * math.pi)
_Z_FLOOR = -38.5

_QMC_SEED = 20130807
_QMC_SHIFTS = 12
_QMC_MIN_POINTS = 1 << 10
_QMC_MAX_POINTS = 1 << 20
_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
           73, 79, 83, 89, 97, 101, 103, 107, 109, 113)


def default_tol() -> float:
    """Default MVN tolerance, overridable through ``HOB_MVN_TOL``."""
    raw = os.environ.get(MVN_TOL_ENV)
    if not raw:
        return DEFAULT_MVN_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise ValidationError(f"{MVN_TOL_ENV}={raw!r} is not a number", field=MVN_TOL_ENV)
    if not tol > 0:
        raise ValidationError(f"{MVN_TOL_ENV} must be positive", field=MVN_TOL_ENV)
    return tol


# ---------------------------------------------------------------------------
# univariate
# ---------------------------------------------------------------------------

def norm_cdf(x: float) -> float:
    """Standard normal CDF; accepts +-inf."""
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def norm_ppf(p: float) -> float:
    return float(ndtri(p))


# ---------------------------------------------------------------------------
# correlation matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationMatrix:
    """Validated symmetric, unit-diagonal, positive definite matrix."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DimensionMismatch(f"correlation matrix must be square, got shape {m.shape}",
                                    field="corr")
        if not np.all(np.isfinite(m)):
            raise ValidationError("correlation matrix has non-finite entries", field="corr")
        if not np.allclose(m, m.T, rtol=0.0, atol=1e-14):
            raise ValidationError("correlation matrix is not symmetric", field="corr")
        if not np.allclose(np.diag(m), 1.0, rtol=0.0, atol=1e-14):
            raise ValidationError("correlation matrix needs a unit diagonal", field="corr")
        off = m[~np.eye(m.shape[0], dtype=bool)]
        if off.size and np.max(np.abs(off)) >= 1.0:
            raise NotPositiveDefinite("off-diagonal correlation outside (-1, 1)")
        m = 0.5 * (m + m.T)
        np.fill_diagonal(m, 1.0)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        # fails loudly on indefinite input
        object.__setattr__(self, "_chol", _cholesky_array(m))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "CorrelationMatrix":
        return cls(np.eye(dim))

    def permuted(self, order: Sequence[int]) -> "CorrelationMatrix":
        idx = np.asarray(order)
        return CorrelationMatrix(self.entries[np.ix_(idx, idx)])

    def __eq__(self, other):
        if not isinstance(other, CorrelationMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


def _cholesky_array(m: np.ndarray, pivot_tol: float = 1e-14) -> np.ndarray:
    n = m.shape[0]
    L = np.zeros_like(m, dtype=float)
    for j in range(n):
        s = m[j, j] - np.dot(L[j, :j], L[j, :j])
        if s <= pivot_tol:
            raise NotPositiveDefinite(
                f"pivot {j} is {s:.3e}; matrix is not positive definite "
                "(invalid expiry grid or valuation time too close to a date?)")
        L[j, j] = math.sqrt(s)
        if j + 1 < n:
            L[j + 1:, j] = (m[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def cholesky(m: CorrelationMatrix | np.ndarray, pivot_tol: float = 1e-14) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    Raises:
        NotPositiveDefinite: a pivot fell to ``pivot_tol`` or below.
    """
    arr = m.entries if isinstance(m, CorrelationMatrix) else np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {arr.shape}")
    return _cholesky_array(arr, pivot_tol)


# ---------------------------------------------------------------------------
# bivariate
# ---------------------------------------------------------------------------

def bvn_cdf(h: float, k: float, rho: float) -> float:
    """P(X < h, Y < k) for standard normals with correlation ``rho``.

    Genz's refinement of the Drezner-Wesolowsky method, accurate to about 1e-15.
    """
    return _bvnu(-h, -k, rho)


def _bvnu(dh: float, dk: float, r: float) -> float:
    # upper orthant probability P(X > dh, Y > dk)
    if dh == math.inf or dk == math.inf:
        return 0.0
    if dh == -math.inf:
        return 1.0 if dk == -math.inf else norm_cdf(-dk)
    if dk == -math.inf:
        return norm_cdf(-dh)
    if r == 0.0:
        return norm_cdf(-dh) * norm_cdf(-dk)

    ar = abs(r)
    x, w = _GL[6] if ar < 0.3 else _GL[12] if ar < 0.75 else _GL[20]
    h, k = dh, dk
    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * math.asin(r)
        for xi, wi in zip(x, w):
            sn = math.sin(asr * (1.0 + xi))
            bvn += wi * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / _TWO_PI + norm_cdf(-h) * norm_cdf(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if ar < 1.0:
            a_s = (1.0 - r) * (1.0 + r)
            a = math.sqrt(a_s)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 80.0
            asr = -0.5 * (bs / a_s + hk)
            if asr > -100.0:
                bvn = a * math.exp(asr) * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0
                                           + c * d * a_s * a_s)
            if hk > -100.0:
                b = math.sqrt(bs)
                sp = math.sqrt(_TWO_PI) * norm_cdf(-b / a)
                bvn -= math.exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            a *= 0.5
            acc = 0.0
            for xi, wi in zip(x, w):
                xs = (a * (1.0 + xi)) ** 2
                asr = -0.5 * (bs / xs + hk)
                if asr > -100.0:
                    sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
                    rs = math.sqrt(1.0 - xs)
                    ep = math.exp(-0.5 * hk * xs / (1.0 + rs) ** 2) / rs
                    acc += wi * math.exp(asr) * (sp - ep)
            bvn = (a * acc - bvn) / _TWO_PI
        if r > 0.0:
            bvn += norm_cdf(-max(h, k))
        elif h >= k:
            bvn = -bvn
        else:
            if h < 0.0:
                L = norm_cdf(k) - norm_cdf(h)
            else:
                L = norm_cdf(-h) - norm_cdf(-k)
            bvn = L - bvn
    return min(1.0, max(0.0, bvn))


# ---------------------------------------------------------------------------
# multivariate
# ---------------------------------------------------------------------------

def mvn_cdf(upper: Sequence[float], corr: CorrelationMatrix | np.ndarray,
            tol: float | None = None) -> float:
    """P(X_i < upper_i for all i) for a zero-mean normal vector with correlation ``corr``."""
    return mvn_cdf_with_error(upper, corr, tol)[0]


def mvn_cdf_with_error(upper: Sequence[float], corr: CorrelationMatrix | np.ndarray,
                       tol: float | None = None) -> tuple[float, float]:
    """As ``mvn_cdf`` but also returns the estimated absolute error."""
    if not isinstance(corr, CorrelationMatrix):
        corr = CorrelationMatrix(np.asarray(corr, dtype=float))
    b = np.asarray(upper, dtype=float).reshape(-1)
    if b.shape[0] != corr.dim:
        raise DimensionMismatch(
            f"upper has length {b.shape[0]} but correlation matrix has dim {corr.dim}",
            field="upper")
    if np.any(np.isnan(b)):
        raise ValidationError("upper limits contain NaN", field="upper")
    tol = default_tol() if tol is None else float(tol)
    if not tol > 0:
        raise ValidationError("tol must be positive", field="tol")
    return _mvn(b, corr.entries, tol)


def _mvn(b: np.ndarray, R: np.ndarray, tol: float) -> tuple[float, float]:
    if np.any(b == -np.inf):
        return 0.0, 0.0
    keep = np.flatnonzero(b != np.inf)
    if keep.size < b.size:
        b = b[keep]
        R = R[np.ix_(keep, keep)]
    d = b.size
    if d == 0:
        return 1.0, 0.0
    if d == 1:
        return norm_cdf(b[0]), 0.0
    if d == 2:
        return bvn_cdf(b[0], b[1], R[0, 1]), 1e-15
    if d == 3:
        return _trivariate(b, R, tol)
    if _is_markov(R):
        return _markov_split(b, R, tol)
    return _genz_qmc(b, R, tol)


def _is_markov(R: np.ndarray, atol: float = 1e-12) -> bool:
    """True when corr(i, k) = corr(i, j) corr(j, k) for all i < j < k (in index order)."""
    d = R.shape[0]
    chain = np.array([R[i, i + 1] for i in range(d - 1)])
    for i in range(d):
        prod = 1.0
        for k in range(i + 1, d):
            prod *= chain[k - 1]
            if abs(R[i, k] - prod) > atol:
                return False
    return True


def _conditional(b: np.ndarray, R: np.ndarray, pivot: int, rest: np.ndarray):
    """Scale factors and correlation of ``rest`` given coordinate ``pivot``."""
    rho = R[rest, pivot]
    scale = np.sqrt((1.0 - rho) * (1.0 + rho))
    sub = (R[np.ix_(rest, rest)] - np.outer(rho, rho)) / np.outer(scale, scale)
    sub = 0.5 * (sub + sub.T)
    np.fill_diagonal(sub, 1.0)
    return b[rest], rho, scale, sub


def _quad_normal(func: Callable[[float], float], hi: float, tol: float,
                 breaks: Iterable[float]) -> tuple[float, float]:
    # integrate func(z) phi(z) over z < hi; phi underflows below _Z_FLOOR
    if hi <= _Z_FLOOR:
        return 0.0, 0.0
    pts = sorted({p for p in breaks if _Z_FLOOR < p < hi})

    def g(z):
        return func(z) * _PHI0 * math.exp(-0.5 * z * z)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(g, _Z_FLOOR, hi, points=pts or None,
                                  epsabs=min(tol, 1e-13) * 0.1, epsrel=1e-13, limit=400)
    return val, err


def _trivariate(b: np.ndarray, R: np.ndarray, tol: float) -> tuple[float, float]:
    # condition on the coordinate that leaves the weakest partial correlation
    best = None
    for k in range(3):
        i, j = [m for m in range(3) if m != k]
        pc = (R[i, j] - R[i, k] * R[j, k]) / math.sqrt(
            (1.0 - R[i, k] ** 2) * (1.0 - R[j, k] ** 2))
        if best is None or abs(pc) < abs(best[0]):
            best = (pc, k, i, j)
    pc, k, i, j = best
    ri, rj = R[i, k], R[j, k]
    si, sj = math.sqrt((1 - ri) * (1 + ri)), math.sqrt((1 - rj) * (1 + rj))
    bi, bj, bk = b[i], b[j], b[k]

    if abs(pc) < 1e-15:
        def f(z):
            return norm_cdf((bi - ri * z) / si) * norm_cdf((bj - rj * z) / sj)
    else:
        def f(z):
            return bvn_cdf((bi - ri * z) / si, (bj - rj * z) / sj, pc)

    breaks = [bb / rr for bb, rr in ((bi, ri), (bj, rj)) if abs(rr) > 1e-3]
    return _quad_normal(f, bk, tol, breaks)


def _markov_split(b: np.ndarray, R: np.ndarray, tol: float) -> tuple[float, float]:
    d = b.size
    m = d // 2
    left = np.arange(0, m)
    right = np.arange(m + 1, d)
    bl, rl, sl, Rl = _conditional(b, R, m, left)
    br, rr, sr, Rr = _conditional(b, R, m, right)
    inner_tol = tol * 0.1
    errs = [0.0]

    def f(z):
        pl, el = _mvn((bl - rl * z) / sl, Rl, inner_tol)
        if pl == 0.0:
            return 0.0
        pr, er = _mvn((br - rr * z) / sr, Rr, inner_tol)
        errs[0] = max(errs[0], el + er)
        return pl * pr

    breaks = [bb / r for bb, r in zip(np.r_[bl, br], np.r_[rl, rr]) if abs(r) > 1e-3]
    val, err = _quad_normal(f, b[m], tol, breaks)
    return val, err + errs[0]


def _genz_qmc(b: np.ndarray, R: np.ndarray, tol: float) -> tuple[float, float]:
    """Separation-of-variables transform integrated by randomised lattice rules."""
    order = _prioritise(b, R)
    b = b[order]
    L = _cholesky_array(R[np.ix_(order, order)])
    d = b.size
    gen = np.sqrt(np.array(_PRIMES[: d - 1], dtype=float)) % 1.0
    rng = np.random.default_rng(_QMC_SEED)
    shifts = rng.random((_QMC_SHIFTS, d - 1))

    n = _QMC_MIN_POINTS
    while True:
        idx = np.arange(1, n + 1, dtype=float)[:, None]
        base = idx * gen
        means = np.empty(_QMC_SHIFTS)
        for s in range(_QMC_SHIFTS):
            w = np.abs(2.0 * ((base + shifts[s]) % 1.0) - 1.0)
            means[s] = _sov_integrand(w, b, L).mean()
        est = means.mean()
        err = 3.0 * means.std(ddof=1) / math.sqrt(_QMC_SHIFTS)
        if err <= tol or n >= _QMC_MAX_POINTS:
            return float(min(1.0, max(0.0, est))), float(err)
        n *= 2


def _sov_integrand(w: np.ndarray, b: np.ndarray, L: np.ndarray) -> np.ndarray:
    npts, d = w.shape[0], b.size
    y = np.zeros((npts, d - 1))
    e = np.full(npts, ndtr(b[0] / L[0, 0]))
    f = e.copy()
    for i in range(1, d):
        u = np.clip(w[:, i - 1] * e, 1e-300, 1.0 - 1e-16)
        y[:, i - 1] = ndtri(u)
        e = ndtr((b[i] - y[:, :i] @ L[i, :i]) / L[i, i])
        f *= e
    return f


def _prioritise(b: np.ndarray, R: np.ndarray) -> np.ndarray:
    # Genz-Bretz ordering: integrate the most constraining coordinate first
    d = b.size
    order = list(range(d))
    cov = R.copy()
    bb = b.copy()
    L = np.zeros((d, d))
    y = np.zeros(d)
    for i in range(d):
        best, best_p = i, math.inf
        for j in range(i, d):
            var = cov[j, j] - np.dot(L[j, :i], L[j, :i])
            if var <= 0:
                continue
            p = norm_cdf((bb[j] - np.dot(L[j, :i], y[:i])) / math.sqrt(var))
            if p < best_p:
                best, best_p = j, p
        if best != i:
            for arr in (bb,):
                arr[[i, best]] = arr[[best, i]]
            cov[[i, best], :] = cov[[best, i], :]
            cov[:, [i, best]] = cov[:, [best, i]]
            L[[i, best], :] = L[[best, i], :]
            order[i], order[best] = order[best], order[i]
        piv = math.sqrt(max(cov[i, i] - np.dot(L[i, :i], L[i, :i]), 1e-300))
        L[i, i] = piv
        for j in range(i + 1, d):
            L[j, i] = (cov[j, i] - np.dot(L[j, :i], L[i, :i])) / piv
        lim = (bb[i] - np.dot(L[i, :i], y[:i])) / piv
        # conditional mean of a standard normal truncated above at lim
        p = norm_cdf(lim)
        y[i] = -norm_pdf(lim) / p if p > 1e-300 else lim
    return np.asarray(order)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def gauss_quadrature(f: Callable[[float], float], accuracy: float,
                     breakpoints: Sequence[float] = ()) -> float:
    """Adaptive Gauss-Kronrod integral of ``f`` over (0, inf).

    The integral is taken in the log variable ``y = ln z`` and split at the
    (positive) ``breakpoints``, which should include discontinuities of ``f``
    and the location of any sharp peak.

    Raises:
        NonConvergent: the error estimate exceeds ``accuracy`` after the
            subdivision budget is spent.
    """
    if not accuracy > 0:
        raise ValidationError("accuracy must be positive", field="accuracy")
    ys = sorted({math.log(p) for p in breakpoints if p > 0 and math.isfinite(p)}) or [0.0]
    edges = [-math.inf, *ys, math.inf]

    def g(y):
        if y > 700.0:
            return 0.0
        z = math.exp(y)
        return f(z) * z if z > 0.0 else 0.0

    total, total_err = 0.0, 0.0
    share = accuracy / (len(edges) - 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(g, lo, hi, epsabs=share * 0.5, epsrel=0.0, limit=500)
        total += val
        total_err += err
    if not math.isfinite(total) or total_err > accuracy:
        raise NonConvergent(f"quadrature error estimate {total_err:.3e} exceeds {accuracy:.3e}")
    return total
