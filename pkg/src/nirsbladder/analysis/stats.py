"""Window means, pooled two-sample t-test and conditioned polynomial fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import DegenerateInputError, DomainError

_BETACF_EPS = 1e-10
_BETACF_TINY = 1e-300
_BETACF_MAXIT = 10_000


@dataclass(frozen=True)
class SampleSeries:
    """Time-ordered voltages of one optode under one condition."""

    t: np.ndarray
    v: np.ndarray
    optode_id: int = 0
    condition: str = ""

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise DomainError("t and v must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise DomainError("timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    def window(self, t0, t1):
        sel = (self.t >= t0) & (self.t <= t1)
        return self.v[sel]


def window_mean(series, t0, t1):
    """Mean of the samples with ``t0 <= t <= t1``."""
    vals = series.window(t0, t1)
    if vals.size == 0:
        raise DegenerateInputError(f"window [{t0:g}, {t1:g}] s contains no samples")
    return float(np.mean(vals))


# -- incomplete beta -----------------------------------------------------


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _BETACF_TINY if abs(d) < _BETACF_TINY else d
        c = 1.0 + aa / c
        c = _BETACF_TINY if abs(c) < _BETACF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _BETACF_TINY if abs(d) < _BETACF_TINY else d
        c = 1.0 + aa / c
        c = _BETACF_TINY if abs(c) < _BETACF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise DomainError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc_reg(a, b, x):
    """Regularised incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise DomainError("a and b must be > 0")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_tailed(t, df):
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise DomainError("df must be > 0")
    if t == 0:
        return 1.0
    if math.isinf(t):
        return 0.0
    return betainc_reg(0.5 * df, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: int
    p_value: float


def t_test_two_tailed(a, b):
    """Unpaired Student's t-test with pooled variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise DegenerateInputError(f"each group needs >= 2 samples, got {na} and {nb}")
    df = na + nb - 2
    ma, mb = float(np.mean(a)), float(np.mean(b))
    ss = float(np.sum((a - ma) ** 2)) + float(np.sum((b - mb) ** 2))
    se = math.sqrt(ss / df * (1.0 / na + 1.0 / nb))
    if se == 0.0:
        if ma == mb:
            return TTestResult(0.0, df, 1.0)
        raise DegenerateInputError("zero pooled variance with unequal means")
    t = (ma - mb) / se
    return TTestResult(t, df, t_sf_two_tailed(t, df))


# -- polynomial fitting --------------------------------------------------


def horner(coeffs, x):
    """Evaluate ascending-order ``coeffs`` at ``x`` by Horner's rule."""
    x = np.asarray(x, dtype=float)
    acc = np.zeros_like(x)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


@dataclass(frozen=True)
class PolyFit:
    """Least-squares polynomial, coefficients ascending in the original ``x``.

    ``center``/``half_width`` and ``scaled`` describe the same polynomial
    in ``u = (x - center) / half_width``, which evaluates more accurately.
    """

    order: int
    coefficients: tuple
    rms_residual: float
    center: float = 0.0
    half_width: float = 1.0
    scaled: tuple = field(default=(), repr=False)

    def __call__(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.half_width
        return horner(self.scaled, u)


def _unscale(b, c, h):
    """Coefficients of sum(b_k ((x - c)/h)^k) in powers of x."""
    n = len(b)
    out = np.zeros(n)
    for k in range(n):
        hk = b[k] / h ** k
        for j in range(k + 1):
            out[j] += hk * math.comb(k, j) * (-c) ** (k - j)
    return out


def polyfit(xs, ys, order=5):
    """Least-squares fit of degree ``order`` via Householder QR on a [-1, 1] basis."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("xs and ys must be 1-D arrays of equal length")
    if order < 0:
        raise DomainError("order must be >= 0")
    distinct = np.unique(x)
    if distinct.size < order + 1:
        dup = x.size - distinct.size
        raise DegenerateInputError(
            f"rank deficient: order {order} needs {order + 1} distinct x values, got "
            f"{distinct.size} ({dup} duplicate x values among {x.size} points)")
    lo, hi = float(distinct[0]), float(distinct[-1])
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo) if hi > lo else 1.0
    u = (x - c) / h
    V = u[:, None] ** np.arange(order + 1)
    Q, R = np.linalg.qr(V)
    diag = np.abs(np.diag(R))
    if diag.min() <= diag.max() * x.size * np.finfo(float).eps:
        raise DegenerateInputError(f"rank deficient: R diagonal {diag.tolist()}")
    b = solve_triangular(R, Q.T @ y)
    resid = y - horner(b, u)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return PolyFit(order, tuple(float(v) for v in _unscale(b, c, h)), rms, c, h,
                   tuple(float(v) for v in b))


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_stderr: float
    t_statistic: float
    degrees_of_freedom: int
    p_value: float


def linear_fit(xs, ys):
    """Ordinary least-squares line with a two-tailed t-test on the slope."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("xs and ys must be 1-D arrays of equal length")
    n = x.size
    if n < 3:
        raise DegenerateInputError(f"a slope test needs >= 3 points, got {n}")
    mx, my = float(np.mean(x)), float(np.mean(y))
    sxx = float(np.sum((x - mx) ** 2))
    if sxx == 0.0:
        raise DegenerateInputError("all x values are equal")
    slope = float(np.sum((x - mx) * (y - my))) / sxx
    intercept = my - slope * mx
    df = n - 2
    rss = float(np.sum((y - intercept - slope * x) ** 2))
    se = math.sqrt(rss / df / sxx)
    if se == 0.0:
        return LinearFit(slope, intercept, 0.0, math.copysign(math.inf, slope) if slope else 0.0,
                         df, 0.0 if slope else 1.0)
    t = slope / se
    return LinearFit(slope, intercept, se, t, df, t_sf_two_tailed(t, df))
