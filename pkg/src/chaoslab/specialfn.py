"""Bessel functions, the isotropic covariance family and Gaussian CDF helpers.

``bessel_j`` uses three branches: the ascending power series (summed in
80-bit long double) up to ``SERIES_LIMIT``, the integral representation
up to ``BESSEL_CROSSOVER`` (through a cached piecewise Chebyshev
interpolant of it), and beyond that the Hankel large-argument
expansion truncated at its smallest term.  The middle branch avoids the
cancellation noise the series accumulates near the crossover, which would
otherwise stall adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import special as sps

from .errors import ConfigurationError, DomainError

BESSEL_CROSSOVER = 20.0
SERIES_LIMIT = 6.0

_LD = np.longdouble
_SERIES_TOL = 1e-22


def _as_float_array(r):
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("bessel argument must be finite")
    if np.any(arr < 0):
        raise DomainError("bessel argument must be nonnegative")
    return arr


def _normalized_series(nu: float, r: np.ndarray) -> np.ndarray:
    """Return sum_j (-r^2/4)^j Gamma(nu+1) / (j! Gamma(nu+j+1)).

    This equals Gamma(nu+1) (2/r)^nu J_nu(r); it is 1 at r = 0.
    """
    x = np.asarray(r, dtype=_LD)
    z = -(x * x) / 4
    term = np.ones_like(x)
    total = np.ones_like(x)
    nu_ld = _LD(nu)
    j = 0
    while True:
        j += 1
        term = term * z / (_LD(j) * (nu_ld + j))
        total = total + term
        if j > 4 and np.all(np.abs(term) <= _SERIES_TOL * np.maximum(np.abs(total), _LD(1e-30))):
            break
        if j > 400:
            break
    return total


def _hankel_pq(nu: float, r: np.ndarray):
    mu = 4.0 * nu * nu
    p = np.ones_like(r)
    q = np.zeros_like(r)
    coef = 1.0  # a_k(nu) without the r^-k factor
    prev = np.full_like(r, np.inf)
    k = 0
    while k < 200:
        k += 1
        coef *= (mu - (2 * k - 1) ** 2) / (k * 8.0)
        term = coef / r**k
        mag = np.abs(term)
        # stop once the asymptotic series starts to diverge for any point
        if np.any(mag > prev) or coef == 0.0:
            break
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2 == 0:
            p = p + sign * term
        else:
            q = q + sign * term
        prev = mag
        if np.all(mag < 1e-17):
            break
    return p, q


def _integral_rep(nu: float, r: np.ndarray) -> np.ndarray:
    """J_nu(r) from its integral representation; accurate for moderate r.

    J_nu(r) = (1/pi) int_0^pi cos(nu t - r sin t) dt
              - (sin(nu pi)/pi) int_0^inf exp(-r sinh s - nu s) ds
    """
    out = np.empty_like(r)
    if float(nu).is_integer():
        # periodic integrand: the trapezoid rule converges geometrically
        m = 64
        theta = (np.arange(m) + 0.5) * (2.0 * math.pi / m)
        sin_t = np.sin(theta)
        for i in range(0, r.size, 4096):
            rr = r[i:i + 4096, None]
            out[i:i + 4096] = np.cos(nu * theta - rr * sin_t).mean(axis=1)
        return out
    x, w = np.polynomial.legendre.leggauss(96)
    theta = 0.5 * math.pi * (x + 1.0)
    wt = 0.5 * w
    s_nodes, s_w = np.polynomial.legendre.leggauss(48)
    s_top = 4.0
    s = 0.5 * s_top * (s_nodes + 1.0)
    sw = 0.5 * s_top * s_w
    sin_t = np.sin(theta)
    sinh_s = np.sinh(s)
    for i in range(0, r.size, 4096):
        rr = r[i:i + 4096, None]
        first = np.cos(nu * theta - rr * sin_t) @ wt
        second = np.exp(-rr * sinh_s - nu * s) @ sw
        out[i:i + 4096] = first - math.sin(nu * math.pi) / math.pi * second
    return out


_MID_WIDTH = 0.5
_MID_DEGREE = 18


@lru_cache(maxsize=32)
def _mid_table(nu: float) -> np.ndarray:
    """Chebyshev coefficients of J_nu on panels of width 0.5 covering the middle branch."""
    n_pan = int(round((BESSEL_CROSSOVER - SERIES_LIMIT) / _MID_WIDTH))
    k = np.arange(_MID_DEGREE + 1)
    nodes = np.cos(np.pi * (k + 0.5) / (_MID_DEGREE + 1))
    lo = SERIES_LIMIT + _MID_WIDTH * np.arange(n_pan)
    x = lo[:, None] + 0.5 * _MID_WIDTH * (nodes[None, :] + 1.0)
    vals = _integral_rep(nu, x.ravel()).reshape(x.shape)
    # discrete Chebyshev transform at the Chebyshev-Gauss nodes
    T = np.cos(np.outer(k, np.arccos(nodes)))
    coef = (2.0 / (_MID_DEGREE + 1)) * vals @ T.T
    coef[:, 0] *= 0.5
    coef.setflags(write=False)
    return coef


def _mid_eval(nu: float, r: np.ndarray) -> np.ndarray:
    coef = _mid_table(float(nu))
    idx = np.minimum(((r - SERIES_LIMIT) / _MID_WIDTH).astype(int), coef.shape[0] - 1)
    u = 2.0 * (r - (SERIES_LIMIT + _MID_WIDTH * idx)) / _MID_WIDTH - 1.0
    c = coef[idx]
    b1 = np.zeros_like(r)
    b2 = np.zeros_like(r)
    for j in range(_MID_DEGREE, 0, -1):
        b1, b2 = 2.0 * u * b1 - b2 + c[:, j], b1
    return u * b1 - b2 + c[:, 0]


def bessel_j(p, r):
    """Bessel function of the first kind J_p(r) for p >= 0, r >= 0.

    Vectorised over ``r``.  Scalars in, float out.
    """
    if not math.isfinite(p) or p < 0:
        raise DomainError(f"order must be a finite nonnegative number, got {p}")
    scalar = np.ndim(r) == 0
    x = _as_float_array(r)
    out = np.empty(x.shape, dtype=float)
    small = x <= SERIES_LIMIT
    mid = (x > SERIES_LIMIT) & (x <= BESSEL_CROSSOVER)
    if np.any(mid):
        out[mid] = _mid_eval(float(p), x[mid])
    if np.any(small):
        xs = x[small]
        series = _normalized_series(p, xs)
        pref = np.power(xs.astype(_LD) / 2, _LD(p)) / _LD(math.gamma(p + 1.0))
        out[small] = (pref * series).astype(float)
    big = x > BESSEL_CROSSOVER
    if np.any(big):
        xb = x[big]
        P, Q = _hankel_pq(p, xb)
        omega = xb - (2.0 * p + 1.0) * math.pi / 4.0
        out[big] = np.sqrt(2.0 / (math.pi * xb)) * (P * np.cos(omega) - Q * np.sin(omega))
    return float(out) if scalar else out


def bessel_j_derivative(p, r):
    """d/dr J_p(r) via J_p' = (p/r) J_p - J_{p+1}."""
    x = _as_float_array(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(x > 0, p / np.where(x > 0, x, 1.0) * bessel_j(p, x), 0.0) - bessel_j(p + 1, x)
    if p == 1:
        val = np.where(x == 0, 0.5, val)
    elif 0 < p < 1:
        val = np.where(x == 0, np.inf, val)
    return float(val) if np.ndim(r) == 0 else val


def bessel_zeros(p: float, n: int) -> np.ndarray:
    """First ``n`` positive zeros of J_p (McMahon start, Newton polish)."""
    if n <= 0:
        return np.empty(0)
    if p == 0.5:
        return math.pi * np.arange(1, n + 1, dtype=float)
    k = np.arange(1, n + 1, dtype=float)
    beta = (k + p / 2.0 - 0.25) * math.pi
    mu = 4.0 * p * p
    z = beta - (mu - 1) / (8 * beta) - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * beta) ** 3)
    # McMahon is poor for the first zero of larger orders; bracket those.
    for _ in range(30):
        step = bessel_j(p, z) / bessel_j_derivative(p, z)
        z = z - step
        if np.all(np.abs(step) < 1e-14 * np.maximum(z, 1.0)):
            break
    if np.any(np.diff(z) <= 0) or np.any(z <= 0):
        raise ArithmeticError(f"zero search for J_{p} did not converge")
    return z


def gauss_cdf(x):
    """Standard Gaussian CDF."""
    return sps.ndtr(x)


def gauss_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def gauss_quantile(u):
    """Inverse standard Gaussian CDF on (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if not np.all((arr > 0) & (arr < 1)):
        raise DomainError("quantile level must lie strictly inside (0, 1)")
    out = sps.ndtri(arr)
    return float(out) if np.ndim(u) == 0 else out


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1} (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int, radius: float = 1.0) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * radius**d


# --------------------------------------------------------------------------
# covariance models


@dataclass(frozen=True)
class Cond5:
    """Power decay |c(r)| <= C1 r^-delta."""

    delta: float
    C1: Optional[float] = None


@dataclass(frozen=True)
class Cond6:
    """Local behaviour c(r) <= 1 - C2 r^alpha for r < eps."""

    alpha: float
    C2: Optional[float] = None
    eps: Optional[float] = None


_KINDS = ("berry", "exponential", "whittle_matern", "cauchy")


@dataclass(frozen=True)
class CovarianceModel:
    """Stationary isotropic covariance c(|x|) on R^d with c(0) = 1.

    Use the constructors ``berry``, ``exponential``, ``whittle_matern`` and
    ``cauchy`` rather than instantiating directly.
    """

    kind: str
    d: int
    alpha: Optional[float] = None  # exponential shape
    mu: Optional[float] = None  # Whittle-Matern smoothness
    beta: Optional[float] = None  # Cauchy tail exponent
    gamma: Optional[float] = None  # Cauchy shape
    cond5: Optional[Cond5] = field(default=None, compare=False)
    cond6: Optional[Cond6] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown covariance kind {self.kind!r}")
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ConfigurationError("dimension d must be a positive integer")
        if self.kind == "berry" and self.d < 2:
            raise ConfigurationError("Berry's model needs d >= 2")
        if self.kind == "exponential" and not (self.alpha is not None and 0 < self.alpha <= 2):
            raise ConfigurationError("exponential shape alpha must lie in (0, 2]")
        if self.kind == "whittle_matern" and not (self.mu is not None and self.mu > 0):
            raise ConfigurationError("Whittle-Matern smoothness mu must be > 0")
        if self.kind == "cauchy":
            if not (self.beta is not None and self.beta > 0):
                raise ConfigurationError("Cauchy tail exponent beta must be > 0")
            if not (self.gamma is not None and 0 < self.gamma <= 2):
                raise ConfigurationError("Cauchy shape gamma must lie in (0, 2]")

    # constructors -------------------------------------------------------
    @classmethod
    def berry(cls, d: int = 2) -> "CovarianceModel":
        return cls("berry", d, cond5=Cond5((d - 1) / 2.0), cond6=Cond6(2.0))

    @classmethod
    def exponential(cls, alpha: float = 1.0, d: int = 1) -> "CovarianceModel":
        return cls("exponential", d, alpha=alpha, cond5=Cond5(2.0 * d), cond6=Cond6(alpha))

    @classmethod
    def whittle_matern(cls, mu: float = 1.5, d: int = 1) -> "CovarianceModel":
        return cls("whittle_matern", d, mu=mu, cond5=Cond5(2.0 * d), cond6=Cond6(2.0 * min(mu, 1.0)))

    @classmethod
    def cauchy(cls, beta: float = 0.3, gamma: float = 2.0, d: int = 1) -> "CovarianceModel":
        return cls("cauchy", d, beta=beta, gamma=gamma, cond5=Cond5(beta), cond6=Cond6(gamma))

    # descriptors ----------------------------------------------------------
    @property
    def bessel_order(self) -> float:
        return self.d / 2.0 - 1.0

    @property
    def tail_exponent(self) -> float:
        """Power-law decay rate of |c|; ``inf`` for exponentially decaying models."""
        if self.kind == "berry":
            return (self.d - 1) / 2.0
        if self.kind == "cauchy":
            return float(self.beta)
        return math.inf

    @property
    def oscillates(self) -> bool:
        return self.kind == "berry"

    @property
    def scale(self) -> float:
        """Oscillation wavelength (Berry) or correlation length (others)."""
        return 2.0 * math.pi if self.kind == "berry" else 1.0

    def tag(self) -> str:
        if self.kind == "exponential":
            extra = f":alpha={self.alpha:g}"
        elif self.kind == "whittle_matern":
            extra = f":mu={self.mu:g}"
        elif self.kind == "cauchy":
            extra = f":beta={self.beta:g}:gamma={self.gamma:g}"
        else:
            extra = ""
        return f"{self.kind}{extra}:d={self.d}"

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "d": int(self.d)}
        for key in ("alpha", "mu", "beta", "gamma"):
            val = getattr(self, key)
            if val is not None:
                out[key] = float(val)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CovarianceModel":
        data = dict(data)
        kind = data.pop("kind")
        d = int(data.pop("d"))
        builders = {
            "berry": lambda: cls.berry(d),
            "exponential": lambda: cls.exponential(data.pop("alpha", 1.0), d),
            "whittle_matern": lambda: cls.whittle_matern(data.pop("mu", 1.5), d),
            "cauchy": lambda: cls.cauchy(data.pop("beta", 0.3), data.pop("gamma", 2.0), d),
        }
        if kind not in builders:
            raise ConfigurationError(f"unknown covariance kind {kind!r}")
        model = builders[kind]()
        if data:
            raise ConfigurationError(f"unexpected model keys {sorted(data)}")
        return model

    def with_conditions(self, cond5: Optional[Cond5] = None, cond6: Optional[Cond6] = None):
        return replace(self, cond5=cond5 or self.cond5, cond6=cond6 or self.cond6)

    def __call__(self, r):
        return cov_eval(self, r)


def cov_eval(model: CovarianceModel, r):
    """Evaluate the radial covariance c(r); vectorised over ``r``."""
    scalar = np.ndim(r) == 0
    x = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DomainError("covariance lag must be finite and nonnegative")
    kind = model.kind
    if kind == "berry":
        nu = model.bessel_order
        out = np.empty(x.shape)
        small = x <= SERIES_LIMIT
        if np.any(small):
            out[small] = _normalized_series(nu, x[small]).astype(float)
        if np.any(~small):
            xb = x[~small]
            out[~small] = math.gamma(nu + 1.0) * (2.0 / xb) ** nu * bessel_j(nu, xb)
    elif kind == "exponential":
        out = np.exp(-np.power(x, model.alpha))
    elif kind == "whittle_matern":
        m = model.mu
        with np.errstate(invalid="ignore", over="ignore"):
            out = 2.0 ** (1.0 - m) / math.gamma(m) * np.power(x, m) * sps.kv(m, x)
        out = np.where(x == 0, 1.0, out)
        out = np.where(np.isnan(out), 0.0, out)  # kv underflow at huge lags
    else:
        out = np.power(1.0 + np.power(x, model.gamma), -model.beta / model.gamma)
    return float(out) if scalar else out


# --------------------------------------------------------------------------
# condition checks


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    exponent: float
    constant: float
    radius: Optional[float]
    passed: bool
    worst_margin: float


def fit_cond5(model: CovarianceModel, r_fit: float = 100.0, n_fit: int = 20001,
              margin: float = 0.01) -> ConditionCheck:
    """Fit C1 on (0, r_fit] and verify |c| <= C1 r^-delta on a denser grid up to 2 r_fit."""
    rec = model.cond5 or Cond5(model.tail_exponent if math.isfinite(model.tail_exponent) else 2.0 * model.d)
    delta = rec.delta
    grid = np.linspace(r_fit / n_fit, r_fit, n_fit)
    if rec.C1 is None:
        C1 = float(np.max(np.abs(cov_eval(model, grid)) * grid**delta)) * (1.0 + margin)
    else:
        C1 = rec.C1
    test = np.linspace(0.5 * r_fit / n_fit, 2.0 * r_fit, 4 * n_fit + 3)
    lhs = np.abs(cov_eval(model, test))
    rhs = C1 * test ** (-delta)
    worst = float(np.max(lhs / rhs))
    return ConditionCheck("cond5", delta, C1, None, worst <= 1.0 + 1e-12, worst)


def fit_cond6(model: CovarianceModel, eps: Optional[float] = None, n_fit: int = 2001,
              margin: float = 0.01) -> ConditionCheck:
    """Fit C2 on (0, eps) and verify c(r) <= 1 - C2 r^alpha on a denser grid."""
    rec = model.cond6
    if rec is None:
        raise ConfigurationError("model carries no local-exponent record")
    alpha = rec.alpha
    eps = eps or rec.eps or (1.0 if model.kind == "berry" else 0.5)
    grid = np.linspace(eps / n_fit, eps * (1 - 1e-12), n_fit)
    if rec.C2 is None:
        C2 = float(np.min((1.0 - cov_eval(model, grid)) / grid**alpha)) * (1.0 - margin)
    else:
        C2 = rec.C2
    test = np.linspace(eps / (7 * n_fit), eps * (1 - 1e-12), 5 * n_fit + 1)
    slack = (1.0 - cov_eval(model, test)) - C2 * test**alpha
    worst = float(np.min(slack / test**alpha))
    return ConditionCheck("cond6", alpha, C2, eps, C2 > 0 and worst >= -1e-12, worst)


def check_unit_bound(model: CovarianceModel, r_max: float = 100.0, step: float = 0.01) -> bool:
    """|c(r)| <= 1 on a grid and c(0) == 1 exactly."""
    grid = np.arange(0.0, r_max + step / 2, step)
    vals = cov_eval(model, grid)
    return bool(vals[0] == 1.0 and np.all(np.abs(vals) <= 1.0 + 1e-15))
