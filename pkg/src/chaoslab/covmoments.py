"""Radial integrals of covariance powers, weight curves and ball covariograms."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import gammaln

from ._quad import integrate_panels
from .errors import ConfigurationError, DivergenceError
from .hermite import HermiteExpansion, hermite_rank
from .specialfn import CovarianceModel, ball_volume, bessel_zeros, cov_eval, sphere_area


class ImproperLimit:
    """Upper limit of an improper radial integral.

    Carries the convergence test instead of standing in for a number, so a
    divergent request fails with a message rather than returning garbage.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __str__(self):
        return "inf"

    @staticmethod
    def check(model: CovarianceModel, q: int, signed: bool) -> None:
        d = model.d
        delta = model.tail_exponent
        if math.isinf(delta):
            return
        if model.oscillates and signed and q % 2 == 1:
            # alternating annuli: terms must shrink, i.e. envelope exponent negative
            if q * delta <= d - 1:
                raise DivergenceError(
                    f"oscillatory moment diverges: q*delta = {q * delta:g} <= d-1 = {d - 1}; "
                    "annulus contributions do not decay")
            return
        if q * delta <= d:
            raise DivergenceError(
                f"absolute moment diverges: q*delta = {q * delta:g} <= d = {d}, "
                "so |C|^q is not integrable at infinity")


INFINITE = ImproperLimit()
RMax = Union[float, ImproperLimit]


@dataclass(frozen=True)
class MomentValue:
    value: float
    err: float


@dataclass(frozen=True)
class MomentEntry:
    q: int
    r_max: RMax
    signed: bool
    value: float
    err: float


@dataclass
class MomentTable:
    model: CovarianceModel
    entries: list = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.model.d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["d", "model", "q", "r_max", "signed", "value", "err"])
        for e in self.entries:
            w.writerow([self.d, self.model.tag(), e.q, str(e.r_max), str(e.signed).lower(),
                        repr(e.value), repr(e.err)])
        return buf.getvalue()


# --------------------------------------------------------------------------
# radial integrands


def _radial_integrand(model: CovarianceModel, q: int, signed: bool, weight=None):
    d = model.d

    def f(r):
        c = cov_eval(model, r)
        v = c**q if signed else np.abs(c) ** q
        if d > 1:
            v = v * r ** (d - 1)
        if weight is not None:
            v = v * weight(r)
        return v

    return f


def _oscillation_edges(model: CovarianceModel, r_max: float, q: int) -> np.ndarray:
    """Panel edges: zeros of the Bessel factor for Berry, geometric otherwise."""
    if model.oscillates:
        nu = model.bessel_order
        n = int(r_max / math.pi) + 2
        z = bessel_zeros(nu, n)
        z = z[z < r_max]
        head = [0.0]
        first = z[0] if z.size else r_max
        # c^q is Gaussian-like near 0 with width ~ q^(-1/2)
        w = 2.0 / math.sqrt(q)
        while w < first:
            head.append(w)
            w *= 2.0
        return np.concatenate([head, z, [r_max]])
    width = 1.0 / math.sqrt(max(q, 1))
    edges = [0.0]
    r = min(width, r_max)
    while r < r_max:
        edges.append(r)
        r *= 2.0
    edges.append(r_max)
    return np.asarray(edges)


def _envelope(model: CovarianceModel):
    """Berry large-r amplitude A with |b_d(r)| ~ A r^(-(d-1)/2) |cos(.)|."""
    nu = model.bessel_order
    return math.exp((nu) * math.log(2.0) + gammaln(nu + 1.0)) * math.sqrt(2.0 / math.pi)


def _mean_abs_cos_power(q: int) -> float:
    """Average of |cos|^q over a period."""
    return math.exp(gammaln((q + 1) / 2.0) - gammaln(q / 2.0 + 1.0)) / math.sqrt(math.pi)


def _berry_tail(model: CovarianceModel, q: int, R: float) -> float:
    """Leading-order contribution of r > R to the radial integral of |b_d|^q r^(d-1)."""
    d = model.d
    p = q * (d - 1) / 2.0 - d
    return _envelope(model) ** q * _mean_abs_cos_power(q) * R ** (-p) / p


def _repeated_average(partial: np.ndarray, levels: int):
    s = np.asarray(partial, dtype=float)
    prev = s[-1]
    for _ in range(levels):
        if s.size < 2:
            break
        prev = s[-1]
        s = 0.5 * (s[1:] + s[:-1])
    return float(s[-1]), abs(float(s[-1]) - float(prev))


def _annulus_integrals(model, q, signed, zeros, rtol):
    res = integrate_panels(_radial_integrand(model, q, signed), zeros, rtol=rtol, per_panel=True)
    return np.asarray(res.panel_values), res.err


def _berry_infinite(model: CovarianceModel, q: int, signed: bool, rtol: float,
                    n_zeros: int) -> MomentValue:
    nu = model.bessel_order
    zeros = bessel_zeros(nu, n_zeros)
    head = integrate_panels(_radial_integrand(model, q, signed),
                            _oscillation_edges(model, float(zeros[0]), q), rtol=rtol)
    ann, ann_err = _annulus_integrals(model, q, signed, zeros, rtol)
    if signed and q % 2 == 1:
        partial = head.value + np.cumsum(ann)
        value, acc_err = _repeated_average(partial[-24:], 12)
        return MomentValue(value, acc_err + ann_err + head.err)
    body = head.value + math.fsum(ann)
    # Richardson-style check: tail estimate from the last zero vs. one a third earlier
    R2 = float(zeros[-1])
    k = (2 * n_zeros) // 3
    R1 = float(zeros[k - 1])
    tail2 = _berry_tail(model, q, R2)
    tail1 = _berry_tail(model, q, R1)
    alt = head.value + math.fsum(ann[: k - 1]) + tail1
    value = body + tail2
    return MomentValue(value, abs(value - alt) + ann_err + head.err)


def _monotone_infinite(model: CovarianceModel, q: int, signed: bool, rtol: float) -> MomentValue:
    d = model.d
    f = _radial_integrand(model, q, signed)
    delta = model.tail_exponent
    if math.isinf(delta):
        # super-exponential or exponential decay: cut where c^q r^(d-1) < 1e-300
        R = 1.0
        while True:
            c = float(cov_eval(model, R))
            if c <= 0.0 or q * math.log(c) + (d - 1) * math.log(R) < -700.0:
                break
            R *= 1.5
        res = integrate_panels(f, _oscillation_edges(model, R, q), rtol=rtol)
        return MomentValue(res.value, res.err)
    p = q * delta - d
    R = 10.0
    near = integrate_panels(f, _oscillation_edges(model, R, q), rtol=rtol)

    def g(v):
        # r = R v^(-1/p) maps (0, 1] onto [R, inf); leading order integrand is flat
        v = np.maximum(v, 1e-300)
        r = R * v ** (-1.0 / p)
        drdv = (R / p) * v ** (-1.0 / p - 1.0)
        return f(np.minimum(r, 1e300)) * drdv

    tail = integrate_panels(g, [0.0, 0.25, 0.5, 1.0], rtol=rtol)
    return MomentValue(near.value + tail.value, near.err + tail.err)


def cov_moment(model: CovarianceModel, q: int, r_max: RMax = INFINITE, signed: bool = True,
               rtol: float = 1e-11, n_zeros: int = 240) -> MomentValue:
    """Integral of C(z)^q (or |C(z)|^q) over the ball of radius ``r_max`` in R^d.

    Computed as surface(S^{d-1}) * int_0^{r_max} c(r)^q r^{d-1} dr.  Improper
    integrals of oscillating covariances sum annuli between consecutive
    zeros, then either add the analytic envelope tail (nonnegative
    integrands) or apply repeated averaging to the alternating partial sums.
    """
    if q < 1 or int(q) != q:
        raise ConfigurationError("moment power q must be a positive integer")
    q = int(q)
    if not signed or q % 2 == 0:
        signed = signed and q % 2 == 1
    S = sphere_area(model.d)
    if isinstance(r_max, ImproperLimit):
        r_max.check(model, q, signed)
        if model.oscillates:
            mv = _berry_infinite(model, q, signed, rtol, n_zeros)
        else:
            mv = _monotone_infinite(model, q, signed, rtol)
    else:
        r_max = float(r_max)
        if not r_max >= 0.0 or math.isinf(r_max):
            raise ConfigurationError("r_max must be finite and nonnegative; use INFINITE")
        if r_max == 0.0:
            return MomentValue(0.0, 0.0)
        res = integrate_panels(_radial_integrand(model, q, signed),
                               _oscillation_edges(model, r_max, q), rtol=rtol)
        mv = MomentValue(res.value, res.err)
    return MomentValue(S * mv.value, S * mv.err)


def parse_q_range(spec: Union[str, Sequence[int]]) -> list:
    """``"8..128"`` or ``"2,4,8"`` or a sequence of integers."""
    if isinstance(spec, str):
        if ".." in spec:
            lo, hi = spec.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in spec.split(",") if v.strip()]
    return [int(v) for v in spec]


def moment_table(model: CovarianceModel, qs: Iterable[int], r_max: RMax = INFINITE,
                 signed: bool = True, **kw) -> MomentTable:
    table = MomentTable(model)
    for q in qs:
        mv = cov_moment(model, q, r_max, signed, **kw)
        table.entries.append(MomentEntry(int(q), r_max, signed, mv.value, mv.err))
    return table


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float
    table: MomentTable = field(repr=False, compare=False)

    @property
    def limit_constant(self) -> float:
        """q * moment at the largest q, an estimate of lim q * int C^q."""
        e = self.table.entries[-1]
        return e.q * e.value


def moment_slope(model: CovarianceModel, q_range, signed: bool = True,
                 r_max: RMax = INFINITE, **kw) -> SlopeFit:
    """Unweighted least-squares fit of log(moment) against log(q)."""
    qs = parse_q_range(q_range)
    if len(qs) < 2:
        raise ConfigurationError("slope fit needs at least two powers")
    table = moment_table(model, qs, r_max, signed, **kw)
    vals = np.array([e.value for e in table.entries])
    if np.any(vals <= 0):
        raise DivergenceError("nonpositive moment value; log-log fit undefined")
    x = np.log(np.asarray(qs, dtype=float))
    y = np.log(vals)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return SlopeFit(float(slope), float(icpt), resid, table)


# --------------------------------------------------------------------------
# weight curve


@dataclass(frozen=True)
class WeightSample:
    r: RMax
    w: float
    err: float


@dataclass(frozen=True)
class WeightCurve:
    model: CovarianceModel
    expansion: HermiteExpansion
    M: int
    samples: tuple
    limit_flag: str


def weight_w(model: CovarianceModel, expansion: HermiteExpansion, M: int,
             r_grid: Sequence[RMax], growth_tol: float = 0.02) -> WeightCurve:
    """w_{r,M} = sum_{q=R..M} q! a_q^2 int_{|z|<=r} C^q(z) dz on a radius grid."""
    R = hermite_rank(expansion, expansion.rank_tol)[0]
    if math.isinf(R) or M < R:
        raise ConfigurationError(f"truncation M={M} below the Hermite rank {R}")
    samples = []
    for r in r_grid:
        total, err = [], 0.0
        for q in range(int(R), min(M, expansion.Q) + 1):
            wq = expansion.chaos_weight(q)
            if wq == 0.0:
                continue
            mv = cov_moment(model, q, r, signed=True)
            total.append(wq * mv.value)
            err += wq * mv.err
        samples.append(WeightSample(r, math.fsum(total), err))
    flag = "undetermined"
    if len(samples) >= 2:
        a, b = samples[-2], samples[-1]
        diff = abs(b.w - a.w)
        if isinstance(b.r, ImproperLimit) or diff <= 3.0 * (a.err + b.err) + 1e-9 * abs(b.w):
            flag = "finite"
        elif diff > growth_tol * max(abs(a.w), 1e-300):
            flag = "divergent"
    elif samples and isinstance(samples[0].r, ImproperLimit):
        flag = "finite"
    return WeightCurve(model, expansion, M, tuple(samples), flag)


# --------------------------------------------------------------------------
# covariograms


def _cap_sections(d: int, a: float, b: float, z: float) -> float:
    """Intersection volume as a 1-D integral of (d-1)-ball cross-sections."""
    lo, hi = max(-a, z - b), min(a, z + b)
    if hi <= lo:
        return 0.0
    xs = (z * z + a * a - b * b) / (2.0 * z)
    unit = ball_volume(d - 1, 1.0)

    def f(x):
        ra = np.maximum(a * a - x * x, 0.0)
        rb = np.maximum(b * b - (x - z) ** 2, 0.0)
        return unit * np.minimum(ra, rb) ** ((d - 1) / 2.0)

    edges = sorted({lo, hi, *([xs] if lo < xs < hi else [])})
    return integrate_panels(f, edges, rtol=1e-12).value


def covariogram(d: int, a: float, b: float, z: float) -> float:
    """Volume of B(0, a) intersected with B(z e_1, b) in R^d."""
    if a <= 0 or b <= 0 or z < 0:
        raise ConfigurationError("covariogram needs a, b > 0 and z >= 0")
    if z >= a + b:
        return 0.0
    if z <= abs(a - b):
        return ball_volume(d, min(a, b))
    if d == 1:
        return min(a, z + b) - max(-a, z - b)
    if d == 2:
        # split the cosine ratios so subnormal z does not underflow the denominator
        alpha = math.acos(min(1.0, max(-1.0, 0.5 * z / a + 0.5 * (a - b) * (a + b) / a / z)))
        beta = math.acos(min(1.0, max(-1.0, 0.5 * z / b + 0.5 * (b - a) * (a + b) / b / z)))
        kite = 0.5 * math.sqrt(max((-z + a + b) * (z + a - b) * (z - a + b) * (z + a + b), 0.0))
        return a * a * alpha + b * b * beta - kite
    if d == 3:
        # (a-b)^2/z < |a-b| here, so this form stays accurate for tiny z
        return math.pi * (a + b - z) ** 2 * (z + 2 * (a + b) - 3 * (a - b) ** 2 / z) / 12.0
    return _cap_sections(d, a, b, z)


def covariogram_array(d: int, a: float, b: float, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if d in (1, 2, 3):
        out = np.zeros_like(z)
        inside = z <= abs(a - b)
        out[inside] = ball_volume(d, min(a, b))
        lens = (~inside) & (z < a + b)
        zz = z[lens]
        if d == 1:
            out[lens] = np.minimum(a, zz + b) - np.maximum(-a, zz - b)
        elif d == 2:
            al = np.arccos(np.clip(0.5 * zz / a + 0.5 * (a - b) * (a + b) / a / zz, -1, 1))
            be = np.arccos(np.clip(0.5 * zz / b + 0.5 * (b - a) * (a + b) / b / zz, -1, 1))
            kite = 0.5 * np.sqrt(np.maximum((-zz + a + b) * (zz + a - b) * (zz - a + b) * (zz + a + b), 0))
            out[lens] = a * a * al + b * b * be - kite
        else:
            out[lens] = np.pi * (a + b - zz) ** 2 * (zz + 2 * (a + b) - 3 * (a - b) ** 2 / zz) / 12.0
        return out
    return np.array([covariogram(d, a, b, float(v)) for v in z.ravel()]).reshape(z.shape)


def lipschitz_constant(d: int, a: float, b: float) -> float:
    """c_{d-1} min(a,b)^{d-1}: volume of the largest possible (d-1)-dimensional section."""
    return ball_volume(d - 1, min(a, b)) if d > 1 else 1.0


# --------------------------------------------------------------------------
# derivative-tail diagnostic


@dataclass(frozen=True)
class TailDiagnostic:
    q_min: int
    sums: tuple  # (Q, partial sum) pairs
    relative_change: float


def derivative_tail_sum(model: CovarianceModel, expansion: HermiteExpansion, Q: int,
                        alpha: Optional[float] = None) -> TailDiagnostic:
    """Partial sums of q^(d/alpha) q! a_q^2 int |C|^q over q <= Q and q <= 2Q.

    Powers whose absolute moment diverges are skipped; the sum starts at the
    first integrable power at or above the Hermite rank.
    """
    if alpha is None:
        alpha = model.cond6.alpha if model.cond6 is not None else 2.0
    if 2 * Q > expansion.Q:
        raise ConfigurationError(f"expansion truncated at {expansion.Q} < 2Q = {2 * Q}")
    R = hermite_rank(expansion, expansion.rank_tol)[0]
    q0 = int(R)
    while True:
        try:
            INFINITE.check(model, q0, False)
            break
        except DivergenceError:
            q0 += 1
    terms = {}
    for q in range(q0, 2 * Q + 1):
        wq = expansion.chaos_weight(q)
        if wq == 0.0:
            terms[q] = 0.0
            continue
        terms[q] = q ** (model.d / alpha) * wq * cov_moment(model, q, INFINITE, signed=False).value
    s1 = math.fsum(v for q, v in terms.items() if q <= Q)
    s2 = math.fsum(terms.values())
    rel = abs(s2 - s1) / abs(s2) if s2 else 0.0
    return TailDiagnostic(q0, ((Q, s1), (2 * Q, s2)), rel)
