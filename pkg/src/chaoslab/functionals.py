"""Integral functionals Y_t = int_{tD} phi(B_x) dx, their chaos components and exact variances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional

import numpy as np

from ._quad import gauss_legendre, integrate_panels
from .covmoments import _oscillation_edges, cov_moment, covariogram_array
from .errors import AccuracyError, ConfigurationError, DegeneracyError, ResolutionError
from .fieldgen import GridField, LatticeSpec, PlaneWaveBasis, eval_field
from .hermite import HermiteExpansion, hermite_rank, normalized_hermite_table
from .specialfn import CovarianceModel, ball_volume, cov_eval, sphere_area

BALL = "ball"
BOX = "box"


@dataclass(frozen=True)
class DomainSpec:
    """tD with D the unit-radius ball or the unit cube [-1/2, 1/2]^d, both centred at 0."""

    shape: str
    t: float
    d: int

    def __post_init__(self):
        if self.shape not in (BALL, BOX):
            raise ConfigurationError(f"domain shape must be 'ball' or 'box', got {self.shape!r}")
        if not self.t > 0 or self.d < 1:
            raise ConfigurationError("domain needs t > 0 and d >= 1")

    @property
    def half_width(self) -> float:
        return self.t if self.shape == BALL else 0.5 * self.t

    @property
    def volume(self) -> float:
        return ball_volume(self.d, self.t) if self.shape == BALL else self.t**self.d

    @property
    def surface_area(self) -> float:
        if self.shape == BALL:
            return sphere_area(self.d) * self.t ** (self.d - 1)
        return 2 * self.d * self.t ** (self.d - 1)

    @property
    def diameter(self) -> float:
        return 2 * self.t if self.shape == BALL else self.t * math.sqrt(self.d)

    def scaled(self, t: float) -> "DomainSpec":
        return DomainSpec(self.shape, float(t), self.d)

    def to_dict(self) -> dict:
        return {"shape": self.shape, "t": self.t, "d": self.d}


def default_spacing(model: CovarianceModel) -> float:
    """min(0.25, scale/8) with scale the wavelength 2*pi for Berry, else the correlation length."""
    return min(0.25, model.scale / 8.0)


# --------------------------------------------------------------------------
# boundary-cell fractions


def _interval_overlap(x, h, lo, hi):
    return np.clip(np.minimum(x + 0.5 * h, hi) - np.maximum(x - 0.5 * h, lo), 0.0, None) / h


def _disk_F(x, R):
    """Antiderivative of sqrt(R^2 - x^2)."""
    x = np.clip(x, -R, R)
    return 0.5 * (x * np.sqrt(np.maximum(R * R - x * x, 0.0)) + R * R * np.arcsin(x / R))


def _disk_corner(a, b, R):
    """Area of {x <= a, y <= b} inside the disk of radius R (vectorised)."""
    a = np.clip(np.asarray(a, dtype=float), -R, R)
    b = np.asarray(b, dtype=float)
    bc = np.clip(b, -R, R)
    xb = np.sqrt(np.maximum(R * R - bc * bc, 0.0))
    F = lambda x: _disk_F(x, R)
    # inside |x| < xb the chord length below y=b is b + s(x); outside it is 2 s(x) (b > 0) or 0 (b < 0)
    lo_in = -xb
    hi_in = np.minimum(a, xb)
    mid = np.where(hi_in > lo_in, bc * (hi_in - lo_in) + F(hi_in) - F(lo_in), 0.0)
    left = np.minimum(a, -xb)
    outer_left = 2.0 * (F(left) - F(-R))
    outer_right = np.where(a > xb, 2.0 * (F(a) - F(xb)), 0.0)
    outer = np.where(bc > 0, outer_left + outer_right, 0.0)
    return mid + outer


def _disk_rect_area(x0, x1, y0, y1, R):
    return (_disk_corner(x1, y1, R) - _disk_corner(x0, y1, R)
            - _disk_corner(x1, y0, R) + _disk_corner(x0, y0, R))


def _ball_fractions(points: np.ndarray, h: float, R: float, d: int) -> np.ndarray:
    """Fraction of each cube cell (centre ``points``, side h) inside the ball of radius R."""
    half = 0.5 * h
    dist = np.linalg.norm(points, axis=1)
    near = np.sqrt(np.sum(np.maximum(np.abs(points) - half, 0.0) ** 2, axis=1))
    far = np.sqrt(np.sum((np.abs(points) + half) ** 2, axis=1))
    frac = np.where(far <= R, 1.0, 0.0)
    cut = (far > R) & (near < R)
    if not np.any(cut):
        return frac
    p = points[cut]
    if d == 1:
        frac[cut] = _interval_overlap(p[:, 0], h, -R, R)
    elif d == 2:
        area = _disk_rect_area(p[:, 0] - half, p[:, 0] + half, p[:, 1] - half, p[:, 1] + half, R)
        frac[cut] = area / (h * h)
    elif d == 3:
        # exact disk-rectangle areas integrated over the third axis
        xg, wg = gauss_legendre(24)
        vol = np.zeros(p.shape[0])
        for xi, wi in zip(xg, wg):
            z = p[:, 2] + half * xi
            Rz = np.sqrt(np.maximum(R * R - z * z, 0.0))
            ok = Rz > 0
            area = np.zeros_like(z)
            area[ok] = _disk_rect_area(p[ok, 0] - half, p[ok, 0] + half,
                                       p[ok, 1] - half, p[ok, 1] + half, Rz[ok])
            vol += wi * half * area
        frac[cut] = vol / h**3
    else:
        sub = (np.arange(4) + 0.5) / 4.0 - 0.5
        offs = np.stack(np.meshgrid(*([sub] * d), indexing="ij"), axis=-1).reshape(-1, d) * h
        inside = np.linalg.norm(p[:, None, :] + offs[None, :, :], axis=2) <= R
        frac[cut] = inside.mean(axis=1)
    del dist
    return frac


@lru_cache(maxsize=32)
def _lattice_weights(domain: DomainSpec, h: float):
    if h > 2 * domain.half_width:
        raise ResolutionError(f"lattice spacing h={h:g} exceeds the domain width {2 * domain.half_width:g}")
    lat = LatticeSpec.centered(domain.d, h, domain.half_width)
    pts = lat.points()
    if domain.shape == BOX:
        L = domain.half_width
        frac = np.ones(pts.shape[0])
        for i in range(domain.d):
            frac *= _interval_overlap(pts[:, i], h, -L, L)
    else:
        frac = _ball_fractions(pts, h, domain.t, domain.d)
    w = (frac * h**domain.d).reshape(lat.shape)
    if not np.any(w > 0):
        raise ResolutionError("no lattice cell intersects the domain")
    w.setflags(write=False)
    return lat, w


class LatticeRule:
    """Midpoint rule on the lattice h*Z^d restricted to tD, with fractional boundary cells."""

    def __init__(self, domain: DomainSpec, h: float):
        if not h > 0:
            raise ConfigurationError("grid spacing h must be positive")
        self.domain = domain
        self.h = float(h)
        self.lattice, self.weights = _lattice_weights(domain, self.h)
        self.support = self.weights > 0
        self.w_flat = self.weights[self.support]

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.w_flat))

    def values(self, carrier) -> np.ndarray:
        """Field values at the supported lattice points."""
        if isinstance(carrier, PlaneWaveBasis):
            pts = self.lattice.points()[self.support.ravel()]
            return eval_field(carrier, pts)
        if isinstance(carrier, ConstantField):
            return np.full(self.w_flat.shape, carrier.value)
        if isinstance(carrier, GridField):
            return self.restrict(carrier.lattice, carrier.values)[self.support]
        arr = np.asarray(carrier, dtype=float)
        if arr.shape == self.weights.shape:
            return arr[self.support]
        if arr.shape == self.w_flat.shape:
            return arr
        raise ConfigurationError("field array does not match the domain lattice")

    def restrict(self, lattice: LatticeSpec, values: np.ndarray) -> np.ndarray:
        """Sub-array of a larger aligned grid covering this rule's lattice."""
        if abs(lattice.h - self.h) > 1e-12 * self.h or lattice.d != self.lattice.d:
            raise ConfigurationError("carrier grid spacing or dimension differs from the domain lattice")
        sl = []
        for o_g, n_g, o_l, n_l in zip(lattice.origin, lattice.shape, self.lattice.origin, self.lattice.shape):
            k = (o_l - o_g) / self.h
            ki = int(round(k))
            if abs(k - ki) > 1e-6 or ki < 0 or ki + n_l > n_g:
                raise ConfigurationError("carrier grid does not cover the domain lattice")
            sl.append(slice(ki, ki + n_l))
        return values[tuple(sl)]

    def integrate(self, vals: np.ndarray) -> float:
        return float(np.sum(self.w_flat * vals))


@dataclass(frozen=True)
class ConstantField:
    """Field identically equal to ``value`` (test hook)."""

    value: float


@dataclass(frozen=True)
class FunctionalResult:
    value: float
    h: float
    domain: DomainSpec
    components: Optional[Dict[int, float]] = None
    mean: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"value": self.value, "h": self.h, "domain": self.domain.to_dict()}
        if self.components is not None:
            out["components"] = {str(k): v for k, v in self.components.items()}
        if self.mean is not None:
            out["mean"] = self.mean
        return out


def _phi_values(phi, x):
    if isinstance(phi, HermiteExpansion):
        return phi.evaluate(x)
    return np.asarray(phi(x), dtype=float)


def integrate_functional(carrier, phi, domain: DomainSpec, h: Optional[float] = None,
                         expansion: Optional[HermiteExpansion] = None,
                         components: bool = False) -> FunctionalResult:
    """Midpoint-rule value of int_{tD} phi(B_x) dx on the lattice of spacing ``h``.

    With ``components`` and an ``expansion`` the chaos components
    a_q int H_q(B_x) dx, q = 1..Q, are computed on the same lattice.
    """
    if h is None:
        model = getattr(carrier, "model", None)
        h = default_spacing(model) if model is not None else 0.25
    rule = LatticeRule(domain, h)
    x = rule.values(carrier)
    value = rule.integrate(_phi_values(phi, x))
    comps, mean = None, None
    if expansion is not None:
        mean = expansion.mean * rule.total_weight
        if components:
            comps = _components(rule, x, expansion.a, range(1, expansion.Q + 1))
    return FunctionalResult(value, rule.h, domain, comps, mean)


def _components(rule: LatticeRule, x: np.ndarray, a: np.ndarray, qs) -> Dict[int, float]:
    qs = list(qs)
    if not qs:
        return {}
    table = normalized_hermite_table(max(qs), x)
    out = {}
    for q in qs:
        coef = a[q] if q < len(a) else 0.0
        out[q] = float(coef * math.sqrt(math.factorial(q)) * np.sum(rule.w_flat * table[q]))
    return out


def chaos_component(carrier, q: int, a_q: float, domain: DomainSpec, h: float) -> float:
    """a_q int_{tD} H_q(B_x) dx on the lattice."""
    rule = LatticeRule(domain, h)
    x = rule.values(carrier)
    a = np.zeros(q + 1)
    a[q] = a_q
    return _components(rule, x, a, [q])[q]


# --------------------------------------------------------------------------
# exact variances


@dataclass(frozen=True)
class VarianceResult:
    total: float
    err: float
    N: int
    terms: Dict[int, float] = field(default_factory=dict)
    errors: Dict[int, float] = field(default_factory=dict)
    tail_bound: Optional[float] = None

    @property
    def sigma(self) -> float:
        return math.sqrt(self.total)


def _box_kernel_integral(model, q, t, d, rtol):
    if d == 1:
        f = lambda r: cov_eval(model, r) ** q * (t - r)
        res = integrate_panels(f, _oscillation_edges(model, t, q), rtol=rtol)
        return 2.0 * res.value, 2.0 * res.err, res.converged
    if d == 2:
        edges = _oscillation_edges(model, t, q)

        def inner(x):
            xs = np.asarray(x, dtype=float)
            out = np.empty_like(xs)
            for i, xv in enumerate(xs.ravel()):
                g = lambda y: cov_eval(model, np.hypot(xv, y)) ** q * (t - y)
                out.flat[i] = integrate_panels(g, edges, rtol=rtol).value
            return out * (t - xs)

        res = integrate_panels(inner, edges, rtol=rtol * 10)
        return 4.0 * res.value, 4.0 * res.err, res.converged
    raise ConfigurationError("exact variances on boxes are implemented for d <= 2")


def chaos_double_integral(model: CovarianceModel, q: int, domain: DomainSpec,
                          rtol: float = 1e-10):
    """int_{tD} int_{tD} C(x-y)^q dx dy, returned as (value, err)."""
    if domain.d != model.d:
        raise ConfigurationError("domain and model dimensions differ")
    if domain.shape == BOX:
        v, e, ok = _box_kernel_integral(model, q, domain.t, domain.d, rtol)
    else:
        t, d = domain.t, domain.d
        S = sphere_area(d)
        f = lambda r: cov_eval(model, r) ** q * covariogram_array(d, t, t, r) * r ** (d - 1)
        res = integrate_panels(f, _oscillation_edges(model, 2 * t, q), rtol=rtol)
        v, e, ok = S * res.value, S * res.err, res.converged
    if not ok:
        raise AccuracyError(f"variance quadrature did not converge for q={q}")
    if v < -max(e, 1e-14 * abs(v)) and q % 2 == 0:
        raise AccuracyError(f"negative even-power variance term for q={q}: {v:g}")
    return v, e


def exact_variance(model: CovarianceModel, expansion: HermiteExpansion, domain: DomainSpec,
                   N: Optional[int] = None, rtol: float = 1e-10) -> VarianceResult:
    """sigma^2_{t,N} = sum_{q=R..N} q! a_q^2 int int C^q(x-y) dx dy.

    ``N=None`` picks N* from the tail bound (see :func:`choose_truncation`).
    """
    R = hermite_rank(expansion, expansion.rank_tol)[0]
    if math.isinf(R):
        raise DegeneracyError("observable has no nonconstant chaos component")
    tail = None
    if N is None:
        N, tail = choose_truncation(model, expansion, domain)
    if N < R:
        raise ConfigurationError(f"truncation N={N} below the Hermite rank {R}")
    terms, errs = {}, {}
    for q in range(int(R), min(N, expansion.Q) + 1):
        wq = expansion.chaos_weight(q)
        if wq == 0.0:
            continue
        v, e = chaos_double_integral(model, q, domain, rtol)
        term = wq * v
        if term < -wq * e - 1e-14 * abs(term):
            raise AccuracyError(f"variance term for q={q} is negative beyond its error: {term:g}")
        terms[q] = term
        errs[q] = wq * e
    total = math.fsum(terms.values())
    return VarianceResult(total, math.fsum(errs.values()), int(N), terms, errs, tail)


def choose_truncation(model: CovarianceModel, expansion: HermiteExpansion, domain: DomainSpec,
                      rel: float = 1e-3):
    """Smallest N with vol(tD) int_{|z|<=diam} |C|^{N+1} * (Var phi - sum_{q<=N} q! a_q^2) < rel * sigma^2_{t,N}.

    Returns (N, bound).  Polynomials with known degree stop at their degree.
    """
    R = int(hermite_rank(expansion, expansion.rank_tol)[0])
    var_partial = 0.0
    for N in range(R, expansion.Q + 1):
        wq = expansion.chaos_weight(N)
        if wq:
            var_partial += wq * chaos_double_integral(model, N, domain)[0]
        rem = expansion.remainder_mass(N)
        if rem is None:
            raise ConfigurationError("automatic truncation needs E[phi^2] on the expansion")
        if rem <= 1e-15 * max(expansion.variance, 1e-300):
            return N, 0.0
        mom = cov_moment(model, N + 1, domain.diameter, signed=False).value
        bound = domain.volume * mom * rem
        if var_partial > 0 and bound < rel * var_partial:
            return N, bound
    raise AccuracyError(f"tail bound not below {rel:g} before the expansion order Q={expansion.Q}")
