"""Probabilists' Hermite polynomials, coefficient extraction and Hermite ranks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import roots_hermitenorm

from ._quad import gauss_legendre
from .errors import AccuracyWarning, ConfigurationError, DomainError, EvaluationError
from .specialfn import gauss_cdf

MAX_DEGREE = 200
DEFAULT_RANK_TOL = 1e-9
DEFAULT_NODES = 128
MAX_NODES = 4096


def hermite_eval(p: int, x):
    """H_p(x) from the three-term recurrence H_{k+1} = x H_k - k H_{k-1}."""
    if p < 0 or int(p) != p:
        raise DomainError("Hermite degree must be a nonnegative integer")
    if p > MAX_DEGREE:
        raise DomainError(f"degree {p} beyond the recurrence stability limit {MAX_DEGREE}")
    xa = np.asarray(x, dtype=float)
    h_prev = np.ones_like(xa)
    if p == 0:
        out = h_prev
    else:
        h = xa.copy()
        for k in range(1, int(p)):
            h, h_prev = xa * h - k * h_prev, h
        out = h
    return float(out) if np.ndim(x) == 0 else out


def hermite_table(Q: int, x) -> np.ndarray:
    """Rows H_0(x) .. H_Q(x)."""
    if Q > MAX_DEGREE:
        raise DomainError(f"degree {Q} beyond the recurrence stability limit {MAX_DEGREE}")
    xa = np.asarray(x, dtype=float)
    out = np.empty((Q + 1,) + xa.shape)
    out[0] = 1.0
    if Q >= 1:
        out[1] = xa
    for k in range(1, Q):
        out[k + 1] = xa * out[k] - k * out[k - 1]
    return out


def normalized_hermite_table(Q: int, x) -> np.ndarray:
    """Rows H_q(x)/sqrt(q!) for q = 0..Q; stable far into the tails."""
    xa = np.asarray(x, dtype=float)
    out = np.empty((Q + 1,) + xa.shape)
    out[0] = 1.0
    if Q >= 1:
        out[1] = xa
    for k in range(1, Q):
        out[k + 1] = (xa * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


@lru_cache(maxsize=16)
def gauss_hermite(n: int):
    """Nodes and probability weights for E[f(Z)], Z ~ N(0, 1).

    Nodes whose weight underflows are dropped.
    """
    x, w = roots_hermitenorm(n)
    w = w / math.sqrt(2.0 * math.pi)
    keep = w > 0
    x, w = x[keep], w[keep]
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=16)
def _piecewise_gauss(breaks: tuple, panel: float = 0.5, n: int = 24, limit: float = 38.5):
    """Composite Gauss-Legendre rule for the Gaussian weight, split at ``breaks``."""
    cuts = sorted({-limit, limit, *[b for b in breaks if -limit < b < limit]})
    xg, wg = gauss_legendre(n)
    nodes, weights = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        m = max(1, int(math.ceil((hi - lo) / panel)))
        edges = np.linspace(lo, hi, m + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes.append((mid[:, None] + half[:, None] * xg).ravel())
        weights.append((half[:, None] * wg).ravel())
    x = np.concatenate(nodes)
    w = np.concatenate(weights) * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class HermiteExpansion:
    """Truncated Hermite coefficients a_0..a_Q of an observable."""

    coeffs: tuple
    rank_tol: float = DEFAULT_RANK_TOL
    second_moment: Optional[float] = None  # E[phi(Z)^2] when known
    nodes: Optional[int] = None
    warnings: tuple = field(default=(), compare=False)

    @property
    def Q(self) -> int:
        return len(self.coeffs) - 1

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)

    @property
    def mean(self) -> float:
        return float(self.coeffs[0])

    @property
    def rank(self):
        return hermite_rank(self, self.rank_tol)[0]

    @property
    def second_rank(self):
        return hermite_rank(self, self.rank_tol)[1]

    @property
    def truncation_limited(self) -> bool:
        return math.isinf(self.second_rank)

    @property
    def tail_mass(self) -> float:
        """sum_{q=1..Q} a_q^2 q!"""
        return math.fsum(c * c * math.factorial(q) for q, c in enumerate(self.coeffs) if q >= 1)

    def chaos_weight(self, q: int) -> float:
        """a_q^2 q!, zero beyond the truncation."""
        if q > self.Q:
            return 0.0
        return self.coeffs[q] ** 2 * math.factorial(q)

    @property
    def variance(self) -> Optional[float]:
        if self.second_moment is None:
            return None
        return self.second_moment - self.mean**2

    def remainder_mass(self, N: int) -> Optional[float]:
        """Var(phi) - sum_{q=1..N} a_q^2 q! (None if Var(phi) unknown)."""
        var = self.variance
        if var is None:
            return None
        return max(var - math.fsum(self.chaos_weight(q) for q in range(1, min(N, self.Q) + 1)), 0.0)

    def digest(self) -> str:
        import hashlib

        blob = ",".join(repr(float(c)) for c in self.coeffs).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def evaluate(self, x):
        """Evaluate the truncated series sum_q a_q H_q(x)."""
        table = hermite_table(self.Q, x)
        return np.tensordot(self.a, table, axes=1)


def hermite_rank(expansion: HermiteExpansion, rank_tol: float = DEFAULT_RANK_TOL):
    """Return (R, R') with ``math.inf`` when no coefficient exceeds ``rank_tol``."""
    nz = [q for q in range(1, expansion.Q + 1) if abs(expansion.coeffs[q]) > rank_tol]
    R = nz[0] if nz else math.inf
    R2 = nz[1] if len(nz) > 1 else math.inf
    return R, R2


def _coefficients_at(phi, Q, x, w):
    vals = np.asarray(phi(x), dtype=float)
    if vals.shape != x.shape:
        vals = np.broadcast_to(vals, x.shape).astype(float)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("observable returned non-finite values at quadrature nodes")
    h = normalized_hermite_table(Q, x)
    proj = h @ (w * vals)
    scale = np.array([1.0 / math.sqrt(math.factorial(q)) for q in range(Q + 1)])
    return proj * scale, float(np.dot(w, vals * vals))


def hermite_expand(phi: Callable, Q: int, nodes: int = DEFAULT_NODES,
                   rank_tol: float = DEFAULT_RANK_TOL, breakpoints: Sequence[float] = (),
                   tol: float = 1e-10, max_nodes: int = MAX_NODES) -> HermiteExpansion:
    """Hermite coefficients a_q = E[phi(Z) H_q(Z)]/q! for q = 0..Q.

    Smooth observables use Gauss-Hermite quadrature, doubling ``nodes``
    until the coefficients move by less than ``tol``.  Observables with
    jumps should declare them in ``breakpoints``; they are then integrated
    piecewise with Gauss-Legendre panels against the Gaussian density.
    """
    if Q < 0 or Q > MAX_DEGREE:
        raise ConfigurationError(f"truncation order must lie in [0, {MAX_DEGREE}]")
    notes = []
    if breakpoints:
        x, w = _piecewise_gauss(tuple(float(b) for b in breakpoints))
        coeffs, m2 = _coefficients_at(phi, Q, x, w)
        used = int(x.size)
    else:
        n = max(int(nodes), Q + 1)
        x, w = gauss_hermite(n)
        coeffs, m2 = _coefficients_at(phi, Q, x, w)
        while True:
            if 2 * n > max_nodes:
                msg = (f"Hermite coefficients not stable to {tol:g} at {n} nodes; "
                       "declare breakpoints for discontinuous observables")
                notes.append(msg)
                warnings.warn(msg, AccuracyWarning, stacklevel=2)
                break
            x2, w2 = gauss_hermite(2 * n)
            c2, m2b = _coefficients_at(phi, Q, x2, w2)
            change = float(np.max(np.abs(c2 - coeffs)))
            coeffs, m2, n = c2, m2b, 2 * n
            if change <= tol:
                break
        used = n
    return HermiteExpansion(tuple(float(c) for c in coeffs), rank_tol, m2, used, tuple(notes))


def indicator_coefficients(u: float, Q: int) -> np.ndarray:
    """Closed-form coefficients of 1{x >= u}: a_0 = P(Z >= u), a_q = phi(u) H_{q-1}(u)/q!."""
    a = np.empty(Q + 1)
    a[0] = float(gauss_cdf(-u))
    if Q >= 1:
        dens = math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
        h = normalized_hermite_table(Q - 1, np.asarray([float(u)]))[:, 0]
        for q in range(1, Q + 1):
            # H_{q-1}/q! = h_{q-1} sqrt((q-1)!)/q! = h_{q-1} / (q sqrt((q-1)!))
            a[q] = dens * h[q - 1] / (q * math.sqrt(math.factorial(q - 1)))
    return a


# --------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    """An observable phi together with its Hermite expansion."""

    name: str
    func: Callable = field(compare=False, repr=False)
    expansion: HermiteExpansion = field(compare=False)

    def __call__(self, x):
        return self.func(x)

    def drop_first_chaos(self) -> "Observable":
        a1 = self.expansion.coeffs[1] if self.expansion.Q >= 1 else 0.0
        base = self.func
        coeffs = list(self.expansion.coeffs)
        m2 = self.expansion.second_moment
        if len(coeffs) > 1:
            coeffs[1] = 0.0
        if m2 is not None:
            m2 = m2 - a1 * a1
        exp = HermiteExpansion(tuple(coeffs), self.expansion.rank_tol, m2, self.expansion.nodes)
        return Observable(self.name + "-a1H1", lambda x: base(x) - a1 * np.asarray(x, dtype=float), exp)


def hermite_observable(q: int) -> Observable:
    coeffs = [0.0] * (q + 1)
    coeffs[q] = 1.0
    exp = HermiteExpansion(tuple(coeffs), second_moment=float(math.factorial(q)) if q else 1.0)
    return Observable(f"hermite:{q}", lambda x: hermite_eval(q, x), exp)


def indicator_observable(u: float, Q: int = 160) -> Observable:
    a = indicator_coefficients(u, Q)
    p = float(gauss_cdf(-u))
    exp = HermiteExpansion(tuple(float(c) for c in a), second_moment=p)
    return Observable(f"indicator:{u:g}", lambda x: (np.asarray(x) >= u).astype(float), exp)


def polynomial_observable(coeffs: Sequence[float], name: Optional[str] = None) -> Observable:
    """phi = sum_q coeffs[q] H_q."""
    c = tuple(float(v) for v in coeffs)
    m2 = math.fsum(v * v * math.factorial(q) for q, v in enumerate(c))
    exp = HermiteExpansion(c, second_moment=m2)
    return Observable(name or "coeffs:" + ",".join(f"{v:g}" for v in c), exp.evaluate, exp)


def parse_observable(spec: str, Q: int = 160) -> Observable:
    """Builtin observables: ``hermite:q``, ``indicator:u`` and ``coeffs:a0,a1,...``."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "hermite":
            return hermite_observable(int(arg))
        if kind == "indicator":
            return indicator_observable(float(arg), Q)
        if kind == "coeffs":
            return polynomial_observable([float(v) for v in arg.split(",")])
    except ValueError as exc:
        raise ConfigurationError(f"bad observable spec {spec!r}: {exc}") from exc
    raise ConfigurationError(f"unknown observable {spec!r}; use hermite:q, indicator:u or coeffs:...")
