"""Monte Carlo estimates of the four-fold contraction integrals and of xi_m(t).

h_t(k1, k2) = int_{(tD)^4} C^{k1}(x-y) C^{k1}(z-w) C^{k2}(x-z) C^{k2}(y-w) dx dy dz dw
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb, factorial
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .covmoments import cov_moment
from .errors import ConfigurationError
from .functionals import BALL, BOX, DomainSpec, chaos_double_integral, exact_variance
from .hermite import HermiteExpansion
from .rng import check_seed, ordered_map, stream
from .specialfn import CovarianceModel, cov_eval

BATCH = 1 << 16
DEFAULT_SAMPLES = 2_000_000


@dataclass(frozen=True)
class ContractionEstimate:
    k1: int
    k2: int
    t: float
    mean: float
    stderr: float
    n_samples: int
    seed: int

    def to_dict(self) -> dict:
        return {"k1": self.k1, "k2": self.k2, "t": self.t, "mean": self.mean,
                "stderr": self.stderr, "n_samples": self.n_samples, "seed": self.seed}


def _uniform(rng: np.random.Generator, domain: DomainSpec, n: int) -> np.ndarray:
    d = domain.d
    if domain.shape == BOX:
        return (rng.random((n, d)) - 0.5) * domain.t
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (domain.t * rng.random(n) ** (1.0 / d))[:, None]


def _batch_sums(kernel: Callable, domain: DomainSpec, pairs, seed: int, n: int, index: int,
                swap_yz: bool):
    rng = stream(seed, index)
    x, y, z, w = (_uniform(rng, domain, n) for _ in range(4))
    if swap_yz:
        y, z = z, y
    dist = lambda u, v: np.linalg.norm(u - v, axis=1)
    cxy, czw, cxz, cyw = (kernel(dist(u, v)) for u, v in ((x, y), (z, w), (x, z), (y, w)))
    a = cxy * czw
    b = cxz * cyw
    out = []
    for k1, k2 in pairs:
        f = a**k1 * b**k2
        out.append((math.fsum(f), math.fsum(f * f)))
    return out


def _estimate_pairs(model, pairs, domain, n_samples, seed, swap_yz=False, kernel=None, threads=1):
    if n_samples < 100:
        raise ConfigurationError("n_samples must be at least 100")
    if domain.d != model.d:
        raise ConfigurationError("domain and model dimensions differ")
    for k1, k2 in pairs:
        if k1 < 1 or k2 < 1:
            raise ConfigurationError("contraction powers must be >= 1")
    seed = check_seed(seed)
    kern = kernel if kernel is not None else (lambda r: cov_eval(model, r))
    sizes = [BATCH] * (n_samples // BATCH)
    if n_samples % BATCH:
        sizes.append(n_samples % BATCH)
    jobs = list(enumerate(sizes))
    parts = ordered_map(lambda job: _batch_sums(kern, domain, pairs, seed, job[1], job[0], swap_yz),
                        jobs, threads)
    vol4 = domain.volume**4
    results = []
    for j, (k1, k2) in enumerate(pairs):
        s = math.fsum(p[j][0] for p in parts)
        ss = math.fsum(p[j][1] for p in parts)
        mean = s / n_samples
        var = max(ss / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
        results.append(ContractionEstimate(k1, k2, domain.t, vol4 * mean,
                                           vol4 * math.sqrt(var / n_samples), n_samples, seed))
    return results


def h_estimate(model: CovarianceModel, k1: int, k2: int, t: float, domain: Optional[DomainSpec] = None,
               n_samples: int = DEFAULT_SAMPLES, seed: int = 0, swap_yz: bool = False,
               kernel: Optional[Callable] = None, threads: int = 1) -> ContractionEstimate:
    """Plain Monte Carlo estimate of h_t(k1, k2) over uniform quadruples in tD.

    ``swap_yz`` exchanges the roles of the y and z samples; since h_t is
    symmetric under y <-> z with (k1, k2) -> (k2, k1), pairing an estimate
    of (k1, k2) with a swapped estimate of (k2, k1) on the same seed gives
    an antithetic-free exact comparison.  ``kernel`` replaces the covariance
    (test hook).
    """
    dom = domain.scaled(t) if domain is not None else DomainSpec(BALL, float(t), model.d)
    return _estimate_pairs(model, [(int(k1), int(k2))], dom, n_samples, seed, swap_yz, kernel, threads)[0]


@dataclass(frozen=True)
class XiEstimate:
    value: float
    stderr: float
    argmax: Tuple[int, int]
    cap_residual: float
    inconclusive: bool
    sigma2: float
    members: Dict[Tuple[int, int], float] = field(default_factory=dict, compare=False)
    estimates: Tuple[ContractionEstimate, ...] = field(default=(), compare=False, repr=False)


def tail_residual(model: CovarianceModel, domain: DomainSpec, K_cap: int, sigma2: float) -> float:
    """Bound on sqrt(h_t(k1,k2))/sigma^2 over k1 + k2 > K_cap.

    Integrating out one point and dropping one covariance factor (|C| <= 1)
    gives h_t(k1,k2) <= vol(tD) I_{k1} I_{k2} I_{max(k1,k2)}, with
    I_k = int_{|z| <= diam} |C|^k.  Since I_k decreases in k and
    max(k1,k2) >= ceil((K_cap+1)/2), the sup is at most vol I_1 I_c^2.
    """
    c = (K_cap + 2) // 2
    I1 = cov_moment(model, 1, domain.diameter, signed=False).value
    Ic = cov_moment(model, c, domain.diameter, signed=False).value
    return math.sqrt(domain.volume * I1 * Ic * Ic) / sigma2


def xi_estimate(model: CovarianceModel, expansion: HermiteExpansion, t: float, m: int,
                K_cap: Optional[int] = None, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                domain: Optional[DomainSpec] = None, sigma2: Optional[float] = None,
                threads: int = 1) -> XiEstimate:
    """max over k1, k2 >= 1 with m <= k1 + k2 <= K_cap of sqrt(h_t(k1,k2)) / sigma_t^2.

    All pairs share the same samples.  The omitted range k1 + k2 > K_cap is
    covered by :func:`tail_residual`; when that bound exceeds the measured
    value the result is flagged inconclusive.
    """
    if m < 1:
        raise ConfigurationError("threshold m must be >= 1")
    K_cap = m + 6 if K_cap is None else int(K_cap)
    if K_cap < m + 1:
        raise ConfigurationError("K_cap must be at least m + 1")
    dom = domain.scaled(t) if domain is not None else DomainSpec(BALL, float(t), model.d)
    if sigma2 is None:
        sigma2 = exact_variance(model, expansion, dom).total
    pairs = [(k1, s - k1) for s in range(max(m, 2), K_cap + 1) for k1 in range(1, s)]
    ests = _estimate_pairs(model, pairs, dom, n_samples, seed, threads=threads)
    members = {}
    best, best_se, arg = -math.inf, 0.0, pairs[0]
    for e in ests:
        v = math.sqrt(max(e.mean, 0.0)) / sigma2
        members[(e.k1, e.k2)] = v
        if v > best:
            # delta method for the square root
            se = e.stderr / (2.0 * math.sqrt(e.mean) * sigma2) if e.mean > 0 else math.sqrt(e.stderr) / sigma2
            best, best_se, arg = v, se, (e.k1, e.k2)
    resid = tail_residual(model, dom, K_cap, sigma2)
    return XiEstimate(best, best_se, arg, resid, resid > best, sigma2, members, tuple(ests))


# --------------------------------------------------------------------------
# second-chaos contraction ratio


@dataclass(frozen=True)
class ContractionRatio:
    t: float
    h: ContractionEstimate
    sigma2_chaos: float  # int int C^2(x - y) dx dy over (tD)^2

    @property
    def ratio(self) -> float:
        return self.h.mean / self.sigma2_chaos**2

    @property
    def stderr(self) -> float:
        return self.h.stderr / self.sigma2_chaos**2


def second_chaos_ratio(model: CovarianceModel, t: float, n_samples: int = DEFAULT_SAMPLES,
                       seed: int = 0, domain: Optional[DomainSpec] = None,
                       threads: int = 1) -> ContractionRatio:
    """h_t(1,1) / (int int C^2)^2, the normalised contraction of the second chaos."""
    dom = domain.scaled(t) if domain is not None else DomainSpec(BALL, float(t), model.d)
    h = h_estimate(model, 1, 1, t, dom, n_samples, seed, threads=threads)
    s2, _ = chaos_double_integral(model, 2, dom)
    return ContractionRatio(float(t), h, s2)


def ratio_of_ratios(a: ContractionRatio, b: ContractionRatio) -> Tuple[float, float]:
    """b.ratio / a.ratio with its propagated standard error (independent estimates)."""
    r = b.ratio / a.ratio
    rel = math.hypot(b.stderr / b.ratio, a.stderr / a.ratio)
    return r, abs(r) * rel


# --------------------------------------------------------------------------
# Hermite product moments


def product_moment_sum(p: int, q: int) -> int:
    """sum_r [r! C(p,r) C(q,r)]^2 (p+q-2r)!, the second moment of H_p H_q (exact integers)."""
    return sum((factorial(r) * comb(p, r) * comb(q, r)) ** 2 * factorial(p + q - 2 * r)
               for r in range(min(p, q) + 1))


def product_moment_bound(p: int, q: int) -> int:
    return 3 ** (p + q) * factorial(p) * factorial(q)
