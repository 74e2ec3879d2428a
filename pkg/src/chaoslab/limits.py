"""Distances to the Gaussian law, CLT replicate experiments and single-path ASCLT log-averages."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import kstwo

from .errors import ConfigurationError, DataError, DegeneracyError, ExcludedCaseWarning
from .fieldgen import GridField, build_embedding, make_planewave
from .functionals import (BALL, BOX, DomainSpec, LatticeRule, default_spacing, exact_variance,
                          _components)
from .hermite import HermiteExpansion, Observable, hermite_rank
from .report import ExperimentReport
from .rng import check_seed, ordered_map, stream
from .specialfn import CovarianceModel, gauss_cdf, gauss_pdf

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


# --------------------------------------------------------------------------
# samples and distances


@dataclass(frozen=True, eq=False)
class SampleSet:
    values: np.ndarray
    t: Optional[float] = None
    fingerprint: str = ""
    seeds: Tuple[int, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 2:
            raise DataError("a sample set needs at least two values")
        if not np.all(np.isfinite(v)):
            raise DataError("sample values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size


def _as_samples(samples) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.values
    return SampleSet(np.asarray(samples, dtype=float)).values


def wasserstein1_gauss(samples) -> float:
    """W_1 between the empirical measure and N(0,1).

    With sorted samples x_(i) and Gaussian quantile cells [q_{i-1}, q_i],
    W_1 = sum_i int_{q_{i-1}}^{q_i} |x_(i) - v| phi(v) dv, evaluated in
    closed form per cell (tail cells extend to +-infinity).
    """
    x = np.sort(_as_samples(samples))
    n = x.size
    u = np.arange(n + 1) / n
    with np.errstate(divide="ignore"):
        from .specialfn import gauss_quantile

        q = np.empty(n + 1)
        q[0], q[-1] = -np.inf, np.inf
        q[1:-1] = gauss_quantile(u[1:-1])
    a, b = q[:-1], q[1:]
    c = np.clip(x, a, b)
    Pa, Pb, Pc = u[:-1], u[1:], gauss_cdf(c)
    pa = np.where(np.isfinite(a), gauss_pdf(np.where(np.isfinite(a), a, 0.0)), 0.0)
    pb = np.where(np.isfinite(b), gauss_pdf(np.where(np.isfinite(b), b, 0.0)), 0.0)
    pc = gauss_pdf(c)
    below = x * (Pc - Pa) + pc - pa   # int_a^c (x - v) phi(v) dv
    above = pc - pb - x * (Pb - Pc)   # int_c^b (v - x) phi(v) dv
    return float(np.sum(below + above))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float


def ks_gauss(samples) -> KSResult:
    """Kolmogorov-Smirnov statistic against N(0,1) with its exact finite-n p-value."""
    x = np.sort(_as_samples(samples))
    n = x.size
    F = gauss_cdf(x)
    i = np.arange(1, n + 1)
    D = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    return KSResult(D, float(kstwo.sf(D, n)))


@dataclass(frozen=True)
class MomentStats:
    mean: float
    variance: float
    skewness: float
    skewness_se: float
    excess_kurtosis: float
    kurtosis_se: float


def moment_stats(samples) -> MomentStats:
    """Sample skewness and excess kurtosis with influence-function standard errors."""
    x = _as_samples(samples)
    n = x.size
    mu = float(np.mean(x))
    u = x - mu
    m2, m3, m4 = (float(np.mean(u**k)) for k in (2, 3, 4))
    if m2 <= 0:
        raise DegeneracyError("sample variance is zero")
    skew = m3 / m2**1.5
    kurt = m4 / m2**2 - 3.0
    if_m2 = u * u - m2
    if_m3 = u**3 - m3 - 3.0 * m2 * u
    if_m4 = u**4 - m4 - 4.0 * m3 * u
    if_skew = if_m3 / m2**1.5 - 1.5 * m3 / m2**2.5 * if_m2
    if_kurt = if_m4 / m2**2 - 2.0 * m4 / m2**3 * if_m2
    se = lambda f: float(np.std(f, ddof=1) / math.sqrt(n))
    return MomentStats(mu, m2 * n / (n - 1), skew, se(if_skew), kurt, se(if_kurt))


# --------------------------------------------------------------------------
# excluded configurations for the Berry field


def excluded_case(model: CovarianceModel, expansion: HermiteExpansion) -> Optional[str]:
    """Describe why a Berry configuration has no established Gaussian limit, else None."""
    if model.kind != "berry":
        return None
    R, R2 = hermite_rank(expansion, expansion.rank_tol)
    a4 = expansion.coeffs[4] if expansion.Q >= 4 else 0.0
    a4_zero = abs(a4) <= expansion.rank_tol
    d = model.d
    if R == 1 and math.isinf(R2):
        return "linear observable (only the first chaos is present)"
    if R == 3 and a4_zero and d == 2:
        return "Hermite rank 3 with a_4 = 0 in dimension 2"
    if R == 3 and d == 3:
        return "Hermite rank 3 in dimension 3"
    if R == 1 and R2 == 3 and a4_zero and d == 2:
        return "rank 1, second rank 3, a_4 = 0 in dimension 2"
    if R == 1 and R2 == 3 and d == 3:
        return "rank 1, second rank 3 in dimension 3"
    return None


def guard_excluded(model: CovarianceModel, expansion: HermiteExpansion) -> Optional[str]:
    reason = excluded_case(model, expansion)
    if reason is None:
        return None
    msg = (f"excluded case for the Berry field: {reason}; the variance order table does not "
           "cover it and a Gaussian limit is not asserted")
    warnings.warn(msg, ExcludedCaseWarning, stacklevel=3)
    return msg


# --------------------------------------------------------------------------
# CLT experiments


@dataclass
class CLTOptions:
    drop_first_chaos: bool = False
    truncation: Optional[int] = None     # use Y_{t,N} instead of Y_t
    carrier: Optional[str] = None        # "circulant" or "planewave"; None picks by model
    h: Optional[float] = None
    K: int = 4096                        # plane-wave count
    threads: int = 1
    keep_samples: bool = False

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("drop_first_chaos", "truncation", "carrier", "h", "K")}


def default_carrier(model: CovarianceModel) -> str:
    """Plane waves for the Berry field (its circulant embeddings stay indefinite), else circulant."""
    return "planewave" if model.kind == "berry" else "circulant"


class _ReplicateEngine:
    """Draws replicate field values on a domain lattice under the stream contract."""

    def __init__(self, model, domain, h, carrier, K, seed, t_index):
        self.model, self.domain, self.carrier, self.K = model, domain, carrier, K
        self.seed, self.t_index = seed, t_index
        self.rule = LatticeRule(domain, h)
        self.emb = None
        if carrier == "circulant":
            self.emb = build_embedding(model, self.rule.lattice)
        elif carrier == "planewave":
            if model.kind != "berry":
                raise ConfigurationError("plane-wave carriers synthesise Berry fields only")
        else:
            raise ConfigurationError(f"unknown carrier {carrier!r}")

    def block(self, j: int) -> List[np.ndarray]:
        """Field values for replicates 2j and 2j+1 (circulant) or replicate j (plane waves)."""
        if self.emb is not None:
            a, b = self.emb.draw_pair(stream(self.seed, self.t_index, j))
            return [a[self.rule.support], b[self.rule.support]]
        basis = make_planewave(self.model.d, self.K, seed=self.seed, index=(self.t_index << 32) + j)
        return [self.rule.values(basis)]

    @property
    def per_block(self) -> int:
        return 2 if self.emb is not None else 1


def _replicate_values(engine, n_reps, fn, threads):
    n_blocks = -(-n_reps // engine.per_block)
    blocks = ordered_map(lambda j: [fn(v) for v in engine.block(j)], range(n_blocks), threads)
    flat = [v for blk in blocks for v in blk]
    return flat[:n_reps]


def _resolve_observable(obs) -> Tuple[Callable, HermiteExpansion, str]:
    if isinstance(obs, Observable):
        return obs.func, obs.expansion, obs.name
    if isinstance(obs, HermiteExpansion):
        return obs.evaluate, obs, "coeffs:" + obs.digest()
    raise ConfigurationError("observable must be an Observable or a HermiteExpansion")


def clt_experiment(model: CovarianceModel, observable, domain: DomainSpec, t_list: Sequence[float],
                   n_reps: int, seed: int, options: Optional[CLTOptions] = None) -> ExperimentReport:
    """Replicate F_t = (Y_t - E Y_t)/sigma_t over independent realizations for each t.

    Reports W_1 and KS distances to N(0,1) and sample skewness/kurtosis.
    """
    opts = options or CLTOptions()
    seed = check_seed(seed)
    if n_reps < 2:
        raise ConfigurationError("n_reps must be at least 2")
    if isinstance(observable, Observable) and opts.drop_first_chaos:
        observable = observable.drop_first_chaos()
    func, expansion, name = _resolve_observable(observable)
    warn = guard_excluded(model, expansion)
    h = opts.h or default_spacing(model)
    carrier = opts.carrier or default_carrier(model)
    results, samples = [], {}
    for ti, t in enumerate(t_list):
        dom = domain.scaled(t)
        N = opts.truncation
        var = exact_variance(model, expansion, dom, N)
        if var.total < 1e-12:
            raise DegeneracyError(f"sigma_t^2 = {var.total:.3e} below 1e-12 at t={t}")
        sigma = math.sqrt(var.total)
        engine = _ReplicateEngine(model, dom, h, carrier, opts.K, seed, ti)
        w = engine.rule.w_flat
        if N is None:
            mean = expansion.mean * engine.rule.total_weight
            fn = lambda v: float(np.sum(w * func(v)))
        else:
            mean = 0.0
            a = expansion.a
            qs = [q for q in range(1, min(N, expansion.Q) + 1)]
            fn = lambda v: math.fsum(_components(engine.rule, v, a, qs).values())
        Y = np.asarray(_replicate_values(engine, n_reps, fn, opts.threads))
        F = (Y - mean) / sigma
        ks = ks_gauss(F)
        ms = moment_stats(F)
        results.append({
            "t": float(t), "sigma2": var.total, "N": var.N, "h": engine.rule.h, "n_reps": int(n_reps),
            "W1": wasserstein1_gauss(F), "KS": ks.statistic, "KS_pvalue": ks.pvalue,
            "mean": ms.mean, "variance": ms.variance,
            "skewness": ms.skewness, "skewness_se": ms.skewness_se,
            "excess_kurtosis": ms.excess_kurtosis, "kurtosis_se": ms.kurtosis_se,
            "embedding": engine.emb.metadata() if engine.emb is not None else None,
        })
        if opts.keep_samples:
            samples[float(t)] = SampleSet(F, float(t), expansion.digest(), (seed,))
    config = {"experiment": "clt", "model": model.to_dict(), "phi": name,
              "expansion_digest": expansion.digest(), "domain": {"shape": domain.shape, "d": domain.d,
                                                    "centered_ball": domain.shape == BALL},
              "t_list": [float(t) for t in t_list], "n_reps": int(n_reps), "seed": seed,
              "options": opts.to_dict() | {"h": h, "carrier": carrier}}
    rep = ExperimentReport(config, results, warnings=[warn] if warn else [])
    rep.samples = samples
    return rep


def reduction_experiment(model: CovarianceModel, observable: Observable, domain: DomainSpec, N: int,
                         n_reps: int, seed: int, h: Optional[float] = None, threads: int = 1) -> dict:
    """Monte Carlo E|Y_t/sigma_t - Y_{t,N}/sigma_{t,N}|^2 against 4(sigma_t - sigma_{t,N})/sigma_t."""
    func, expansion, _ = _resolve_observable(observable)
    full = exact_variance(model, expansion, domain)
    trunc = exact_variance(model, expansion, domain, N)
    s, sN = math.sqrt(full.total), math.sqrt(trunc.total)
    engine = _ReplicateEngine(model, domain, h or default_spacing(model), "circulant", 0, check_seed(seed), 0)
    w = engine.rule.w_flat
    mean = expansion.mean * engine.rule.total_weight
    a = expansion.a
    qs = list(range(1, N + 1))

    def fn(v):
        Y = float(np.sum(w * func(v))) - mean
        YN = math.fsum(_components(engine.rule, v, a, qs).values())
        return (Y / s - YN / sN) ** 2

    D = np.asarray(_replicate_values(engine, n_reps, fn, threads))
    est = float(np.mean(D))
    se = float(np.std(D, ddof=1) / math.sqrt(n_reps))
    return {"estimate": est, "stderr": se, "bound": 4.0 * (s - sN) / s, "sigma": s, "sigma_N": sN,
            "N_star": full.N}


# --------------------------------------------------------------------------
# ASCLT log-averages


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # not a pytest class

    name: str
    func: Callable = field(compare=False, repr=False)
    gauss_mean: float


DEFAULT_G = (
    TestFunction("cos", np.cos, math.exp(-0.5)),
    TestFunction("sin", np.sin, 0.0),
    TestFunction("clamp2", lambda x: np.clip(x, -2.0, 2.0) / 2.0, 0.0),
    TestFunction("gauss_bump", lambda x: np.exp(-0.5 * np.asarray(x) ** 2), 1.0 / math.sqrt(2.0)),
)
G_BY_NAME = {g.name: g for g in DEFAULT_G}
G_BY_NAME["one"] = TestFunction("one", lambda x: np.ones_like(np.asarray(x, dtype=float)), 1.0)


@dataclass(frozen=True)
class LogAverage:
    T: float
    t_grid: Tuple[float, ...]
    g_id: str
    value: float
    weights: Tuple[float, ...]
    target: float

    @property
    def discrepancy(self) -> float:
        return abs(self.value - self.target)

    def to_dict(self) -> dict:
        return {"T": self.T, "g": self.g_id, "value": self.value, "target": self.target,
                "discrepancy": self.discrepancy, "n_grid": len(self.t_grid),
                "weight_sum": math.fsum(self.weights)}


def log_grid(T: float, t1: float = 1.0, ratio: float = 1.05) -> np.ndarray:
    """Geometric grid t1 * ratio^i up to T, with T appended."""
    if t1 < 1.0 or T <= t1 or ratio <= 1.0:
        raise ConfigurationError("log grid needs 1 <= t1 < T and ratio > 1")
    n = int(math.floor(math.log(T / t1) / math.log(ratio) + 1e-12))
    g = t1 * ratio ** np.arange(n + 1)
    if g[-1] < T * (1 - 1e-12):
        g = np.append(g, T)
    else:
        g[-1] = T
    return g


def log_weights(grid: np.ndarray, T: float) -> np.ndarray:
    """Trapezoid weights in log t, normalised by log T."""
    u = np.log(grid)
    w = np.zeros_like(u)
    du = np.diff(u)
    w[:-1] += 0.5 * du
    w[1:] += 0.5 * du
    return w / math.log(T)


def _prefix_path_1d(values_fn_vals: np.ndarray, h: float, k0: int, ts: np.ndarray) -> np.ndarray:
    """int_{-t/2}^{t/2} f over a centred 1-D lattice from symmetric prefix sums.

    ``values_fn_vals[k0 + k]`` holds f at x = h*k.
    """
    f = values_fn_vals
    n_side = min(k0, f.size - 1 - k0)
    pos = np.concatenate([[0.0], np.cumsum(f[k0 + 1:k0 + 1 + n_side])])
    neg = np.concatenate([[0.0], np.cumsum(f[k0 - 1::-1][:n_side])])
    out = np.empty(ts.size)
    for i, t in enumerate(ts):
        L = 0.5 * t
        m = int(math.floor(L / h - 0.5 + 1e-12))  # cells |k| <= m lie fully inside
        if m + 1 > n_side:
            raise ConfigurationError("carrier grid smaller than the largest domain")
        if m < 0:
            out[i] = t * f[k0]
            continue
        frac = (L - (m + 0.5) * h) / h
        s = f[k0] + pos[m] + neg[m] + frac * (f[k0 + m + 1] + f[k0 - m - 1])
        out[i] = h * s
    return out


def ascl_path(model: CovarianceModel, observable, domain: DomainSpec, T: float, seed: int,
              carrier: Optional[str] = None, h: Optional[float] = None, t1: float = 1.0,
              ratio: float = 1.05, horizons: Sequence[float] = (), K: int = 4096):
    """Normalised values F_t(omega) of one realization on the union of log grids.

    Returns (grid, F).  Circulant carriers are drawn once on the lattice
    covering the largest domain; in d=1 with a box, Y_t for all t comes
    from prefix sums in a single pass.
    """
    func, expansion, _ = _resolve_observable(observable)
    seed = check_seed(seed)
    h = h or default_spacing(model)
    grid = log_grid(T, t1, ratio)
    for Tp in horizons:
        grid = np.union1d(grid, log_grid(Tp, t1, ratio))
    sig = np.array([math.sqrt(exact_variance(model, expansion, domain.scaled(t)).total) for t in grid])
    big = domain.scaled(T)
    carrier = carrier or default_carrier(model)
    if carrier == "circulant":
        rule = LatticeRule(big, h)
        emb = build_embedding(model, rule.lattice)
        field_vals = emb.draw(stream(seed, 0))
        if domain.d == 1 and domain.shape == BOX:
            k0 = rule.lattice.shape[0] // 2
            Y = _prefix_path_1d(func(field_vals), h, k0, grid)
            mean = expansion.mean * grid
        else:
            gf = GridField(rule.lattice, field_vals, seed, model)
            Y, mean = np.empty(grid.size), np.empty(grid.size)
            for i, t in enumerate(grid):
                r = LatticeRule(domain.scaled(t), h)
                Y[i] = r.integrate(func(r.values(gf)))
                mean[i] = expansion.mean * r.total_weight
    elif carrier == "planewave":
        basis = make_planewave(model.d, K, seed=seed)
        Y, mean = np.empty(grid.size), np.empty(grid.size)
        for i, t in enumerate(grid):
            r = LatticeRule(domain.scaled(t), h)
            Y[i] = r.integrate(func(r.values(basis)))
            mean[i] = expansion.mean * r.total_weight
    else:
        raise ConfigurationError(f"unknown carrier {carrier!r}")
    return grid, (Y - mean) / sig


def log_averages(grid: np.ndarray, F: np.ndarray, T: float, g_list=DEFAULT_G) -> List[LogAverage]:
    """nu_T(g) = sum_i w_i g(F_{t_i}) over grid points t_i <= T."""
    sel = grid <= T * (1 + 1e-12)
    tg, Fv = grid[sel], np.asarray(F)[sel]
    w = log_weights(tg, T)
    out = []
    for g in g_list:
        gv = np.asarray(g.func(Fv), dtype=float)
        out.append(LogAverage(float(T), tuple(tg.tolist()), g.name, float(np.dot(w, gv)),
                              tuple(w.tolist()), g.gauss_mean))
    return out


def ascl_logaverage(model: CovarianceModel, observable, domain: DomainSpec, T: float, seed: int,
                    g_list=DEFAULT_G, carrier: Optional[str] = None, h: Optional[float] = None,
                    t1: float = 1.0, ratio: float = 1.05,
                    forced_F: Optional[Callable] = None) -> List[LogAverage]:
    """Single-path log-averages nu_T(g) for each test function in ``g_list``.

    ``forced_F`` replaces the path by a prescribed function of t (test hook).
    """
    if forced_F is not None:
        grid = log_grid(T, t1, ratio)
        return log_averages(grid, np.asarray([forced_F(t) for t in grid], dtype=float), T, g_list)
    grid, F = ascl_path(model, observable, domain, T, seed, carrier, h, t1, ratio)
    return log_averages(grid, F, T, g_list)
