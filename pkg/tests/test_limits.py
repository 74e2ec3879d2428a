import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import roots_legendre

from chaoslab.errors import DataError, DegeneracyError, ExcludedCaseWarning
from chaoslab.fieldgen import build_embedding
from chaoslab.functionals import BALL, BOX, DomainSpec, LatticeRule
from chaoslab.hermite import (hermite_observable, indicator_observable, polynomial_observable)
from chaoslab.limits import (DEFAULT_G, G_BY_NAME, CLTOptions, SampleSet, TestFunction, _prefix_path_1d,
                             ascl_logaverage, ascl_path, clt_experiment, excluded_case, guard_excluded,
                             ks_gauss, log_averages, log_grid, log_weights, moment_stats,
                             reduction_experiment, wasserstein1_gauss)
from chaoslab.rng import stream
from chaoslab.specialfn import CovarianceModel, gauss_cdf


def w1_oracle(x):
    """int |F_n - Phi| with 16-point Gauss-Legendre between order statistics and on the tails."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    g, w = roots_legendre(16)
    total = 0.0
    edges = np.concatenate([[x[0] - 12.0], x, [x[-1] + 12.0]])
    for i in range(edges.size - 1):
        lo, hi = edges[i], edges[i + 1]
        if hi <= lo:
            continue
        Fn = min(max(i, 0), n) / n
        # split at the crossing of Phi with the constant Fn
        cuts = [lo, hi]
        if 0 < Fn < 1:
            z = stats.norm.ppf(Fn)
            if lo < z < hi:
                cuts = [lo, z, hi]
        for a, b in zip(cuts[:-1], cuts[1:]):
            v = 0.5 * (b - a) * g + 0.5 * (a + b)
            total += 0.5 * (b - a) * np.dot(w, np.abs(Fn - gauss_cdf(v)))
    return total


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_w1_closed_form_against_quadrature_oracle(seed):
    x = np.random.default_rng(seed).standard_t(5, size=300)
    assert wasserstein1_gauss(x) == pytest.approx(w1_oracle(x), abs=1e-8)


def test_w1_reference_values():
    assert wasserstein1_gauss(np.zeros(10)) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)
    n = 4000
    q = stats.norm.ppf((np.arange(n) + 0.5) / n)
    assert wasserstein1_gauss(q) < 1e-3
    assert wasserstein1_gauss(q + 1.0) == pytest.approx(1.0, abs=1e-2)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=40), st.floats(-2, 2))
def test_w1_triangle_under_shift(xs, s):
    x = np.asarray(xs)
    assert abs(wasserstein1_gauss(x + s) - wasserstein1_gauss(x)) <= abs(s) + 1e-9


def test_ks_matches_scipy():
    x = np.random.default_rng(4).standard_normal(500) * 1.1
    ref = stats.kstest(x, "norm", method="exact")
    r = ks_gauss(x)
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-14)
    assert r.pvalue == pytest.approx(ref.pvalue, rel=1e-8)


def test_moment_stats_against_scipy_and_asymptotics():
    x = np.random.default_rng(5).standard_normal(20000)
    m = moment_stats(x)
    assert m.skewness == pytest.approx(stats.skew(x), rel=1e-10)
    assert m.excess_kurtosis == pytest.approx(stats.kurtosis(x), rel=1e-10)
    assert m.variance == pytest.approx(np.var(x, ddof=1))
    n = x.size
    assert m.skewness_se == pytest.approx(math.sqrt(6 / n), rel=0.1)
    assert m.kurtosis_se == pytest.approx(math.sqrt(24 / n), rel=0.1)
    with pytest.raises(DegeneracyError):
        moment_stats(np.ones(5))


def test_sample_set_validation():
    with pytest.raises(DataError):
        SampleSet([1.0])
    with pytest.raises(DataError):
        wasserstein1_gauss([0.0, np.nan])
    assert SampleSet([1, 2, 3]).n == 3


@pytest.mark.parametrize("d,obs,expected", [
    (2, polynomial_observable([0, 0, 0, 1]), True),            # R=3, a4=0, d=2
    (2, polynomial_observable([0, 0, 0, 1, 0.5]), False),      # R=3, a4 != 0, d=2
    (3, polynomial_observable([0, 0, 0, 1, 0.5]), True),       # R=3, d=3
    (2, polynomial_observable([0, 1]), True),                  # linear
    (2, polynomial_observable([0, 1, 0, 1]), True),            # R=1, R'=3, a4=0, d=2
    (2, polynomial_observable([0, 1, 0, 1, 1]), False),        # R=1, R'=3, a4 != 0, d=2
    (3, polynomial_observable([0, 1, 0, 1, 1]), True),         # R=1, R'=3, d=3
    (2, hermite_observable(2), False),
    (2, hermite_observable(4), False),
    (2, indicator_observable(1.0), False),                      # R=1, R'=2
    (3, indicator_observable(0.0), True),                       # R=1, R'=3, d=3
])
def test_excluded_case_matrix(d, obs, expected):
    model = CovarianceModel.berry(d)
    assert (excluded_case(model, obs.expansion) is not None) == expected
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        msg = guard_excluded(model, obs.expansion)
    hits = [w for w in rec if issubclass(w.category, ExcludedCaseWarning)]
    assert bool(hits) == expected
    if expected:
        assert msg.startswith("excluded case for the Berry field")


def test_non_berry_never_excluded(expo1):
    assert excluded_case(expo1, polynomial_observable([0, 1]).expansion) is None


def test_clt_linear_observable_is_exactly_gaussian(expo1):
    rep = clt_experiment(expo1, hermite_observable(1), DomainSpec(BOX, 1.0, 1), [4.0], 2000, seed=3,
                         options=CLTOptions(keep_samples=True))
    r = rep.results[0]
    # Y_t is exactly Gaussian; only the lattice variance deviates from sigma_t^2 by O(h^2)
    assert r["W1"] < 0.05
    assert r["KS_pvalue"] > 1e-3
    assert abs(r["variance"] - 1.0) < 0.1
    assert rep.samples[4.0].n == 2000
    assert rep.config["options"]["carrier"] == "circulant"


def test_clt_report_contents_and_determinism(expo1):
    args = (expo1, hermite_observable(2), DomainSpec(BOX, 1.0, 1), [2.0, 8.0], 50, 7)
    a, b = clt_experiment(*args), clt_experiment(*args)
    assert a.content_json() == b.content_json()
    assert [r["t"] for r in a.results] == [2.0, 8.0]
    assert {"W1", "KS", "KS_pvalue", "skewness", "skewness_se", "excess_kurtosis",
            "kurtosis_se", "sigma2", "N", "embedding"} <= set(a.results[0])
    c = clt_experiment(*args[:-1], 8)
    assert c.content_json() != a.content_json()


def test_clt_threads_do_not_change_results(expo1):
    args = (expo1, hermite_observable(2), DomainSpec(BOX, 1.0, 1), [4.0], 40, 2)
    one = clt_experiment(*args, options=CLTOptions(threads=1))
    three = clt_experiment(*args, options=CLTOptions(threads=3))
    assert one.content_json() == three.content_json()


def test_clt_berry_excluded_case_warns(berry2):
    with pytest.warns(ExcludedCaseWarning):
        rep = clt_experiment(berry2, hermite_observable(3), DomainSpec(BALL, 1.0, 2), [3.0], 4, 1,
                             CLTOptions(K=64))
    assert rep.warnings and rep.config["options"]["carrier"] == "planewave"


def test_clt_degenerate_after_dropping_first_chaos(expo1):
    with pytest.raises(DegeneracyError):
        clt_experiment(expo1, hermite_observable(1), DomainSpec(BOX, 1.0, 1), [2.0], 10, 1,
                       CLTOptions(drop_first_chaos=True))


def test_reduction_experiment_small(expo1):
    r = reduction_experiment(expo1, indicator_observable(0.0), DomainSpec(BOX, 8.0, 1), 4, 200, seed=1)
    assert 0 < r["estimate"] < r["bound"] + 4 * r["stderr"]
    assert r["sigma_N"] < r["sigma"]


def test_log_grid_and_weights():
    g = log_grid(100.0)
    assert g[0] == 1.0 and g[-1] == 100.0
    assert np.all(np.diff(g) > 0)
    assert np.allclose(np.diff(np.log(g))[:-1], math.log(1.05))
    w = log_weights(g, 100.0)
    assert math.fsum(w) == pytest.approx(1.0, abs=1e-14)


def test_forced_paths_give_exact_log_averages():
    out = ascl_logaverage(None, None, None, 1e3, 0, forced_F=lambda t: 0.0)
    vals = {la.g_id: la.value for la in out}
    assert vals["cos"] == pytest.approx(1.0, abs=1e-14)
    assert vals["sin"] == pytest.approx(0.0, abs=1e-14)
    assert vals["gauss_bump"] == pytest.approx(1.0, abs=1e-14)
    # F_t = log t / log T: nu_T(g) -> int_0^1 g(u) du for the identity-like clamp
    out = ascl_logaverage(None, None, None, 1e4, 0, g_list=[G_BY_NAME["clamp2"]],
                          forced_F=lambda t: math.log(t) / math.log(1e4))
    assert out[0].value == pytest.approx(0.25, abs=1e-3)


def test_test_function_targets():
    z = np.random.default_rng(0).standard_normal(400_000)
    for g in DEFAULT_G:
        assert abs(np.mean(g.func(z)) - g.gauss_mean) < 5 * np.std(g.func(z)) / math.sqrt(z.size)
    assert isinstance(G_BY_NAME["one"], TestFunction)


def test_prefix_path_matches_direct_lattice_integration(expo1):
    h = 0.125
    big = DomainSpec(BOX, 40.0, 1)
    rule = LatticeRule(big, h)
    vals = build_embedding(expo1, rule.lattice).draw(stream(4, 0))
    f = vals ** 2 - 1
    k0 = rule.lattice.shape[0] // 2
    ts = np.array([1.0, 1.3, 7.77, 20.0, 40.0])
    fast = _prefix_path_1d(f, h, k0, ts)
    for t, v in zip(ts, fast):
        r = LatticeRule(DomainSpec(BOX, t, 1), h)
        direct = r.integrate(r.restrict(rule.lattice, f)[r.support])
        assert v == pytest.approx(direct, abs=1e-10)
    from chaoslab.errors import ConfigurationError

    with pytest.raises(ConfigurationError):
        _prefix_path_1d(f, h, k0, np.array([80.0]))


def test_ascl_path_is_normalised_and_shares_horizons(expo1):
    grid, F = ascl_path(expo1, hermite_observable(2), DomainSpec(BOX, 1.0, 1), 100.0, seed=3,
                        horizons=(10.0,))
    assert grid[-1] == 100.0 and 10.0 in grid
    short = log_averages(grid, F, 10.0)
    long_ = log_averages(grid, F, 100.0)
    assert len(short[0].t_grid) < len(long_[0].t_grid)
    assert np.all(np.isfinite(F))


@pytest.mark.slow
def test_ascl_log_average_spread_matches_log_time_ou_theory(expo1):
    # in log time F is close to an OU process with correlation exp(-|du|/2), so
    # Var nu_T(cos) ~ 4 e^{-1} sum_k 1/(2k (2k)!) / log T.  nu_T is far from Gaussian at
    # log T ~ 9 (skewness about -1.5), so 80-path sample deviations scatter by roughly 25%.
    long_run = 4 * math.exp(-1) * math.fsum(1 / (2 * k * math.factorial(2 * k)) for k in range(1, 12))
    T = 1e4
    vals = []
    for s in range(2000, 2080):
        grid, F = ascl_path(expo1, hermite_observable(2), DomainSpec(BOX, 1.0, 1), T, seed=s)
        vals.append(log_averages(grid, F, T, [G_BY_NAME["cos"]])[0].value)
    vals = np.asarray(vals)
    sd_theory = math.sqrt(long_run / math.log(T))
    assert abs(vals.mean() - math.exp(-0.5)) < 4 * sd_theory / math.sqrt(vals.size)
    assert 0.6 < vals.std(ddof=1) / sd_theory < 1.4


@pytest.mark.slow
def test_linear_observable_ks_blocks(expo1):
    passes = 0
    for s in range(20):
        rep = clt_experiment(expo1, hermite_observable(1), DomainSpec(BOX, 1.0, 1), [8.0], 500, seed=100 + s)
        passes += rep.results[0]["KS_pvalue"] > 0.01
    assert passes >= 18


def test_constant_test_function_weights_sum_to_one():
    out = ascl_logaverage(None, None, None, 500.0, 0, g_list=[G_BY_NAME["one"]], forced_F=lambda t: 3.0)
    assert out[0].value == pytest.approx(1.0, abs=1e-14)
    assert math.fsum(out[0].weights) == pytest.approx(1.0, abs=1e-14)
