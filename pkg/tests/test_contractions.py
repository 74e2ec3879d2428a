import math

import numpy as np
import pytest
from scipy.special import roots_legendre

from chaoslab.contractions import (ContractionRatio, h_estimate, product_moment_bound,
                                   product_moment_sum, ratio_of_ratios, second_chaos_ratio,
                                   tail_residual, xi_estimate)
from chaoslab.errors import ConfigurationError
from chaoslab.functionals import BOX, DomainSpec, chaos_double_integral
from chaoslab.hermite import polynomial_observable
from chaoslab.specialfn import CovarianceModel


def nystrom_h(k1, k2, t, n=200):
    """h_t(k1,k2) = tr((A B)^2) with kernels A = C^k1, B = C^k2 on [-t/2, t/2] (exponential C)."""
    x, w = roots_legendre(n)
    x, w = 0.5 * t * x, 0.5 * t * w
    C = np.exp(-np.abs(x[:, None] - x[None, :]))
    s = np.sqrt(w)
    A = s[:, None] * C**k1 * s[None, :]
    B = s[:, None] * C**k2 * s[None, :]
    AB = A @ B
    return float(np.trace(AB @ AB))


def test_constant_kernel_is_exact(expo1):
    dom = DomainSpec(BOX, 1.0, 1)
    e = h_estimate(expo1, 2, 3, 2.0, dom, n_samples=1000, seed=1, kernel=lambda r: np.ones_like(r))
    assert e.mean == 16.0 and e.stderr == 0.0


@pytest.mark.parametrize("k1,k2", [(1, 1), (1, 2), (3, 1)])
def test_against_nystrom_oracle(expo1, k1, k2):
    t = 2.0
    ref = nystrom_h(k1, k2, t)
    e = h_estimate(expo1, k1, k2, t, DomainSpec(BOX, 1.0, 1), n_samples=200_000, seed=3)
    assert abs(e.mean - ref) < 3.5 * e.stderr


def test_nystrom_oracle_is_converged():
    # the kernel kink on the diagonal gives O(n^-2) convergence; n=200 is far below MC noise
    assert nystrom_h(1, 1, 2.0, 200) == pytest.approx(nystrom_h(1, 1, 2.0, 800), rel=1e-4)


def test_swapped_estimates_agree_exactly(expo1):
    dom = DomainSpec(BOX, 1.0, 1)
    a = h_estimate(expo1, 1, 3, 3.0, dom, n_samples=5000, seed=8)
    b = h_estimate(expo1, 3, 1, 3.0, dom, n_samples=5000, seed=8, swap_yz=True)
    assert a.mean == b.mean and a.stderr == b.stderr
    c = h_estimate(expo1, 3, 1, 3.0, dom, n_samples=5000, seed=8)
    assert abs(a.mean - c.mean) < 3 * math.hypot(a.stderr, c.stderr)


def test_even_powers_nonnegative_and_reproducible(berry2):
    e = h_estimate(berry2, 2, 2, 5.0, n_samples=3000, seed=2)
    assert e.mean >= -3 * e.stderr
    assert e == h_estimate(berry2, 2, 2, 5.0, n_samples=3000, seed=2)
    assert e.to_dict()["n_samples"] == 3000


def test_argument_checks(expo1):
    with pytest.raises(ConfigurationError):
        h_estimate(expo1, 1, 1, 2.0, n_samples=50)
    with pytest.raises(ConfigurationError):
        h_estimate(expo1, 0, 1, 2.0, n_samples=500)
    with pytest.raises(ConfigurationError):
        h_estimate(CovarianceModel.berry(2), 1, 1, 2.0, DomainSpec(BOX, 1.0, 1), n_samples=500)
    with pytest.raises(ConfigurationError):
        xi_estimate(expo1, polynomial_observable([0, 0, 1]).expansion, 2.0, 3, K_cap=3, n_samples=500)


def test_cauchy_schwarz_chain(expo1):
    # sqrt h_t(r, q-r) <= int int C^q over (tD)^2, up to MC noise
    t = 4.0
    dom = DomainSpec(BOX, t, 1)
    for q in (2, 3, 4):
        bound = chaos_double_integral(expo1, q, dom)[0]
        for r in range(1, q):
            e = h_estimate(expo1, r, q - r, t, dom, n_samples=100_000, seed=q * 10 + r)
            root_se = e.stderr / (2 * math.sqrt(e.mean))
            assert math.sqrt(e.mean) <= bound + 3 * root_se


def test_xi_supremum_properties(expo1):
    e = polynomial_observable([0, 0, 1, 0.3]).expansion
    x3 = xi_estimate(expo1, e, 4.0, 3, K_cap=6, n_samples=20_000, seed=4, domain=DomainSpec(BOX, 1.0, 1))
    assert all(x3.value >= v for v in x3.members.values())
    assert x3.members[x3.argmax] == x3.value
    x5 = xi_estimate(expo1, e, 4.0, 5, K_cap=6, n_samples=20_000, seed=4, domain=DomainSpec(BOX, 1.0, 1))
    # subset supremum on shared samples
    assert x5.value <= x3.value
    assert x3.cap_residual == pytest.approx(tail_residual(expo1, DomainSpec(BOX, 4.0, 1), 6, x3.sigma2))


def test_tail_residual_dominates_uncapped_terms(expo1):
    # the analytic bound covers an explicitly estimated pair beyond the cap
    dom = DomainSpec(BOX, 4.0, 1)
    sigma2 = 1.0
    resid = tail_residual(expo1, dom, 4, sigma2)
    for k1, k2 in ((1, 4), (2, 3), (3, 3)):
        e = h_estimate(expo1, k1, k2, 4.0, dom, n_samples=20_000, seed=1)
        assert math.sqrt(e.mean) / sigma2 <= resid


def test_xi_decays_for_berry(berry2):
    e = polynomial_observable([0, 0, 1, 0, 0.1]).expansion
    x8 = xi_estimate(berry2, e, 8.0, 5, n_samples=200_000, seed=1)
    x32 = xi_estimate(berry2, e, 32.0, 5, n_samples=200_000, seed=1)
    assert x32.value < x8.value
    assert x8.inconclusive == (x8.cap_residual > x8.value)


def test_ratio_helpers():
    from chaoslab.contractions import ContractionEstimate

    a = ContractionRatio(1.0, ContractionEstimate(1, 1, 1.0, 4.0, 0.4, 100, 0), 2.0)
    b = ContractionRatio(2.0, ContractionEstimate(1, 1, 2.0, 8.0, 0.8, 100, 0), 4.0)
    assert a.ratio == 1.0 and b.ratio == 0.5
    r, se = ratio_of_ratios(a, b)
    assert r == 0.5 and se == pytest.approx(0.5 * math.hypot(0.1, 0.1))


def test_second_chaos_ratio_exponential(expo1):
    cr = second_chaos_ratio(expo1, 2.0, n_samples=100_000, seed=5, domain=DomainSpec(BOX, 1.0, 1))
    ref = nystrom_h(1, 1, 2.0) / chaos_double_integral(expo1, 2, DomainSpec(BOX, 2.0, 1))[0] ** 2
    assert abs(cr.ratio - ref) < 3.5 * cr.stderr


def test_product_moment_inequality_small():
    # E[H_p^2 H_q^2] via the product formula; p = q = 1 gives E Z^4 = 3
    assert product_moment_sum(1, 1) == 3
    assert product_moment_sum(2, 0) == 2
    for p in range(6):
        for q in range(6):
            assert product_moment_sum(p, q) <= product_moment_bound(p, q)
