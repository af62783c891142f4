import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rrgff import extremes as ex
from rrgff import gff
from rrgff.errors import InvalidParameters
from rrgff.seeding import stream


def test_rescaling_constants():
    c = ex.rescaling_constants(2 ** 16, 3)
    L = math.log(2 ** 16)
    a = math.sqrt(2 * L) - (math.log(L) + math.log(4 * math.pi)) / (2 * math.sqrt(2 * L))
    assert c.a_n == pytest.approx(a, rel=1e-14)
    assert c.b_n * c.a_n == pytest.approx(1.0)
    assert c.sigma_r == pytest.approx(math.sqrt(2))
    with pytest.raises(InvalidParameters):
        ex.rescaling_constants(2, 3)


def test_rescaling_makes_n_tail_near_one():
    # N * P(Z > a_N) -> 1 slowly
    for n in (10 ** 4, 10 ** 8):
        c = ex.rescaling_constants(n, 3)
        assert n * ex.gaussian_tail(c.a_n) == pytest.approx(1.0, abs=0.15)


@settings(max_examples=60)
@given(x=st.floats(0.05, 3.0))
def test_kolmogorov_sf_matches_scipy(x):
    assert ex.kolmogorov_sf(x) == pytest.approx(stats.kstwobign.sf(x), abs=1e-12)


def test_ks_statistic_matches_scipy(rng):
    x = rng.gumbel(size=500)
    d = ex.ks_statistic(x, ex.gumbel_cdf)
    assert d == pytest.approx(stats.kstest(x, "gumbel_r").statistic, abs=1e-12)
    res = ex.ks_gumbel(x)
    assert res.pvalue > 1e-3
    with pytest.raises(InvalidParameters):
        ex.ks_gumbel(x[:10])


def test_iid_maxima_follow_exact_finite_n_law():
    # the pipeline's rescaling is exact: iid maxima match Phi(a + b x)^N, not yet Gumbel
    n = 4096
    c = ex.rescaling_constants(n, 3)
    X = c.sigma_r * gff.sample_iid_batch(n, 21, range(3000))
    m = ex.rescale(X, c).max(axis=1)

    def exact(x):
        return np.exp(n * np.log1p(-ex.gaussian_tail(c.a_n + c.b_n * x)))

    d = ex.ks_statistic(m, exact)
    assert ex.kolmogorov_sf(math.sqrt(m.size) * d) > 1e-3


def test_sampled_ppp_passes_all_tests():
    rng = stream(3, 0)
    procs = [ex.ExtremalProcess(p, p.max(), lower=-5.0) for p in (ex.sample_ppp(rng) for _ in range(3000))]
    assert ex.ks_gumbel([p.max_point for p in procs]).pvalue > 1e-3
    for t in ex.ppp_interval_test(procs):
        assert t["pvalue"] > 1e-3
        assert t["mean_count"] == pytest.approx(t["target_mean"], rel=0.1)
    for phi in ex.canonical_test_functions():
        lr = ex.laplace_functional(procs, phi)
        assert lr.gap < 4 * lr.stderr + 1e-3


def test_laplace_target_closed_form():
    # phi = h * 1{x > 0} in the limit: exp(-(1 - e^-h))
    phi = ex.ramp(0.0, 1e-6, 2.0)
    assert ex.laplace_target(phi) == pytest.approx(math.exp(-(1 - math.exp(-2))), rel=1e-5)


def test_smooth_step_and_ramp():
    s = ex.smooth_step(np.linspace(-1, 2, 301))
    assert s[0] == 0 and s[-1] == 1 and np.all(np.diff(s) >= 0)
    for phi in ex.canonical_test_functions():
        phi.validate()
    bad = ex.TestFunction(lambda x: -np.ones_like(x), 0, 1, 1)
    with pytest.raises(InvalidParameters):
        bad.validate()


def test_poisson_chi2(rng):
    x = rng.poisson(1.7, size=2000)
    chi2, p, df = ex.poisson_chi2(x, 1.7)
    assert p > 1e-3 and df >= 3
    assert ex.poisson_chi2(x + 2, 1.7)[1] < 1e-6


def test_extract_and_truncate():
    c = ex.rescaling_constants(100, 3)
    v = np.linspace(-3, 3, 100)
    p = ex.extract_process(v, c)
    assert p.size == 100 and p.max_point == pytest.approx((3 / c.sigma_r - c.a_n) / c.b_n)
    q = p.truncate(-2.0)
    assert q.size == 100 and q.count(-1, np.inf) == p.count(-1, np.inf)
    with pytest.raises(InvalidParameters):
        q.count(-3, 0)
    mask = np.zeros(100, bool)
    mask[::2] = True
    assert ex.extract_process(v, c, mask=mask).points.size == 50
    with pytest.raises(InvalidParameters):
        ex.extract_process(v, c, mask=mask[:10])
    # per-vertex normalisation by a variance vector
    pn = ex.extract_process(v, c, normalize=np.full(100, 4.0))
    assert pn.max_point == pytest.approx((1.5 - c.a_n) / c.b_n)


def test_interval_validation():
    with pytest.raises(InvalidParameters):
        ex.ppp_interval_test([], [(0, 1)])
    with pytest.raises(InvalidParameters):
        ex.ppp_interval_test(np.zeros((3, 4)), [(-np.inf, 0)])
