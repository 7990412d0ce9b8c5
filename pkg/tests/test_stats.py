import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from lorentzgas.diffusion import LimitCoeffs, StationaryLaw
from lorentzgas.expansion import EnsembleSpec, ensemble_coeffs
from lorentzgas.scatter import ModelParams
from lorentzgas.stats import (
    BadEdges,
    DegenerateSample,
    EmpiricalCdf,
    TooShort,
    WeightedSample,
    discard_burn_in,
    ks_distance,
    moments,
    msd_fit,
    weighted_histogram,
)


def test_weighted_sample_validation():
    with pytest.raises(DegenerateSample):
        WeightedSample([1.0, 2.0], [0.0, 0.0])
    with pytest.raises(DegenerateSample):
        WeightedSample([1.0, 2.0], [1.0, -1.0])
    with pytest.raises(ValueError):
        WeightedSample([1.0, 2.0], [1.0])
    s = WeightedSample.time_weighted([2.0, 4.0], ell_star=2.0)
    assert np.array_equal(s.weights, [1.0, 0.5]) and s.total_weight == 1.5
    assert len(s.concat(s)) == 4


def test_empirical_cdf_ends_at_one():
    cdf = EmpiricalCdf.from_sample(WeightedSample([3.0, 1.0, 2.0, 2.0], [0.1, 0.2, 0.3, 0.4]))
    assert np.array_equal(cdf.support, [1.0, 2.0, 3.0])
    assert np.allclose(cdf.cumulative, [0.2, 0.9, 1.0])
    assert cdf(0.5) == 0.0 and cdf(2.5) == pytest.approx(0.9) and cdf(9.0) == 1.0


# --------------------------------------------------------------------------
# histograms
# --------------------------------------------------------------------------


def test_unit_weights_give_counts():
    h = weighted_histogram(WeightedSample([0.1, 0.2, 1.5, 2.0, -1.0, 5.0]), [0.0, 1.0, 2.0])
    assert np.array_equal(h.masses, [2.0, 2.0])
    assert h.underflow == 1.0 and h.overflow == 1.0


def test_single_bin_sample():
    h = weighted_histogram(WeightedSample(np.full(10, 0.55)), np.linspace(0, 1, 11))
    assert np.count_nonzero(h.masses) == 1 and h.masses[5] == 10.0


def test_exponential_bin_masses():
    n = 1_000_000
    x = np.random.default_rng(0).exponential(1.0, n)
    edges = np.linspace(0.0, 5.0, 26)
    h = weighted_histogram(WeightedSample(x), edges)
    expected = n * np.diff(-np.exp(-edges))
    chi2 = float(np.sum((h.masses - expected) ** 2 / expected))
    # 25 bins; the 99.9% quantile of chi^2_25 is about 52.6
    assert chi2 <= sps.chi2.ppf(0.999, 25)
    assert h.overflow == pytest.approx(n * math.exp(-5.0), rel=0.1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=200), st.integers(0, 2**32 - 1))
def test_histogram_mass_conservation(values, seed):
    w = np.random.default_rng(seed).random(len(values)) + 0.01
    s = WeightedSample(values, w)
    h = weighted_histogram(s, [-3.0, -1.0, 0.0, 2.5, 7.0])
    assert math.fsum(h.masses) + h.underflow + h.overflow == pytest.approx(s.total_weight, rel=1e-12)


@pytest.mark.parametrize("edges", [[1.0], [0.0, 0.0, 1.0], [2.0, 1.0], [0.0, np.inf], [[0.0, 1.0]]])
def test_bad_edges(edges):
    with pytest.raises(BadEdges):
        weighted_histogram(WeightedSample([0.5]), edges)


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov
# --------------------------------------------------------------------------


def test_ks_against_own_support():
    x = np.random.default_rng(1).normal(size=500)
    emp = EmpiricalCdf.from_sample(WeightedSample(x))
    assert ks_distance(emp, emp) <= 1 / x.size + 1e-15


def test_ks_disjoint_supports():
    emp = EmpiricalCdf.from_sample(WeightedSample(np.linspace(10, 11, 100)))
    assert ks_distance(emp, sps.norm.cdf) == pytest.approx(1.0, abs=1e-12)


def test_ks_model_draws():
    n = 100_000
    x = np.random.default_rng(2).gamma(1.7, 2.0, n)
    d = ks_distance(EmpiricalCdf.from_sample(WeightedSample(x)), sps.gamma(1.7, scale=2.0).cdf)
    assert d <= 1.63 / math.sqrt(n)
    assert d == pytest.approx(sps.kstest(x, sps.gamma(1.7, scale=2.0).cdf).statistic, abs=1e-12)


def test_ks_monotone_reparameterisation():
    x = np.random.default_rng(3).exponential(size=2000)
    d1 = ks_distance(EmpiricalCdf.from_sample(WeightedSample(x)), sps.expon.cdf)
    # y = log(x) with the model pushed forward the same way
    d2 = ks_distance(EmpiricalCdf.from_sample(WeightedSample(np.log(x))), lambda y: sps.expon.cdf(np.exp(y)))
    assert d1 == pytest.approx(d2, abs=1e-12)


def test_time_weighting_identity():
    """Per-collision speed draws, reweighted by 1/|p|, follow the time-weighted law."""
    lc = LimitCoeffs.from_expansion(ensemble_coeffs(EnsembleSpec(), ModelParams()), 1.0)
    law = StationaryLaw(lc)
    grid = np.linspace(math.sqrt(2.0), 12.0, 20_001)
    F = law.speed_cdf(grid)
    u = np.random.default_rng(4).random(200_000)
    p = np.interp(u, F, grid)
    d = ks_distance(EmpiricalCdf.from_sample(WeightedSample.time_weighted(p)),
                    lambda v: law.speed_cdf(v, time_weighted=True))
    assert d <= 0.01
    unweighted = ks_distance(EmpiricalCdf.from_sample(WeightedSample(p)),
                             lambda v: law.speed_cdf(v, time_weighted=True))
    assert unweighted > 5 * d


# --------------------------------------------------------------------------
# moments
# --------------------------------------------------------------------------


def test_constant_sample_moments():
    m = moments(WeightedSample(np.full(1000, 1.5)), orders=(1, 2, 3))
    assert np.allclose(m.estimates, [1.5, 2.25, 3.375], rtol=1e-14)
    assert np.all(m.std_errors <= 1e-12)


def test_symmetric_sample_odd_central_moments():
    x = np.random.default_rng(5).uniform(-1, 1, 100_000)
    m = moments(WeightedSample(x), orders=(1, 3, 5), block=1, central=True)
    assert m.estimates[0] == 0.0 or abs(m.estimates[0]) < 1e-12
    assert np.all(np.abs(m.estimates[1:]) <= 3 * m.std_errors[1:])


def test_gaussian_fourth_moment():
    s = 1.7
    x = np.random.default_rng(6).normal(0.0, s, 200_000)
    m = moments(WeightedSample(x), orders=(2, 4), block=1)
    assert abs(m.estimates[0] - s**2) <= 3 * m.std_errors[0]
    assert abs(m.estimates[1] - 3 * s**4) <= 3 * m.std_errors[1]


def test_weighted_moments_equal_repeated_values():
    x = np.repeat([1.0, 2.0, 4.0], 300)
    w = np.repeat([3.0, 1.0, 2.0], 300)
    m = moments(WeightedSample(x, w), orders=(1, 2))
    assert np.allclose(m.estimates, [(3 + 2 + 8) / 6, (3 + 4 + 32) / 6], rtol=1e-13)


def test_moment_errors():
    with pytest.raises(ValueError):
        moments(WeightedSample([1.0] * 300), orders=(0,))
    with pytest.raises(DegenerateSample):
        moments(WeightedSample([1.0] * 150), block=100)
    with pytest.raises(DegenerateSample):
        moments(WeightedSample(np.ones(200), np.r_[np.ones(100), np.zeros(100)]), block=100)


def test_partition_order_insensitive():
    gen = np.random.default_rng(7)
    x, w = gen.normal(size=10_000), gen.random(10_000)
    whole = moments(WeightedSample(x, w), orders=(1, 2, 3), block=1)
    perm = gen.permutation(x.size)
    parts = WeightedSample(x[perm[:4000]], w[perm[:4000]]).concat(WeightedSample(x[perm[4000:]], w[perm[4000:]]))
    shuffled = moments(parts, orders=(1, 2, 3), block=1)
    assert np.allclose(shuffled.estimates, whole.estimates, rtol=1e-10)
    assert np.allclose(shuffled.std_errors, whole.std_errors, rtol=1e-8)


# --------------------------------------------------------------------------
# mean squared displacement
# --------------------------------------------------------------------------


def test_ballistic_exponent():
    t = np.linspace(0, 100, 5000)
    traj = SimpleNamespace(times=t, positions=np.outer(t, [0.6, -0.8]))
    fit = msd_fit(traj)
    assert abs(fit.exponent - 2.0) <= 0.01
    assert np.allclose(fit.msd, fit.lags**2, rtol=1e-9)


def test_too_short():
    with pytest.raises(TooShort):
        msd_fit(SimpleNamespace(times=np.zeros(1), positions=np.zeros((1, 2))))


def test_lattice_random_walk():
    """Unit steps along +-x or +-y each unit time: MSD(t) = t, so D = 1/(2d)."""
    n = 2_000_000
    gen = np.random.default_rng(8)
    moves = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)[gen.integers(0, 4, n)]
    pos = np.vstack([[0.0, 0.0], np.cumsum(moves, axis=0)])
    fit = msd_fit(SimpleNamespace(times=np.arange(n + 1, dtype=float), positions=pos))
    assert abs(fit.exponent - 1.0) <= 0.05
    assert fit.diffusion_constant == pytest.approx(0.25, rel=0.1)


def test_bad_lags():
    t = np.arange(2000, dtype=float)
    traj = SimpleNamespace(times=t, positions=np.zeros((t.size, 2)))
    with pytest.raises(ValueError):
        msd_fit(traj, lags=[0.0, 10.0])
    with pytest.raises(TooShort):
        msd_fit(traj, lags=[1.0, 100.0])


def test_discard_burn_in():
    assert np.array_equal(discard_burn_in(np.arange(100)), np.arange(10, 100))
    assert discard_burn_in(np.arange(9)).size == 9
    assert np.array_equal(discard_burn_in(np.arange(10), 0.5), np.arange(5, 10))
