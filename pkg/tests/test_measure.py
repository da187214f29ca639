import math
from fractions import Fraction
import numpy as np
import pytest
from scipy.stats import kstest
from quantdim.errors import BadProbabilities, UnsupportedOrientation
from quantdim.ifs_core import SimilarityMap, make_finite_ifs, make_geometric_family
from quantdim.measure import DiscreteMeasure, SelfSimilarMeasure, self_similarity_residual


THIRD = Fraction(1, 3)
HALF = Fraction(1, 2)


def cantor():
    return SelfSimilarMeasure(make_finite_ifs([SimilarityMap(THIRD, (0,)), SimilarityMap(THIRD, (2 * THIRD,))],
                                              (HALF, HALF)))


def lebesgue():
    return SelfSimilarMeasure(make_finite_ifs([SimilarityMap(HALF, (0,)), SimilarityMap(HALF, (HALF,))],
                                              (HALF, HALF)))


def test_cantor_distribution():
    mu = cantor()
    assert mu.cdf(.25) == pytest.approx(1 / 3, abs=1e-10)
    assert mu.cdf(.5) == pytest.approx(.5, abs=1e-10)
    assert mu.cdf(-1.) == 0.
    assert mu.cdf(2.) == 1.
    assert mu.quantile(.5) == pytest.approx(2 / 3, abs=1e-9)
    assert mu.quantile(.25) == pytest.approx(2 / 9, abs=1e-9)
    assert mu.mean() == pytest.approx(.5)


def test_integrated_functions():
    mu = cantor()
    lo, hi = mu.integrated_cdf(1.)
    assert lo == pytest.approx(.5) and hi == pytest.approx(.5)
    assert mu.integrated_quantile(1.)[0] == pytest.approx(.5)
    # G(x) = integral of F up to x, and F = 1/2 on the middle gap
    g1 = mu.integrated_cdf(2 / 3)[0]
    g0 = mu.integrated_cdf(1 / 3)[0]
    assert g1 - g0 == pytest.approx(1 / 6, abs=1e-10)


def test_self_similarity_residual():
    assert self_similarity_residual(cantor(), points=50) < 1e-7
    assert self_similarity_residual(SelfSimilarMeasure(make_geometric_family(HALF, THIRD, 1)), points=50) < 1e-6


def test_reflections_are_rejected():
    model = make_finite_ifs([SimilarityMap(THIRD, (THIRD,), ((-1,),)), SimilarityMap(THIRD, (2 * THIRD,))],
                            (HALF, HALF))
    with pytest.raises(UnsupportedOrientation):
        SelfSimilarMeasure(model).cdf(.5)


def test_cell_tree():
    mu = cantor()
    root = mu.root_cell()
    assert root.mass == 1.
    children = mu.split(root)
    assert [c.mass for c in children] == [.5, .5]
    assert children[0].hi == pytest.approx(1 / 3)
    assert children[1].lo == pytest.approx(2 / 3)
    geometric = SelfSimilarMeasure(make_geometric_family(HALF, THIRD, 1))
    cells = geometric.split(geometric.root_cell())
    assert math.fsum(c.mass for c in cells) == pytest.approx(1.)
    assert cells[-1].payload[0] == 'tail'
    assert all(c.log_floor < 0 for c in cells)


def test_sampling_is_deterministic_and_on_the_support():
    mu = cantor()
    a = mu.sample(5000, seed=3)
    b = mu.sample(5000, seed=3)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, mu.sample(5000, seed=4).points)
    x = a.values
    assert np.all((x <= 1 / 3 + 1e-9) | (x >= 2 / 3 - 1e-9))
    assert a.depth_used.min() > 10


def test_lebesgue_sampler_ks():
    x = lebesgue().sample(20000, seed=0).values
    assert kstest(x, 'uniform').statistic < .02


def test_geometric_sampler_ks():
    mu = SelfSimilarMeasure(make_geometric_family(HALF, THIRD, 1))
    x = mu.sample(5000, seed=1).values
    assert kstest(x, np.vectorize(lambda y: mu.cdf(y, 1e-9))).statistic < .03


def test_discrete_measure():
    mu = DiscreteMeasure([0., 1., 1.])
    assert list(mu.atoms) == [0., 1.]
    assert mu.weights[1] == pytest.approx(2 / 3)
    assert mu.cdf(0.) == pytest.approx(1 / 3)
    assert mu.cdf_bounds(1., left=True)[0] == pytest.approx(1 / 3)
    assert mu.quantile(.5) == 1.
    assert mu.mean() == pytest.approx(2 / 3)
    assert mu.integrated_cdf(1.)[0] == pytest.approx(1 / 3)
    with pytest.raises(BadProbabilities):
        DiscreteMeasure([0., 1.], [.5, .6])
    shifted = mu.transformed(2., 1.)
    assert list(shifted.atoms) == [1., 3.]


def test_transformed_measure():
    mu = cantor().transformed(2, 1)
    assert mu.cdf(1.5) == pytest.approx(1 / 3, abs=1e-10)
    assert mu.support_hull() == pytest.approx((1., 3.))


def test_one_map_measure_sits_at_the_fixed_point():
    mu = SelfSimilarMeasure(make_finite_ifs([SimilarityMap(Fraction(99, 100), (Fraction(1, 200),))], (1,)))
    assert mu.is_point_mass
    assert mu.cdf(.499) == 0.
    assert mu.cdf(.5) == 1.
    assert mu.cdf_bounds(.5, left=True) == (0., 0.)
    assert mu.quantile(.3) == .5
    assert mu.integrated_cdf(1.) == (.5, .5)
    assert mu.support_hull() == (.5, .5)


@pytest.mark.slow
def test_samplers_at_full_size():
    count = 100_000
    # the 0.1% critical value of the Kolmogorov-Smirnov statistic
    bound = 1.95 / math.sqrt(count)
    assert kstest(lebesgue().sample(count, seed=3).values, 'uniform').statistic < bound
    mu = cantor()
    x = mu.sample(count, seed=4).values
    assert kstest(x, np.vectorize(lambda y: mu.cdf(y, 1e-9))).statistic < bound
