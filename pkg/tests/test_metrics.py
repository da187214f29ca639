import math
from fractions import Fraction
import numpy as np
import pytest
from scipy.stats import wasserstein_distance
from quantdim.errors import DimMismatch, UnsupportedR
from quantdim.ifs_core import SimilarityMap, make_finite_ifs, make_geometric_family
from quantdim.measure import DiscreteMeasure, SelfSimilarMeasure
from quantdim.metrics import continuity_gap, hutchinson_bound, perturbation_norms, projection_distance, rho1, rho_r
from quantdim.utils import philox


THIRD = Fraction(1, 3)
HALF = Fraction(1, 2)


def cantor_model(shift=0, weight=HALF):
    return make_finite_ifs([SimilarityMap(THIRD, (shift,)), SimilarityMap(THIRD, (2 * THIRD - shift,))],
                           (weight, 1 - weight))


def lebesgue():
    return SelfSimilarMeasure(make_finite_ifs([SimilarityMap(HALF, (0,)), SimilarityMap(HALF, (HALF,))],
                                              (HALF, HALF)))


def test_rho1_lebesgue_to_point_mass():
    result = rho1(lebesgue(), DiscreteMeasure.point_mass(.5), tol=1e-8)
    assert result.value == pytest.approx(.25, abs=1e-8)
    assert result.lower <= .25 <= result.upper
    assert result.converged
    assert result.method == 'cdf_l1'


def test_rho1_translation():
    mu = lebesgue()
    assert rho1(mu, mu.transformed(1., .1), tol=1e-8).value == pytest.approx(.1, abs=1e-8)
    atoms = DiscreteMeasure([0., 1.])
    assert rho1(atoms, atoms.transformed(1., .1)).value == pytest.approx(.1, abs=1e-8)


def test_identical_measures():
    mu = SelfSimilarMeasure(cantor_model())
    assert rho1(mu, SelfSimilarMeasure(cantor_model())).value == 0.
    assert rho_r(mu, mu, 2.).value == 0.


@pytest.mark.parametrize('r', [1., 2., 3.])
def test_point_masses(r):
    result = rho_r(DiscreteMeasure.point_mass(0.), DiscreteMeasure.point_mass(.5), r)
    assert result.value == pytest.approx(.5, abs=1e-8)
    assert result.optimal


def test_rho_r_lebesgue_to_point_mass():
    assert rho_r(lebesgue(), DiscreteMeasure.point_mass(.5), 2., tol=1e-7).value == \
        pytest.approx(math.sqrt(1 / 12), abs=1e-6)


def test_orders_below_one():
    a, b = DiscreteMeasure.point_mass(0.), DiscreteMeasure.point_mass(.5)
    with pytest.raises(UnsupportedR):
        rho_r(a, b, .5)
    with pytest.raises(UnsupportedR):
        rho_r(a, b, 0., allow_upper_bound=True)
    bound = rho_r(a, b, .5, allow_upper_bound=True)
    assert not bound.optimal
    assert bound.value == pytest.approx(.5, abs=1e-8)


def test_discrete_pairs_match_scipy():
    rng = philox(5)
    for _ in range(10):
        x, y = rng.random(7), rng.random(4) * 2
        wx, wy = rng.dirichlet(np.ones(7)), rng.dirichlet(np.ones(4))
        wx[-1], wy[-1] = 1. - wx[:-1].sum(), 1. - wy[:-1].sum()
        a, b = DiscreteMeasure(x, wx), DiscreteMeasure(y, wy)
        expected = wasserstein_distance(x, y, wx, wy)
        assert rho1(a, b, tol=1e-9).value == pytest.approx(expected, abs=1e-8)
        assert rho1(b, a, tol=1e-9).value == pytest.approx(expected, abs=1e-8)
        assert rho_r(a, b, 1., tol=1e-9).value == pytest.approx(expected, abs=1e-8)


def test_rho1_on_cantor_pair_is_symmetric():
    a = SelfSimilarMeasure(cantor_model())
    b = SelfSimilarMeasure(cantor_model(weight=Fraction(3, 5)))
    ab, ba = rho1(a, b, tol=1e-6), rho1(b, a, tol=1e-6)
    assert abs(ab.value - ba.value) <= 2e-6
    assert rho_r(a, b, 1., tol=1e-6).value == pytest.approx(ab.value, abs=2e-6)


def test_perturbation_norms():
    eps = Fraction(1, 100)
    prob_l1, map_sup_l1 = perturbation_norms(cantor_model(), cantor_model(shift=eps))
    assert prob_l1 == pytest.approx(0.)
    assert map_sup_l1 == pytest.approx(2 * float(eps))
    delta = Fraction(1, 20)
    norms = perturbation_norms(cantor_model(), cantor_model(weight=HALF + delta))
    assert norms.prob_l1 == pytest.approx(2 * float(delta))
    assert norms.map_sup_l1 == pytest.approx(0.)
    assert norms.terms == 2
    assert tuple(perturbation_norms(cantor_model(), cantor_model())) == (0., 0.)


def test_perturbation_norms_of_geometric_families():
    a = make_geometric_family(HALF, THIRD, 1)
    b = make_geometric_family(Fraction(11, 20), THIRD, 1)
    norms = perturbation_norms(a, b)
    assert norms.map_sup_l1 == 0.
    assert 0. < norms.prob_l1 < .2


def test_dimension_mismatch():
    plane = make_finite_ifs([SimilarityMap(THIRD, (0, 0)), SimilarityMap(THIRD, (2 * THIRD, 2 * THIRD))],
                            (HALF, HALF))
    with pytest.raises(DimMismatch):
        perturbation_norms(cantor_model(), plane)


def test_projection_distance():
    mu = lebesgue()
    assert projection_distance(mu, [.5]).value == pytest.approx(.25, abs=1e-7)
    assert projection_distance(mu, [.25, .75]).value == pytest.approx(.125, abs=1e-7)
    assert projection_distance(mu, [.5], r=2., tol=1e-7).value == pytest.approx(math.sqrt(1 / 12), abs=1e-6)


@pytest.mark.slow
def test_hutchinson_bound_dominates_rho1():
    base = cantor_model()
    for delta in (Fraction(1, 10), Fraction(1, 40)):
        other = cantor_model(weight=HALF + delta)
        bound = hutchinson_bound(base, other)
        assert bound == pytest.approx(3 * float(delta))
        assert rho1(SelfSimilarMeasure(base), SelfSimilarMeasure(other), tol=1e-6).lower <= bound
    assert hutchinson_bound(base, base) == 0.


@pytest.mark.slow
@pytest.mark.parametrize('N', [5, 10, 20, 40])
@pytest.mark.parametrize('n', [1, 4, 16, 64])
def test_continuity_gap_holds_on_truncations(N, n):
    report = continuity_gap(make_geometric_family(HALF, THIRD, 1), N, n, tol=1e-5)
    assert report.holds
    assert report.lhs <= report.rhs + report.slack


def test_continuity_gap_arguments():
    model = make_geometric_family(HALF, THIRD, 1)
    with pytest.raises(ValueError):
        continuity_gap(model, 1, 4)
    with pytest.raises(ValueError):
        continuity_gap(model, 5, 0)
    with pytest.raises(ValueError):
        continuity_gap(cantor_model(), 3, 4)
