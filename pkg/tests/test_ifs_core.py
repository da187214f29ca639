import math
from fractions import Fraction
import numpy as np
import pytest
from quantdim.errors import BadIndex, BadProbabilities, InfeasiblePacking, NonContractive
from quantdim.ifs_core import (GeometricIfs, SimilarityMap, compose_word, entropy_series, lyapunov_series,
                               make_finite_ifs, make_geometric_family, truncate, verify_ssc, word_cylinder)
from quantdim.measure import SelfSimilarMeasure


THIRD = Fraction(1, 3)
HALF = Fraction(1, 2)


def cantor():
    return make_finite_ifs([SimilarityMap(THIRD, (0,)), SimilarityMap(THIRD, (2 * THIRD,))], (HALF, HALF))


def geometric():
    return make_geometric_family(HALF, THIRD, 1)


def test_similarity_map_checks():
    with pytest.raises(NonContractive):
        SimilarityMap(1, (0,))
    with pytest.raises(ValueError):
        SimilarityMap(HALF, (0,), ((2,),))
    flip = SimilarityMap(THIRD, (THIRD,), ((-1,),))
    assert not flip.orientation_preserving
    assert flip(Fraction(0)) == THIRD
    assert flip.inverse(flip(Fraction(1, 7))) == Fraction(1, 7)


def test_finite_model_checks():
    with pytest.raises(BadProbabilities):
        make_finite_ifs([SimilarityMap(THIRD, (0,)), SimilarityMap(THIRD, (2 * THIRD,))], (HALF, THIRD))
    with pytest.raises(ValueError):
        make_finite_ifs([SimilarityMap(THIRD, (0,))], (HALF, HALF))
    with pytest.raises(BadIndex):
        cantor().prob(3)


def test_cantor_separation():
    report = verify_ssc(cantor())
    assert report.passed
    assert report.min_gap == THIRD


def test_compose_word_is_exact():
    m, p, s = compose_word(cantor(), (2, 1))
    assert p == Fraction(1, 4)
    assert s == Fraction(1, 9)
    assert m(Fraction(0)) == 2 * THIRD
    assert word_cylinder(cantor(), (2, 1)) == (2 * THIRD, Fraction(7, 9))


def test_transformed_hull():
    lo, hi = cantor().transformed(2, 1).hull()
    assert lo == pytest.approx(1.)
    assert hi == pytest.approx(3.)


def test_geometric_layout():
    model = geometric()
    assert model.shift(1) == 0
    assert model.tail_mass(10) == pytest.approx(2. ** -10)
    assert model.truncation_index(1e-6) == 20
    report = verify_ssc(model, 6)
    assert report.passed
    assert report.tail_gap > 0
    with pytest.raises(InfeasiblePacking):
        GeometricIfs(HALF, HALF, 1)


def test_geometric_series_closed_form():
    model = geometric()
    assert entropy_series(model).value == pytest.approx(-2 * math.log(2), abs=1e-12)
    assert lyapunov_series(model).value == pytest.approx(-2 * math.log(3), abs=1e-12)
    h, l = model.partial_series(80)
    assert h == pytest.approx(-2 * math.log(2), abs=1e-12)
    assert l == pytest.approx(-2 * math.log(3), abs=1e-12)
    partial = model.entropy_series(1e-10, closed_form=False)
    assert -2 * math.log(2) in partial


def test_geometric_head():
    q = Fraction(1, 10)
    model = GeometricIfs(HALF, THIRD, 1, head=(q, q))
    assert model.prob(1) == q
    assert model.prob(3) == Fraction(8, 10) * HALF
    assert model.tail_mass(2) == pytest.approx(.8)
    with pytest.raises(BadProbabilities):
        GeometricIfs(HALF, THIRD, 1, head=(HALF, HALF))


def test_truncate():
    assert truncate(cantor(), 2) == cantor()
    model = truncate(geometric(), 3)
    assert model.size == 3
    assert sum(model.probabilities) == 1
    assert model.prob(1) == Fraction(4, 7)
    with pytest.raises(ValueError):
        truncate(cantor(), 3)


def test_index_from_uniform_matches_probabilities():
    model = geometric()
    u = np.random.default_rng(0).random(20000)
    js = model.index_from_uniform(u)
    assert js.min() >= 1
    assert np.mean(js == 1) == pytest.approx(.5, abs=.02)
    assert np.mean(js == 2) == pytest.approx(.25, abs=.02)


def test_log_potential_floor_is_below_direct_potentials():
    model = cantor()
    floor = model.log_potential_floor()
    assert math.isfinite(floor)
    # the potential at 0 is log(1/3) + E log(2/3 + y/3), about -1.28
    assert floor < -1.2


def test_tail_functionals_match_brute_sums():
    model = geometric()
    js = range(1, 400)
    p = {j: 2. ** -j for j in js}
    for n in (0, 3, 12):
        assert model.tail_moment(n) == pytest.approx(math.fsum(j * p[j] for j in js if j > n), rel=1e-12)
        assert model.tail_power(n, .3) == pytest.approx(math.fsum(p[j] * .3 ** j for j in js if j > n), rel=1e-12)
        assert model.tail_entropy(n) == pytest.approx(math.fsum(p[j] * math.log(p[j]) for j in js if j > n),
                                                      rel=1e-12)
    finite = cantor()
    assert finite.tail_power(0, .5) == pytest.approx(.5 * .5 + .5 * .25)
    assert finite.tail_power(2, .5) == 0.
    assert finite.tail_mass(1) == pytest.approx(.5)


def test_one_map_hull_is_the_fixed_point():
    slow = make_finite_ifs([SimilarityMap(Fraction(99, 100), (Fraction(1, 200),))], (1,))
    assert slow.hull() == (.5, .5)
    assert slow.first_moment() == pytest.approx(.5)
    flip = make_finite_ifs([SimilarityMap(Fraction(99, 100), (Fraction(199, 200),), ((-1,),))], (1,))
    assert flip.hull() == (.5, .5)


def test_hull_with_ratios_near_one():
    maps = [SimilarityMap(Fraction(99, 100), (0,)), SimilarityMap(Fraction(99, 100), (Fraction(1, 100),))]
    model = make_finite_ifs(maps, (HALF, HALF), ((-5, 6),))
    assert model.hull() == pytest.approx((0., 1.), abs=1e-12)


def test_deep_truncation_keeps_its_gaps():
    model = truncate(geometric(), 40)
    assert model.min_gap() > 0
    floor = model.log_potential_floor()
    assert math.isfinite(floor)
    y = SelfSimilarMeasure(model).sample(20000, seed=1).values
    for z in (.2, .55, .97):
        assert floor < np.mean(np.log(np.abs(y - z)))
