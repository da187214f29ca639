import math
from fractions import Fraction
import numpy as np
import pytest
from quantdim.antichain import Codebook
from quantdim.errors import DegenerateSample, ToleranceUnreachable
from quantdim.ifs_core import SimilarityMap, make_finite_ifs, make_geometric_family, truncate
from quantdim.measure import DiscreteMeasure, SelfSimilarMeasure
from quantdim.quantizer import (CurveEntry, ErrorBracket, ErrorCurve, LogLloyd, build_codebook, error_curve,
                                gme_exact, gme_mc, lloyd_log, lr_error)


THIRD = Fraction(1, 3)
HALF = Fraction(1, 2)
LEBESGUE_CENTER = -math.log(2) - 1


def cantor():
    return SelfSimilarMeasure(make_finite_ifs([SimilarityMap(THIRD, (0,)), SimilarityMap(THIRD, (2 * THIRD,))],
                                              (HALF, HALF)), name='cantor')


def lebesgue():
    return SelfSimilarMeasure(make_finite_ifs([SimilarityMap(HALF, (0,)), SimilarityMap(HALF, (HALF,))],
                                              (HALF, HALF)), name='lebesgue')


def test_bracket_checks():
    with pytest.raises(ValueError):
        ErrorBracket(1., 0., 'exact', 1)
    bracket = ErrorBracket(-1., 1., 'exact', 1)
    assert bracket.midpoint == 0.
    assert bracket.width == 2.
    assert .5 in bracket
    with pytest.raises(ValueError):
        ErrorCurve((CurveEntry(4, bracket, 4), CurveEntry(4, bracket, 4)), 'x', 'grid/exact')


def test_gme_exact_lebesgue():
    mu = lebesgue()
    center = gme_exact(mu, [.5], tol=1e-7)
    assert center.converged
    assert center.width <= 1e-7
    assert LEBESGUE_CENTER in center
    assert gme_exact(mu, Codebook.explicit([0.]), tol=1e-7).midpoint == pytest.approx(-1., abs=1e-6)
    far = gme_exact(mu, [11.], tol=1e-7)
    assert math.log(10) <= far.lower <= far.upper <= math.log(11)


def test_gme_exact_is_covariant():
    assert gme_exact(lebesgue().transformed(2., 1.), [2.], tol=1e-7).midpoint == pytest.approx(-1., abs=1e-6)
    assert gme_exact(lebesgue().transformed(1., 5.), [5.5], tol=1e-7).midpoint == \
        pytest.approx(LEBESGUE_CENTER, abs=1e-6)
    mu = cantor()
    base = gme_exact(mu, [1 / 6, 5 / 6], tol=1e-8).midpoint
    scaled = gme_exact(mu.transformed(3., 0.), [.5, 2.5], tol=1e-8).midpoint
    assert scaled - base == pytest.approx(math.log(3), abs=1e-6)


def test_gme_exact_budget():
    bracket = gme_exact(lebesgue(), [.5], tol=1e-12, max_cells=50)
    assert not bracket.converged
    assert bracket.cells == 50
    with pytest.raises(ToleranceUnreachable):
        gme_exact(lebesgue(), [.5], tol=1e-12, max_cells=50, strict=True)
    with pytest.raises(ValueError):
        gme_exact(lebesgue(), [.5], tol=0.)


def test_degenerate_codebooks():
    mu = DiscreteMeasure([0., 1.])
    bracket = gme_exact(mu, [0.])
    assert bracket.degenerate
    assert bracket.midpoint == -math.inf
    with pytest.raises(DegenerateSample):
        gme_mc(mu, [0.], samples=1000)
    assert gme_exact(mu, [.5]).midpoint == pytest.approx(math.log(.5))


def test_gme_mc_agrees_with_exact():
    mc = gme_mc(lebesgue(), [.5], samples=20000, seed=1)
    assert mc.method == 'mc'
    assert mc.midpoint == pytest.approx(LEBESGUE_CENTER, abs=.05)
    assert mc.width < .05
    assert gme_mc(lebesgue(), [.5], samples=20000, seed=1) == mc
    with pytest.raises(ValueError):
        gme_mc(lebesgue(), [.5], samples=999)


def test_lr_error():
    mu = lebesgue()
    assert lr_error(mu, [.5], 2, tol=1e-8).midpoint == pytest.approx(math.sqrt(1 / 12), abs=1e-5)
    assert lr_error(mu, [.5], 1, tol=1e-8).midpoint == pytest.approx(.25, abs=1e-6)
    small = lr_error(mu, [.5], .01, tol=1e-7).midpoint
    assert small == pytest.approx(math.exp(LEBESGUE_CENTER), rel=1e-2)
    mc = lr_error(mu, [.5], 2, method='mc', samples=20000, seed=0)
    assert mc.midpoint == pytest.approx(math.sqrt(1 / 12), abs=.01)
    with pytest.raises(ValueError):
        lr_error(mu, [.5], 0)
    with pytest.raises(ValueError):
        lr_error(mu, [.5], 2, method='grid')


def test_antichain_curve_on_cantor():
    curve = error_curve(cantor(), [2, 4, 8, 16, 32], tol=1e-7)
    assert curve.measure_id == 'cantor'
    assert curve.method == 'antichain/exact'
    assert [e.card for e in curve] == [2, 4, 8, 16, 32]
    uppers = [e.bracket.upper for e in curve]
    assert all(b <= a for a, b in zip(uppers, uppers[1:]))
    mids = [e.bracket.midpoint for e in curve]
    for a, b in zip(mids, mids[1:]):
        assert b - a == pytest.approx(-math.log(3), abs=1e-5)
    gaps = [e.gap for e in curve]
    assert max(gaps) - min(gaps) < 1e-5


def test_antichain_curve_on_geometric_family():
    mu = SelfSimilarMeasure(make_geometric_family(HALF, THIRD, 1))
    curve = error_curve(mu, [4, 8, 16], tol=1e-6)
    assert all(e.card <= e.n for e in curve)
    assert all(e.reference is not None for e in curve)


def test_grid_curve_closed_form():
    curve = error_curve(lebesgue(), [1, 2, 4, 8], strategy='grid', tol=1e-7)
    for entry in curve:
        assert entry.bracket.midpoint == pytest.approx(-math.log(2 * entry.n) - 1, abs=1e-6)
        assert entry.gap is None
    assert curve.rows()[0][:2] == (1, 0.)


def test_error_curve_arguments():
    with pytest.raises(ValueError):
        error_curve(lebesgue(), [])
    with pytest.raises(ValueError):
        error_curve(lebesgue(), [4, 2])
    with pytest.raises(ValueError):
        error_curve(lebesgue(), [2], strategy='random')
    with pytest.raises(ValueError):
        error_curve(lebesgue(), [2], eval_method='quadrature')
    with pytest.raises(ValueError):
        build_codebook(DiscreteMeasure([0., 1.]), 2, 'antichain', 1e-6, 0, 10, 1e-6)


def test_lloyd_on_lebesgue():
    codebook, history = lloyd_log(lebesgue(), 2, iters=10, tol=1e-6)
    assert codebook.provenance == 'lloyd'
    assert list(codebook.values) == pytest.approx([.25, .75], abs=.01)
    assert history.method == 'lloyd-iterations'
    uppers = [e.bracket.upper for e in history]
    assert all(b <= a for a, b in zip(uppers, uppers[1:]))
    assert history.entries[-1].bracket.midpoint == pytest.approx(-math.log(4) - 1, abs=1e-3)
    single, _ = lloyd_log(lebesgue(), 1, iters=5)
    assert list(single.values) == pytest.approx([.5], abs=1e-3)


def test_lloyd_on_cantor_improves_the_start():
    lloyd = LogLloyd(cantor(), 2, max_steps=20, tol=1e-6)
    points, bracket = lloyd.run(verbose=False)
    assert bracket.upper <= lloyd.history[0].upper
    assert points[0] <= 1 / 3 and points[1] >= 2 / 3
    assert 'LOG LLOYD' in str(lloyd)
    with pytest.raises(ValueError):
        LogLloyd(cantor(), 2, initial=[.1])
    with pytest.raises(ValueError):
        LogLloyd(cantor(), 0)


def test_antichain_lloyd_never_worse():
    mu = cantor()
    plain, _ = build_codebook(mu, 8, 'antichain', 1e-6, 0, 10, 1e-6)
    polished, reference = build_codebook(mu, 8, 'antichain+lloyd', 1e-6, 0, 10, 1e-6)
    assert polished.provenance == 'antichain+lloyd'
    assert reference == pytest.approx(3 * math.log(1 / 3))
    assert gme_exact(mu, polished).upper <= gme_exact(mu, plain).upper + 1e-9


def test_curve_is_independent_of_workers():
    one = error_curve(cantor(), [2, 4, 8], tol=1e-6, workers=1)
    two = error_curve(cantor(), [2, 4, 8], tol=1e-6, workers=2)
    assert [e.bracket for e in one] == [e.bracket for e in two]
    assert np.isfinite([e.bracket.lower for e in one]).all()


def test_gme_exact_on_a_deep_truncation():
    model = make_geometric_family(HALF, THIRD, 1)
    deep = gme_exact(SelfSimilarMeasure(truncate(model, 40)), [.5], tol=1e-6)
    full = gme_exact(SelfSimilarMeasure(model), [.5], tol=1e-6)
    assert deep.converged and full.converged
    assert math.isfinite(deep.lower)
    assert deep.midpoint == pytest.approx(full.midpoint, abs=1e-4)


@pytest.mark.slow
def test_mc_interval_covers_the_exact_value():
    exact = gme_exact(lebesgue(), [.5], tol=1e-9)
    covered = sum(exact.midpoint in gme_mc(lebesgue(), [.5], samples=2000, seed=seed) for seed in range(100))
    assert covered >= 90


@pytest.mark.slow
@pytest.mark.parametrize('model', [
    make_finite_ifs([SimilarityMap(THIRD, (0,)), SimilarityMap(THIRD, (2 * THIRD,))], (HALF, HALF)),
    make_finite_ifs([SimilarityMap(Fraction(1, 4), (0,)), SimilarityMap(Fraction(1, 5), (HALF,))],
                    (Fraction(3, 5), Fraction(2, 5))),
    make_finite_ifs([SimilarityMap(Fraction(1, 4), (0,)), SimilarityMap(Fraction(1, 5), (THIRD,)),
                     SimilarityMap(Fraction(1, 6), (2 * THIRD,))], (HALF, THIRD, Fraction(1, 6))),
])
def test_antichain_gap_stays_below_the_centre_potential(model):
    mu = SelfSimilarMeasure(model)
    # each cylinder scales the error of its centre, so the gap never exceeds the potential at the centre
    ceiling = gme_exact(mu, [.5], tol=1e-7).upper
    curve = error_curve(mu, [5, 20, 80, 320, 1280, 2000], tol=1e-7)
    for entry in curve:
        assert entry.card <= entry.n
        assert entry.bracket.lower - entry.reference <= ceiling + 1e-7
