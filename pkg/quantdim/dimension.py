from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Sequence
import numpy as np
from scipy.stats import kendalltau, linregress
from .antichain import Codebook
from .errors import HypothesisViolated, IllConditioned
from .ifs_core import GeometricIfs, IfsModel, SeriesValue, SimilarityMap, make_finite_ifs, truncate
from .measure import DiscreteMeasure, SelfSimilarMeasure
from .metrics import MetricResult, hutchinson_bound, perturbation_norms, rho1
from .quantizer import ErrorCurve, error_curve, gme_exact
from .utils import parallel_map


logger = logging.getLogger(__name__)

DEFAULT_THETAS = tuple(0.1 * 2. ** -i for i in range(9))
MODES = ('prob', 'ratio', 'both')


@dataclass(frozen=True)
class TrendDiagnostic:
    t: float
    values: tuple  # log n + t e_n over the window
    tau: float  # Kendall rank correlation of the values with n


@dataclass(frozen=True)
class DimensionEstimate:
    dimension: float
    slope: float  # fitted slope of -e_n against log n, the reciprocal of the dimension
    intercept: float
    window: tuple  # (n_min, n_max)
    residual: float
    stderr: float
    diagnostics: tuple  # TrendDiagnostic below and above the estimate

    @property
    def below(self) -> TrendDiagnostic:
        return self.diagnostics[0]

    @property
    def above(self) -> TrendDiagnostic:
        return self.diagnostics[1]


@dataclass(frozen=True)
class StabilityRow:
    theta: float
    dimension: float
    dimension_bound: float
    prob_l1: float
    map_sup_l1: float
    hutchinson: float
    rho1: MetricResult | None
    delta: float  # |D(theta) - D(base)|
    violations: tuple = field(default_factory=tuple)

    @property
    def flagged(self) -> bool:
        return bool(self.violations)


@dataclass(frozen=True)
class ScheduleBound:
    order: int  # prefix length N
    prob_inf: float  # inf over the schedule of min_{j <= N} p_j
    ratio_inf: float
    prob_reference: float  # the same minima for the base model
    ratio_reference: float
    holds: bool


@dataclass(frozen=True)
class DiscontinuityRow:
    m: int
    rho1: MetricResult
    expected: float
    degenerate: bool
    dimension: float


@dataclass(frozen=True)
class DiscontinuityReport:
    placement: str
    rows: tuple
    lebesgue: DimensionEstimate


def analytic_dimension(ifs: IfsModel, tol: float = 1e-12) -> SeriesValue:
    """
    sum p_j log p_j / sum p_j log s_j, with the series tails propagated through the ratio.
    """
    entropy = ifs.entropy_series(tol)
    lyapunov = ifs.lyapunov_series(tol)
    if entropy.value == 0. and entropy.tail_bound == 0.:
        return SeriesValue(0., 0., entropy.terms_used)
    value = entropy.value / lyapunov.value
    if lyapunov.value + lyapunov.tail_bound >= 0:
        raise ValueError('Lyapunov series is not bounded away from zero')
    corners = [(entropy.value + e) / (lyapunov.value + l)
               for e in (-entropy.tail_bound, entropy.tail_bound)
               for l in (-lyapunov.tail_bound, lyapunov.tail_bound)]
    bound = max(abs(c - value) for c in corners)
    return SeriesValue(value, bound, max(entropy.terms_used, lyapunov.terms_used))


def _t_value(n: int, ifs: IfsModel) -> tuple[int, float]:
    return n, analytic_dimension(truncate(ifs, n)).value


def t_sequence(ifs: IfsModel, n_list: Sequence[int], workers: int = 1) -> list[tuple[int, float]]:
    """
    Dimensions of the truncated and renormalized systems, (N, t_N) per N.
    """
    n_list = list(n_list)
    if any(not isinstance(n, int) or n < 1 for n in n_list):
        raise ValueError('Truncation orders must be positive integers')
    return parallel_map(partial(_t_value, ifs=ifs), n_list, workers)


def _window(curve: ErrorCurve, window: tuple | None) -> list:
    entries = list(curve)
    if window is None:
        return entries[len(entries) // 2:]
    lo, hi = window
    return [e for e in entries if lo <= e.n <= hi]


def estimate_dimension(curve: ErrorCurve, window: tuple | None = None, delta: float = 0.1) -> DimensionEstimate:
    """
    Least-squares fit of -e_n against log n; the dimension is the reciprocal slope.

    :param curve: error curve with finite brackets
    :param window: inclusive (n_min, n_max); the top half of the curve when omitted
    :param delta: relative offset of the trend diagnostics, which evaluate
                  log n + t e_n at t = (1 - delta) D and (1 + delta) D
    :return: estimate with regression residual and diagnostics
    """
    if not 0 < delta < 1:
        raise ValueError('Diagnostic offset must lie in (0, 1)')
    entries = _window(curve, window)
    if len(entries) < 4:
        raise IllConditioned(f'Regression window holds {len(entries)} entries, at least 4 are needed')
    if any(e.bracket.degenerate or not math.isfinite(e.bracket.lower) or not math.isfinite(e.bracket.upper)
           for e in entries):
        raise IllConditioned('Regression window holds unbounded error brackets')
    first, last = entries[0].bracket, entries[-1].bracket
    if last.upper >= first.lower:
        raise IllConditioned('Error brackets overlap across the regression window')
    x = np.log([e.n for e in entries])
    e_hat = np.array([e.bracket.midpoint for e in entries])
    fit = linregress(x, -e_hat)
    if not fit.slope > 0:
        raise IllConditioned(f'Non-positive regression slope {fit.slope}')
    dimension = 1. / fit.slope
    residual = float(np.max(np.abs(-e_hat - (fit.intercept + fit.slope * x))))
    diagnostics = []
    for t in ((1. - delta) * dimension, (1. + delta) * dimension):
        values = x + t * e_hat
        tau, _ = kendalltau(x, values)
        diagnostics.append(TrendDiagnostic(t, tuple(values.tolist()), float(tau)))
    return DimensionEstimate(dimension, float(fit.slope), float(fit.intercept), (entries[0].n, entries[-1].n),
                             residual, float(fit.stderr), tuple(diagnostics))


def perturbed_model(base: GeometricIfs, theta: float, mode: str = 'prob') -> GeometricIfs:
    """
    Geometric family with a -> a + theta (mode prob), b -> b (1 + theta) (mode ratio) or both.
    """
    if not isinstance(base, GeometricIfs):
        raise ValueError('Perturbation schedules act on geometric families')
    if mode not in MODES:
        raise ValueError(f'Unknown perturbation mode {mode}')
    if theta == 0:
        return base
    a = base.a + theta if mode in ('prob', 'both') else base.a
    b = base.b * (1 + theta) if mode in ('ratio', 'both') else base.b
    return GeometricIfs(a, b, base.c, base.head)


def counter_schedule(ns: Sequence[int] = tuple(2 ** i for i in range(11)), b=Fraction(1, 3),
                     c=1) -> list[tuple[int, GeometricIfs]]:
    """
    Models with p_1 = p_2 = 1/(n+2) and a geometric tail of ratio t = n/(n+2) after them.
    The two leading probabilities vanish as n grows, so no positive lower bound on the
    probabilities holds over the schedule.
    """
    models = []
    for n in ns:
        if not isinstance(n, int) or n < 1:
            raise ValueError('Schedule indices must be positive integers')
        t = Fraction(n, n + 2)
        q = Fraction(1, n + 2)
        models.append((n, GeometricIfs(t / (1 + t), b, c, head=(q, q))))
    return models


def _prefix_minima(model: IfsModel, order: int) -> tuple[int, float, float]:
    order = min(order, model.size) if model.is_finite else order
    p_min = min(float(model.prob(j)) for j in range(1, order + 1))
    s_min = min(float(model.ratio(j)) for j in range(1, order + 1))
    return order, p_min, s_min


def _hypothesis_violations(model: IfsModel, check_orders: Sequence[int], prob_floor: float,
                           ratio_floor: float) -> tuple:
    violations = []
    for order in check_orders:
        order, p_min, s_min = _prefix_minima(model, order)
        if p_min < prob_floor:
            violations.append(f'min p_j over j <= {order} is {p_min} < {prob_floor}')
        if s_min < ratio_floor:
            violations.append(f'min s_j over j <= {order} is {s_min} < {ratio_floor}')
    return tuple(violations)


def schedule_bounds(base: IfsModel, models: Sequence[tuple], check_orders: Sequence[int] = (1, 2, 3, 4),
                    fraction: float = .5) -> tuple:
    """
    Uniform lower bounds over a whole schedule: for each N, the infimum over all entries of
    min_{j <= N} p_j and min_{j <= N} s_j. A schedule converging to the base model keeps
    these infima near the base model's own minima; an infimum below fraction times the base
    minimum marks a schedule whose bounds degenerate.

    :param base: model the schedule approaches
    :param models: (theta, model) pairs
    :param check_orders: prefix lengths N
    :param fraction: accepted share of the base minima, in (0, 1]
    :return: one ScheduleBound per prefix length
    """
    if not models:
        raise ValueError('Schedule must not be empty')
    if not 0 < fraction <= 1:
        raise ValueError('Accepted fraction must lie in (0, 1]')
    bounds = []
    for order in check_orders:
        if not isinstance(order, int) or order < 1:
            raise ValueError('Prefix lengths must be positive integers')
        _, p_ref, s_ref = _prefix_minima(base, order)
        minima = [_prefix_minima(model, order) for _, model in models]
        p_inf = min(p for _, p, _ in minima)
        s_inf = min(s for _, _, s in minima)
        holds = p_inf >= fraction * p_ref and s_inf >= fraction * s_ref
        bounds.append(ScheduleBound(order, p_inf, s_inf, p_ref, s_ref, holds))
    return tuple(bounds)


def _stability_row(item: tuple, base: IfsModel, base_dimension: float, check_orders: Sequence[int],
                   prob_floor: float, ratio_floor: float, with_rho: bool, tol: float) -> StabilityRow:
    theta, model = item
    dim = analytic_dimension(model)
    prob_l1, map_sup_l1 = perturbation_norms(base, model)
    distance = None
    if with_rho and model.dim == 1:
        distance = rho1(SelfSimilarMeasure(base), SelfSimilarMeasure(model), tol)
    violations = _hypothesis_violations(model, check_orders, prob_floor, ratio_floor)
    return StabilityRow(float(theta), dim.value, dim.tail_bound, prob_l1, map_sup_l1,
                        hutchinson_bound(base, model), distance, abs(dim.value - base_dimension), violations)


def stability_experiment(base: IfsModel, thetas: Sequence[float] | None = None, mode: str = 'prob',
                         models: Sequence[tuple] | None = None, check_orders: Sequence[int] = (1, 2, 3, 4),
                         prob_floor: float = 1e-3, ratio_floor: float = 1e-12, with_rho: bool = True,
                         tol: float = 1e-6, workers: int = 1, strict: bool = False,
                         schedule_fraction: float = .5) -> list[StabilityRow]:
    """
    Dimension, perturbation norms and distances to the base measure along a schedule.

    :param base: reference model
    :param thetas: perturbation sizes applied with perturbed_model
    :param mode: prob, ratio or both
    :param models: explicit (theta, model) pairs used instead of thetas
    :param check_orders: prefix lengths N at which inf p_j and inf s_j over j <= N are checked
    :param prob_floor: smallest accepted probability within the checked prefixes
    :param ratio_floor: smallest accepted ratio within the checked prefixes
    :param with_rho: also compute the exact rho_1 to the base measure
    :param tol: rho_1 tolerance
    :param workers: processes evaluating the rows
    :param strict: raise HypothesisViolated instead of flagging rows or logging a failed schedule bound
    :param schedule_fraction: accepted share of the base minima for the schedule-wide bounds, see schedule_bounds
    :return: one row per schedule entry, flagged rows included
    """
    if models is None:
        models = [(theta, perturbed_model(base, theta, mode)) for theta in (thetas or DEFAULT_THETAS)]
    models = list(models)
    if not models:
        raise ValueError('Schedule must not be empty')
    if prob_floor <= 0 or ratio_floor <= 0:
        raise ValueError('Hypothesis floors must be positive')
    job = partial(_stability_row, base=base, base_dimension=analytic_dimension(base).value,
                  check_orders=tuple(check_orders), prob_floor=prob_floor, ratio_floor=ratio_floor,
                  with_rho=with_rho, tol=tol)
    rows = parallel_map(job, list(models), workers)
    for row in rows:
        if row.flagged:
            message = f'Schedule entry {row.theta} breaks the lower bounds: {"; ".join(row.violations)}'
            if strict:
                raise HypothesisViolated(message)
            logger.warning(message)
    for bound in schedule_bounds(base, models, check_orders, schedule_fraction):
        if not bound.holds:
            message = (f'Schedule infimum over j <= {bound.order} is p = {bound.prob_inf}, s = {bound.ratio_inf} '
                       f'against base minima p = {bound.prob_reference}, s = {bound.ratio_reference}')
            if strict:
                raise HypothesisViolated(message)
            logger.warning(message)
    return rows


def dyadic_lebesgue() -> SelfSimilarMeasure:
    """ Lebesgue measure on [0, 1] as the invariant measure of x/2 and x/2 + 1/2 """
    half = Fraction(1, 2)
    model = make_finite_ifs([SimilarityMap(half, (0,)), SimilarityMap(half, (half,))], (half, half))
    return SelfSimilarMeasure(model, name='dyadic-lebesgue')


def discontinuity_demo(ms: Sequence[int] = (4, 8, 16), placement: str = 'midpoint', tol: float = 1e-9,
                       n_list: Sequence[int] = tuple(2 ** k for k in range(2, 11)),
                       curve_tol: float = 1e-7) -> DiscontinuityReport:
    """
    Uniform atoms on m points converge to Lebesgue measure in rho_1 while their
    quantization dimension stays 0 and that of the limit is 1.

    :param ms: atom counts
    :param placement: atoms at cell midpoints (i - 1/2)/m or at right endpoints i/m
    :param tol: rho_1 tolerance
    :param n_list: codebook sizes of the Lebesgue grid curve
    :param curve_tol: bracket width of the curve evaluations
    """
    if placement not in ('midpoint', 'right'):
        raise ValueError(f'Unknown atom placement {placement}')
    lebesgue = dyadic_lebesgue()
    rows = []
    for m in ms:
        if not isinstance(m, int) or m < 1:
            raise ValueError('Atom counts must be positive integers')
        offset = .5 if placement == 'midpoint' else 1.
        atoms = (np.arange(m) + offset) / m
        mu_m = DiscreteMeasure(atoms, name=f'uniform-atoms-{m}')
        # a codebook on the support pins every atom, so e_n = -inf for every n >= m
        degenerate = gme_exact(mu_m, Codebook.explicit(atoms)).degenerate
        expected = 1. / (4 * m) if placement == 'midpoint' else 1. / (2 * m)
        rows.append(DiscontinuityRow(m, rho1(mu_m, lebesgue, tol), expected, degenerate, 0.))
    curve = error_curve(lebesgue, n_list, strategy='grid', tol=curve_tol)
    return DiscontinuityReport(placement, tuple(rows), estimate_dimension(curve))
