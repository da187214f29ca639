from __future__ import annotations
import heapq
import itertools
import logging
import math
from dataclasses import astuple, dataclass
from itertools import count
from typing import Callable
import numpy as np
from .antichain import Codebook
from .errors import DimMismatch, UnsupportedR
from .ifs_core import GeometricIfs, IfsModel, truncate
from .measure import DiscreteMeasure, Measure, SelfSimilarMeasure
from .quantizer import build_codebook, gme_exact


logger = logging.getLogger(__name__)

MAX_INTERVALS = 200_000
INNER_TOL = 1e-4  # enclosure tolerance of G, H, F and Q relative to the metric tolerance


@dataclass(frozen=True)
class MetricResult:
    value: float
    tol: float
    r: float
    method: str  # 'cdf_l1' or 'quantile_coupling'
    lower: float
    upper: float
    optimal: bool = True  # False when the quantile coupling only bounds rho_r from above
    converged: bool = True
    cells: int = 0


@dataclass(frozen=True)
class ContinuityReport:
    lhs: float
    rhs: float
    slack: float
    holds: bool
    N: int
    n: int
    tol: float
    seed: int


@dataclass(frozen=True)
class PerturbationNorms:
    prob_l1: float
    map_sup_l1: float
    terms: int  # indices compared term by term; later ones are covered by tail bounds

    def __iter__(self):
        return iter(astuple(self)[:2])


class _Enclosures:
    """ Memoized enclosures of one measure at the evaluation points of a refinement """
    def __init__(self, mu: Measure, tol: float):
        self.mu = mu
        self.tol = tol
        self._cache = {}

    def _get(self, kind: str, x: float, fn: Callable):
        key = (kind, x)
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def cdf(self, x: float, left: bool = False) -> tuple[float, float]:
        return self._get('F-' if left else 'F', x, lambda: self.mu.cdf_bounds(x, self.tol, left))

    def quantile(self, u: float) -> tuple[float, float]:
        return self._get('Q', u, lambda: self.mu.quantile_bounds(u, self.tol))

    def integrated_cdf(self, x: float) -> tuple[float, float]:
        return self._get('G', x, lambda: self.mu.integrated_cdf(x, self.tol))

    def integrated_quantile(self, u: float) -> tuple[float, float]:
        return self._get('H', u, lambda: self.mu.integrated_quantile(u, self.tol))


def _increment(enc: Callable, x0: float, x1: float) -> tuple[float, float]:
    lo0, hi0 = enc(x0)
    lo1, hi1 = enc(x1)
    return lo1 - hi0, hi1 - lo0


def _chord(area: float, length: float, d_min: float, d_max: float, r: float) -> float:
    """
    Largest integral of |D|^r over an interval of the given length when D takes values in
    [d_min, d_max] and integrates to area (|.|^r is convex for r >= 1)
    """
    if d_max - d_min <= 0.:
        return length * abs(d_min) ** r
    mean = min(max(area / length, d_min), d_max)
    theta = (mean - d_min) / (d_max - d_min)
    return length * (theta * abs(d_max) ** r + (1. - theta) * abs(d_min) ** r)


def _distance_to_zero(lo: float, hi: float) -> float:
    if lo <= 0. <= hi:
        return 0.
    return min(abs(lo), abs(hi))


def _interval_bracket(area: tuple[float, float], length: float, d_min: float, d_max: float,
                      r: float) -> tuple[float, float]:
    ceiling = length * max(abs(d_min), abs(d_max)) ** r
    if r >= 1:
        lower = length * _distance_to_zero(area[0] / length, area[1] / length) ** r
        upper = max(_chord(a, length, d_min, d_max, r) for a in area)
    else:
        lower = length * _distance_to_zero(d_min, d_max) ** r
        upper = ceiling
    upper = min(upper, ceiling)
    return min(lower, upper), upper


def _refine(bracket: Callable[[float, float], tuple[float, float]], a: float, b: float,
            done: Callable[[float, float], bool], max_intervals: int) -> tuple[float, float, bool, int]:
    """
    Bisects the interval with the widest bracket first until done(lower, upper) holds.
    """
    tiebreak = count()
    heap = []
    fixed = []
    sums = [0., 0.]

    def push(x0: float, x1: float):
        lo, hi = bracket(x0, x1)
        if hi - lo <= 0.:
            fixed.append((lo, hi))
            return
        heapq.heappush(heap, (-(hi - lo), next(tiebreak), x0, x1, lo, hi))
        sums[0] += lo
        sums[1] += hi

    push(a, b)
    splits = 0
    while heap and not done(*sums) and splits < max_intervals:
        _, _, x0, x1, lo, hi = heapq.heappop(heap)
        sums[0] -= lo
        sums[1] -= hi
        mid = (x0 + x1) / 2
        if not x0 < mid < x1:
            fixed.append((lo, hi))
            continue
        push(x0, mid)
        push(mid, x1)
        splits += 1
    lower = math.fsum([lo for lo, _ in fixed] + [item[4] for item in heap])
    upper = math.fsum([hi for _, hi in fixed] + [item[5] for item in heap])
    return max(lower, 0.), max(upper, 0.), done(lower, upper), splits


def _check_pair(mu1: Measure, mu2: Measure, tol: float):
    if mu1.dim != mu2.dim:
        raise DimMismatch('Measures live in spaces of different dimensions')
    mu1._require_line()
    mu2._require_line()
    if not isinstance(tol, (float, int)) or tol <= 0:
        raise ValueError('Tolerance must be a positive number')


def _result(lower: float, upper: float, converged: bool, splits: int, tol: float, r: float, method: str,
            optimal: bool = True) -> MetricResult:
    if not converged:
        logger.warning('Metric bracket [%s, %s] above tolerance %s after %d bisections', lower, upper, tol, splits)
    return MetricResult((lower + upper) / 2, tol, r, method, lower, upper, optimal, converged, splits)


def rho1(mu1: Measure, mu2: Measure, tol: float = 1e-8, max_intervals: int = MAX_INTERVALS) -> MetricResult:
    """
    rho_1 (Hutchinson) distance on the line as the integral of |F_1 - F_2|.
    On each interval the signed integral comes from the integrated CDFs and the
    range of F_1 - F_2 from monotone CDF bounds.

    :param mu1: one-dimensional measure
    :param mu2: one-dimensional measure
    :param tol: width of the certified bracket
    :return: midpoint of the bracket with the bracket itself
    """
    _check_pair(mu1, mu2, tol)
    if mu1 == mu2:
        return MetricResult(0., tol, 1., 'cdf_l1', 0., 0.)
    inner = tol * INNER_TOL
    one, two = _Enclosures(mu1, inner), _Enclosures(mu2, inner)

    def bracket(x0: float, x1: float) -> tuple[float, float]:
        g1 = _increment(one.integrated_cdf, x0, x1)
        g2 = _increment(two.integrated_cdf, x0, x1)
        area = (g1[0] - g2[1], g1[1] - g2[0])
        d_min = one.cdf(x0)[0] - two.cdf(x1, left=True)[1]
        d_max = one.cdf(x1, left=True)[1] - two.cdf(x0)[0]
        return _interval_bracket(area, x1 - x0, d_min, d_max, 1.)

    lo1, hi1 = mu1.support_hull()
    lo2, hi2 = mu2.support_hull()
    a, b = min(lo1, lo2), max(hi1, hi2)
    if a == b:
        return MetricResult(0., tol, 1., 'cdf_l1', 0., 0.)
    lower, upper, converged, splits = _refine(bracket, a, b, lambda lo, hi: hi - lo <= tol, max_intervals)
    return _result(lower, upper, converged, splits, tol, 1., 'cdf_l1')


def rho_r(mu1: Measure, mu2: Measure, r: float = 1., tol: float = 1e-8, allow_upper_bound: bool = False,
          max_intervals: int = MAX_INTERVALS) -> MetricResult:
    """
    (integral over u in [0, 1] of |Q_1(u) - Q_2(u)|^r)^(1/r) under the quantile coupling,
    which is optimal for r >= 1. For r < 1 the coupling only bounds rho_r from above and
    the result is flagged non-optimal.

    :param tol: width of the certified bracket of the returned value
    """
    _check_pair(mu1, mu2, tol)
    if not isinstance(r, (float, int)) or r <= 0:
        raise UnsupportedR('Order r must be positive')
    optimal = r >= 1
    if not optimal and not allow_upper_bound:
        raise UnsupportedR(f'The quantile coupling is not optimal for r = {r} < 1')
    if mu1 == mu2:
        return MetricResult(0., tol, float(r), 'quantile_coupling', 0., 0., optimal)
    inner = tol * INNER_TOL
    one, two = _Enclosures(mu1, inner), _Enclosures(mu2, inner)

    def bracket(u0: float, u1: float) -> tuple[float, float]:
        h1 = _increment(one.integrated_quantile, u0, u1)
        h2 = _increment(two.integrated_quantile, u0, u1)
        area = (h1[0] - h2[1], h1[1] - h2[0])
        d_min = one.quantile(u0)[0] - two.quantile(u1)[1]
        d_max = one.quantile(u1)[1] - two.quantile(u0)[0]
        return _interval_bracket(area, u1 - u0, d_min, d_max, float(r))

    def done(lo: float, hi: float) -> bool:
        return max(hi, 0.) ** (1 / r) - max(lo, 0.) ** (1 / r) <= tol

    lower, upper, converged, splits = _refine(bracket, 0., 1., done, max_intervals)
    return _result(lower ** (1 / r), upper ** (1 / r), converged, splits, tol, float(r), 'quantile_coupling', optimal)


def _pooled_error(mu: Measure, codebooks: list[Codebook], tol: float) -> tuple[float, float]:
    """ Bracket of min over the codebooks of the log error of mu """
    brackets = [gme_exact(mu, codebook, tol) for codebook in codebooks]
    return min(b.lower for b in brackets), min(b.upper for b in brackets)


def continuity_gap(ifs: IfsModel, N: int, n: int, tol: float = 1e-6, strategy: str = 'antichain',
                   seed: int = 0, lloyd_iters: int = 30) -> ContinuityReport:
    """
    Compares |e_n(mu_N) - e_n(mu)| with rho_1(mu_N, mu), where mu_N is the invariant
    measure of the first N maps with renormalized probabilities. The codebooks built for
    mu and mu_N are both scored on both measures and the better one is kept, so each side
    uses the best codebook available.

    :param ifs: infinite family
    :param N: truncation order, at least 2
    :param n: codebook size
    :param tol: bracket width of each error evaluation and of rho_1
    :param strategy: codebook strategy of build_codebook
    :param seed: stream for Lloyd starts
    """
    if ifs.is_finite:
        raise ValueError('Continuity gaps compare an infinite family with its truncations')
    if not isinstance(N, int) or N < 2:
        raise ValueError('Truncation order must be an integer of at least 2')
    if not isinstance(n, int) or n < 1:
        raise ValueError('Codebook size must be a positive integer')
    mu = SelfSimilarMeasure(ifs, name='full')
    mu_n = SelfSimilarMeasure(truncate(ifs, N), name=f'truncated-{N}')
    codebooks = [build_codebook(m, n, strategy, tol, seed, lloyd_iters, tol)[0] for m in (mu, mu_n)]
    e_lo, e_hi = _pooled_error(mu, codebooks, tol)
    en_lo, en_hi = _pooled_error(mu_n, codebooks, tol)
    distance = rho1(mu_n, mu, tol)
    lhs = abs(math.exp((en_lo + en_hi) / 2) - math.exp((e_lo + e_hi) / 2))
    slack = math.exp(e_hi) - math.exp(e_lo) + math.exp(en_hi) - math.exp(en_lo) + (distance.upper - distance.lower)
    holds = lhs <= distance.upper + slack
    if not holds:
        logger.warning('Continuity gap violated for N = %d, n = %d: %s > %s', N, n, lhs, distance.upper + slack)
    return ContinuityReport(lhs, distance.value, slack, holds, N, n, tol, seed)


def _map_sup(ifs_a: IfsModel, ifs_b: IfsModel, j: int, vertices: list[np.ndarray]) -> float:
    """ sup over the ambient box of |S_a,j(x) - S_b,j(x)|; an affine difference peaks at a vertex """
    if ifs_a.dim == 1:
        (sa, ta), (sb, tb) = ifs_a.affine(j), ifs_b.affine(j)
        return max(abs((sa - sb) * x[0] + ta - tb) for x in vertices)
    ma, mb = ifs_a.similarity(j), ifs_b.similarity(j)
    lin = float(ma.ratio) * ma.matrix - float(mb.ratio) * mb.matrix
    shift = ma.vector - mb.vector
    return max(float(np.linalg.norm(lin @ x + shift)) for x in vertices)


def _same_maps(ifs_a: IfsModel, ifs_b: IfsModel) -> bool:
    return isinstance(ifs_a, GeometricIfs) and isinstance(ifs_b, GeometricIfs) and \
        (ifs_a.b, ifs_a.c) == (ifs_b.b, ifs_b.c)


def perturbation_norms(ifs_a: IfsModel, ifs_b: IfsModel, N: int | None = None,
                       tail_tol: float = 1e-12) -> PerturbationNorms:
    """
    sum_j |p_a,j - p_b,j| and sum_j sup_X |S_a,j - S_b,j| with certified tails.
    An index missing from one model counts with probability 0 and a map equal to the
    other model's.

    :param N: indices compared term by term; defaults to all maps of finite models and
              to the tail_tol truncation index of infinite ones
    :return: (prob_l1, map_sup_l1, terms), unpacking to the first two
    """
    if ifs_a.dim != ifs_b.dim:
        raise DimMismatch('Models live in spaces of different dimensions')
    if ifs_a == ifs_b:
        return PerturbationNorms(0., 0., 0)
    sizes = [m.size for m in (ifs_a, ifs_b) if m.is_finite]
    if N is None:
        N = max(sizes + [m.truncation_index(tail_tol) for m in (ifs_a, ifs_b) if not m.is_finite])
    if not isinstance(N, int) or N < 1:
        raise ValueError('Number of compared terms must be a positive integer')
    vertices = [np.array(v, dtype=float) for v in itertools.product(*ifs_a.ambient)]
    same_maps = _same_maps(ifs_a, ifs_b)
    prob_terms, map_terms = [], []
    for j in range(1, N + 1):
        in_a = not ifs_a.is_finite or j <= ifs_a.size
        in_b = not ifs_b.is_finite or j <= ifs_b.size
        p_a = float(ifs_a.prob(j)) if in_a else 0.
        p_b = float(ifs_b.prob(j)) if in_b else 0.
        prob_terms.append(abs(p_a - p_b))
        if in_a and in_b and not same_maps:
            map_terms.append(_map_sup(ifs_a, ifs_b, j, vertices))
    prob_terms.append(ifs_a.tail_mass(N) + ifs_b.tail_mass(N))
    if not ifs_a.is_finite and not ifs_b.is_finite and not same_maps:
        # both tails accumulate at the right end of X
        map_terms.append(ifs_a.map_tail_bound(N) + ifs_b.map_tail_bound(N))
    return PerturbationNorms(math.fsum(prob_terms), math.fsum(map_terms), N)


def hutchinson_bound(ifs_a: IfsModel, ifs_b: IfsModel, N: int | None = None) -> float:
    """
    Contraction bound on d_H(mu_a, mu_b):
    (sum |p_a,j - p_b,j| diam X + sum sup |S_a,j - S_b,j|) / (1 - sup ratio)
    """
    prob_l1, map_sup_l1 = perturbation_norms(ifs_a, ifs_b, N)
    if prob_l1 == 0. and map_sup_l1 == 0.:
        return 0.
    s = max(ifs_a.sup_ratio, ifs_b.sup_ratio)
    return (prob_l1 * ifs_a.diameter + map_sup_l1) / (1. - s)


def projection_distance(mu: Measure, codebook, r: float = 1., tol: float = 1e-8) -> MetricResult:
    """
    rho_r between mu and its image under the nearest-codepoint map, a discrete measure on
    the codebook carrying the mass of each Voronoi cell.
    """
    mu._require_line()
    if not isinstance(codebook, Codebook):
        codebook = Codebook.explicit(codebook)
    points = np.unique(codebook.values)
    boundaries = (points[1:] + points[:-1]) / 2
    cum = np.array([0.] + [mu.cdf(x, tol * INNER_TOL) for x in boundaries] + [1.])
    masses = np.maximum(np.diff(cum), 0.)
    keep = masses > 0.
    weights = masses[keep] / masses[keep].sum()
    weights[-1] = 1. - math.fsum(weights[:-1])
    image = DiscreteMeasure(points[keep], weights, name='voronoi-image')
    return rho_r(mu, image, r, tol, allow_upper_bound=True)
