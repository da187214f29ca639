from __future__ import annotations
import heapq
import logging
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from functools import partial
from itertools import count
from typing import Callable, Sequence
import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree
from scipy.stats import norm
from .antichain import Codebook, antichain_for_n, antichain_reference, codebook_from_antichain, greedy_antichain
from .descent import CodebookDescent
from .errors import DegenerateSample, ToleranceUnreachable
from .ifs_core import truncate
from .measure import Cell, Measure, SelfSimilarMeasure
from .utils import parallel_map, philox


logger = logging.getLogger(__name__)

MAX_CELLS = 400_000
STRATEGIES = ('antichain', 'lloyd', 'antichain+lloyd', 'grid')


@dataclass(frozen=True)
class ErrorBracket:
    lower: float
    upper: float
    method: str  # 'exact' or 'mc'
    n_points: int
    tol: float | None = None
    ci_level: float | None = None
    converged: bool = True
    degenerate: bool = False  # a codepoint carries mass, the log error is -inf
    cells: int = 0

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f'Bracket lower bound {self.lower} exceeds upper bound {self.upper}')

    @property
    def midpoint(self) -> float:
        if self.degenerate:
            return -math.inf
        return (self.lower + self.upper) / 2

    @property
    def width(self) -> float:
        return 0. if self.degenerate else self.upper - self.lower

    def __contains__(self, x: float) -> bool:
        return self.lower <= x <= self.upper


@dataclass(frozen=True)
class CurveEntry:
    n: int
    bracket: ErrorBracket
    card: int
    reference: float | None = None  # sum of p_w log s_w over the antichain behind the codebook

    @property
    def gap(self) -> float | None:
        if self.reference is None:
            return None
        return self.bracket.midpoint - self.reference


@dataclass(frozen=True)
class ErrorCurve:
    entries: tuple
    measure_id: str
    method: str

    def __post_init__(self):
        ns = [e.n for e in self.entries]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError('Curve entries must have strictly increasing n')

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ns(self) -> list[int]:
        return [e.n for e in self.entries]

    def rows(self) -> list[tuple]:
        return [(e.n, math.log(e.n), e.bracket.lower, e.bracket.upper, self.method) for e in self.entries]


class _Nearest:
    """ Distances to a sorted one-dimensional codebook """
    def __init__(self, points: Sequence[float]):
        self.points = sorted(float(p) for p in points)
        self.size = len(self.points)

    def index(self, y: float) -> int:
        k = bisect_left(self.points, y)
        if k == self.size:
            return k - 1
        if k > 0 and y - self.points[k - 1] <= self.points[k] - y:
            return k - 1
        return k

    def dist(self, y: float) -> float:
        return abs(y - self.points[self.index(y)])

    def inside(self, lo: float, hi: float) -> bool:
        k = bisect_left(self.points, lo)
        return k < self.size and self.points[k] <= hi

    def count(self, lo: float, hi: float) -> int:
        return bisect_right(self.points, hi) - bisect_left(self.points, lo)


class _Degenerate(Exception):
    pass


def _log_bracket(cell: Cell, near: _Nearest) -> tuple[float, float]:
    w = cell.mass
    if w == 0.:
        return 0., 0.
    if cell.is_atom:
        d = near.dist(cell.lo)
        if d == 0.:
            raise _Degenerate
        v = w * math.log(d)
        return v, v
    lo, hi = cell.lo, cell.hi
    if hi <= lo:
        # narrower than the float spacing at its position
        lo, hi = lo - math.ulp(lo), hi + math.ulp(hi)
    length = hi - lo
    big = near.dist((lo + hi) / 2) + length / 2
    if not near.inside(lo, hi):
        # log d(., codebook) is concave on a codepoint-free interval
        mean = min(max(cell.mean, lo), hi)
        f_lo, f_hi = math.log(near.dist(lo)), math.log(near.dist(hi))
        upper = min(math.log(near.dist(mean)), math.log(big))
        lower = f_lo + (f_hi - f_lo) * (mean - lo) / length
        return w * min(lower, upper), w * upper
    # every nearest codepoint lies within reach of the whole cell
    reach = length + big
    m = near.count(lo - big, hi + big)
    lower = math.log(reach) + m * (cell.log_floor - math.log(reach))
    return w * lower, w * math.log(big)


def _power_bracket(cell: Cell, near: _Nearest, r: float) -> tuple[float, float]:
    w = cell.mass
    if w == 0.:
        return 0., 0.
    if cell.is_atom:
        v = w * near.dist(cell.lo) ** r
        return v, v
    lo, hi = cell.lo, cell.hi
    if hi <= lo:
        # narrower than the float spacing at its position
        lo, hi = lo - math.ulp(lo), hi + math.ulp(hi)
    length = hi - lo
    big = near.dist((lo + hi) / 2) + length / 2
    if near.inside(lo, hi):
        return 0., w * big ** r
    mean = min(max(cell.mean, lo), hi)
    d_lo, d_hi, d_mean = near.dist(lo), near.dist(hi), near.dist(mean)
    small = min(d_lo, d_hi)
    chord = d_lo ** r + (d_hi ** r - d_lo ** r) * (mean - lo) / length
    if r <= 1:
        lower, upper = chord, d_mean ** r
    elif near.index(lo) == near.index(hi):
        lower, upper = d_mean ** r, chord
    else:
        lower, upper = small ** r, big ** r
    lower, upper = max(lower, small ** r), min(upper, big ** r)
    return w * min(lower, upper), w * upper


def _quadrature(mu: Measure, bracket: Callable[[Cell], tuple[float, float]], tol: float,
                max_cells: int) -> tuple[float, float, bool, int]:
    """
    Refines the cell with the widest bracket until the summed width is at most tol.

    :return: lower sum, upper sum, whether tol was reached, number of splits
    """
    tiebreak = count()
    heap = []
    fixed = []
    state = {'lower': 0., 'upper': 0., 'infinite': 0}

    def push(cell: Cell):
        lo, hi = bracket(cell)
        if cell.is_atom or hi - lo <= 0.:
            fixed.append(lo)
            return
        heapq.heappush(heap, (-(hi - lo), next(tiebreak), cell, lo, hi))
        if math.isinf(lo):
            state['infinite'] += 1
        else:
            state['lower'] += lo
        state['upper'] += hi

    def pop():
        _, _, cell, lo, hi = heapq.heappop(heap)
        if math.isinf(lo):
            state['infinite'] -= 1
        else:
            state['lower'] -= lo
        state['upper'] -= hi
        return cell

    def width() -> float:
        return math.inf if state['infinite'] else state['upper'] - state['lower']

    push(mu.root_cell())
    splits = 0
    while heap and width() > tol and splits < max_cells:
        for child in mu.split(pop()):
            push(child)
        splits += 1
        if splits % 4096 == 0:
            state['lower'] = math.fsum(item[3] for item in heap if not math.isinf(item[3]))
            state['upper'] = math.fsum(item[4] for item in heap)
    lower = math.fsum(fixed + [item[3] for item in heap])
    upper = math.fsum(fixed + [item[4] for item in heap])
    return lower, upper, upper - lower <= tol, splits


def _line_codebook(mu: Measure, codebook) -> _Nearest:
    mu._require_line()
    if not isinstance(codebook, Codebook):
        codebook = Codebook.explicit(codebook)
    if codebook.dim != 1:
        raise ValueError('Codebook dimension does not match the measure')
    return _Nearest(codebook.values)


def _finish(bracket: ErrorBracket, strict: bool) -> ErrorBracket:
    if not bracket.converged:
        message = f'Bracket width {bracket.upper - bracket.lower} above tolerance {bracket.tol} after {bracket.cells} splits'
        if strict:
            raise ToleranceUnreachable(message, bracket)
        logger.warning(message)
    return bracket


def _check_tol(tol: float):
    if not isinstance(tol, (float, int)) or tol <= 0:
        raise ValueError('Tolerance must be a positive number')


def gme_exact(mu: Measure, codebook, tol: float = 1e-6, max_cells: int = MAX_CELLS,
              strict: bool = False) -> ErrorBracket:
    """
    Certified bracket of the integral of log d(x, codebook) dmu by cylinder quadrature.

    :param mu: one-dimensional measure
    :param codebook: Codebook or sequence of points
    :param tol: target bracket width
    :param max_cells: split budget; the bracket is flagged unconverged past it
    :param strict: raise ToleranceUnreachable instead of flagging
    :return: bracket; degenerate at -inf when an atom sits on a codepoint
    """
    _check_tol(tol)
    near = _line_codebook(mu, codebook)
    try:
        lower, upper, converged, splits = _quadrature(mu, partial(_log_bracket, near=near), tol, max_cells)
    except _Degenerate:
        logger.info('Codepoint carries mass, log error is -inf')
        return ErrorBracket(-math.inf, -math.inf, 'exact', near.size, tol, degenerate=True)
    return _finish(ErrorBracket(lower, upper, 'exact', near.size, tol, converged=converged, cells=splits), strict)


def _sample_distances(mu: Measure, codebook, samples: int, seed: int) -> tuple[np.ndarray, int]:
    if not isinstance(samples, int) or samples < 1000:
        raise ValueError('Monte-Carlo estimates need at least 1000 samples')
    if not isinstance(codebook, Codebook):
        codebook = Codebook.explicit(codebook)
    if codebook.dim != mu.dim:
        raise ValueError('Codebook dimension does not match the measure')
    batch = mu.sample(samples, seed)
    dist, _ = cKDTree(codebook.points).query(batch.points)
    return dist, len(codebook)


def _confidence(values: np.ndarray, ci_level: float) -> tuple[float, float]:
    if not 0 < ci_level < 1:
        raise ValueError('Confidence level must lie in (0, 1)')
    half = norm.ppf(0.5 + ci_level / 2) * values.std(ddof=1) / math.sqrt(values.size)
    return float(values.mean()) - half, float(values.mean()) + half


def gme_mc(mu: Measure, codebook, samples: int = 100_000, seed: int = 0, ci_level: float = 0.95) -> ErrorBracket:
    """
    Normal-approximation confidence interval of the mean log distance of sampled points.
    """
    dist, n = _sample_distances(mu, codebook, samples, seed)
    if np.any(dist == 0.):
        raise DegenerateSample('A sample coincides with a codepoint, the log error is -inf')
    lower, upper = _confidence(np.log(dist), ci_level)
    return ErrorBracket(lower, upper, 'mc', n, ci_level=ci_level)


def lr_error(mu: Measure, codebook, r: float, method: str = 'exact', tol: float = 1e-6, samples: int = 100_000,
             seed: int = 0, ci_level: float = 0.95, max_cells: int = MAX_CELLS, strict: bool = False) -> ErrorBracket:
    """
    Bracket of (integral of d(x, codebook)^r dmu)^(1/r); tol applies to the integral.
    """
    if not isinstance(r, (float, int)) or r <= 0:
        raise ValueError('Order r must be positive')
    if method == 'mc':
        dist, n = _sample_distances(mu, codebook, samples, seed)
        lower, upper = _confidence(dist ** r, ci_level)
        return ErrorBracket(max(lower, 0.) ** (1 / r), upper ** (1 / r), 'mc', n, ci_level=ci_level)
    if method != 'exact':
        raise ValueError(f'Unknown evaluation method {method}')
    _check_tol(tol)
    near = _line_codebook(mu, codebook)
    lower, upper, converged, splits = _quadrature(mu, partial(_power_bracket, near=near, r=float(r)), tol, max_cells)
    bracket = ErrorBracket(max(lower, 0.) ** (1 / r), max(upper, 0.) ** (1 / r), 'exact', near.size, tol,
                           converged=converged, cells=splits)
    return _finish(bracket, strict)


def _uniform_log(u: np.ndarray) -> np.ndarray:
    """ Antiderivative of log|u| """
    safe = np.where(u == 0., 1., u)
    return np.where(u == 0., 0., u * np.log(np.abs(safe)) - u)


class LogLloyd(CodebookDescent[np.ndarray, ErrorBracket]):
    def __init__(self, mu: Measure, n: int, max_steps: int = 50, tol: float = 1e-6, initial=None, seed: int = 0,
                 grid_points: int = 64, leaf_mass: float | None = None, min_improvement: float = 1e-9):
        """
        Lloyd-type descent for the log cost on the line: each codepoint moves to the
        minimizer of the integral of log|x - a| over its Voronoi cell. A step is kept only
        when the certified upper bound of the log error decreases.
        :param mu: one-dimensional measure
        :param n: number of codepoints
        :param max_steps: maximum Lloyd iterations
        :param tol: bracket width of each exact evaluation
        :param initial: starting codepoints; quantile spread points when omitted
        :param seed: stream for spreading coinciding starting points
        :param grid_points: coarse grid size of the per-cell search
        :param leaf_mass: cells of at most this mass are treated as uniform in the cell objective
        :param min_improvement: stop once an iteration improves the bound by less than this
        """
        super().__init__(max_steps, min_improvement)
        mu._require_line()
        if not isinstance(n, int) or n < 1:
            raise ValueError('Number of codepoints must be a positive integer')
        _check_tol(tol)
        if not isinstance(grid_points, int) or grid_points < 3:
            raise ValueError('Grid must have at least 3 points')
        self.mu = mu
        self.n = n
        self.tol = tol
        self.seed = seed
        self.grid_points = grid_points
        self.leaf_mass = min(1e-3, 1. / (32 * n)) if leaf_mass is None else leaf_mass
        self.initial = None
        if initial is not None:
            self.initial = np.sort(np.asarray(initial, dtype=float).reshape(-1))
            if self.initial.size != n:
                raise ValueError('Initial codebook size does not match n')
        self.reseeded = 0
        self._leaves: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    def __str__(self):
        return 'LOG LLOYD: \n' + \
               f'CURRENT STEPS: {self.cur_steps} \n' + \
               f'BEST UPPER BOUND: {None if self.best_objective is None else self.best_objective.upper} \n' + \
               f'CODEPOINTS: {self.n} \n\n'

    def _initial(self) -> np.ndarray:
        if self.initial is not None:
            return self.initial.copy()
        points = np.array([self.mu.quantile((i - .5) / self.n) for i in range(1, self.n + 1)])
        repeated = np.concatenate([[False], np.diff(points) == 0.])
        if repeated.any():
            lo, hi = self.mu.support_hull()
            points[repeated] = philox(self.seed).uniform(lo, hi, int(repeated.sum()))
        return np.sort(points)

    def _leaf_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._leaves is None:
            leaves, stack = [], [self.mu.root_cell()]
            while stack:
                cell = stack.pop()
                if cell.is_atom or cell.mass <= self.leaf_mass:
                    leaves.append((cell.lo, cell.hi, cell.mass))
                else:
                    stack.extend(self.mu.split(cell))
            leaves.sort()
            lo, hi, w = (np.array(v) for v in zip(*leaves))
            self._leaves = lo, hi, w
        return self._leaves

    def _cell_cost(self, a: float, lo: np.ndarray, hi: np.ndarray, w: np.ndarray) -> float:
        spread = hi > lo
        values = np.empty(lo.size)
        with np.errstate(divide='ignore'):
            values[~spread] = np.log(np.abs(lo[~spread] - a))
        width = np.where(spread, hi - lo, 1.)
        values[spread] = ((_uniform_log(hi - a) - _uniform_log(lo - a)) / width)[spread]
        return float(np.dot(w, values))

    def _minimize(self, lo: np.ndarray, hi: np.ndarray, w: np.ndarray) -> float:
        a_lo, a_hi = float(lo.min()), float(hi.max())
        if a_lo == a_hi:
            return a_lo
        grid = np.linspace(a_lo, a_hi, self.grid_points)
        costs = np.array([self._cell_cost(a, lo, hi, w) for a in grid])
        k = int(np.argmin(costs))
        if math.isinf(costs[k]):
            return float(grid[k])
        cost = partial(self._cell_cost, lo=lo, hi=hi, w=w)
        if 0 < k < grid.size - 1 and costs[k] < costs[k - 1] and costs[k] < costs[k + 1]:
            res = minimize_scalar(cost, bracket=(grid[k - 1], grid[k], grid[k + 1]), method='golden',
                                  options={'xtol': 1e-10})
        else:
            res = minimize_scalar(cost, bounds=(grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]),
                                  method='bounded', options={'xatol': 1e-12})
        return float(res.x) if res.fun <= costs[k] and a_lo <= res.x <= a_hi else float(grid[k])

    def _step(self) -> np.ndarray:
        points = np.sort(self.current_state)
        lo, hi, w = self._leaf_arrays()
        boundaries = (points[1:] + points[:-1]) / 2
        owner = np.searchsorted(boundaries, (lo + hi) / 2)
        masses = np.bincount(owner, weights=w, minlength=self.n)
        moved = points.copy()
        empty = []
        for i in range(self.n):
            mine = owner == i
            if masses[i] <= 0.:
                empty.append(i)
                continue
            moved[i] = self._minimize(lo[mine], hi[mine], w[mine])
        for i in empty:
            k = int(np.argmax(masses))
            mine = np.flatnonzero(owner == k)
            half = np.searchsorted(np.cumsum(w[mine]), masses[k] / 2)
            leaf = mine[min(half, mine.size - 1)]
            moved[i] = (lo[leaf] + hi[leaf]) / 2
            masses[k] /= 2
            self.reseeded += 1
            logger.warning('Empty Voronoi cell %d reseeded at %s', i, moved[i])
        return np.sort(moved)

    def _objective(self, state: np.ndarray) -> ErrorBracket:
        return gme_exact(self.mu, Codebook.explicit(state), self.tol)

    def _bound(self, objective: ErrorBracket) -> float:
        return objective.upper


def _measure_id(mu: Measure) -> str:
    return getattr(mu, 'name', type(mu).__name__)


def lloyd_log(mu: Measure, n: int, iters: int = 50, seed: int = 0, tol: float = 1e-6, initial=None,
              verbose: bool = False) -> tuple[Codebook, ErrorCurve]:
    """
    :return: best codebook and the best bracket after each iteration
    """
    lloyd = LogLloyd(mu, n, max_steps=iters, tol=tol, initial=initial, seed=seed)
    state, _ = lloyd.run(verbose)
    flags = ('empty-cell-reseeded',) if lloyd.reseeded else ()
    history = tuple(CurveEntry(i, bracket, n) for i, bracket in enumerate(lloyd.history))
    return Codebook(state, 'lloyd', flags=flags), ErrorCurve(history, _measure_id(mu), 'lloyd-iterations')


def build_codebook(mu: Measure, n: int, strategy: str, tol: float, seed: int, lloyd_iters: int,
                  truncation_tol: float) -> tuple[Codebook, float | None]:
    if strategy == 'grid':
        lo, hi = mu.support_hull()
        return Codebook(lo + (hi - lo) * (np.arange(n) + .5) / n, 'grid'), None
    if strategy == 'lloyd':
        return lloyd_log(mu, n, lloyd_iters, seed, tol)[0], None
    if not isinstance(mu, SelfSimilarMeasure):
        raise ValueError('Antichain codebooks need a self-similar measure')
    model = mu.model
    if model.is_finite:
        base = model
        _, ac = antichain_for_n(model, n, strict=False)
    else:
        # antichains over the renormalized first maps; the codebook is still scored on mu
        base = truncate(model, model.truncation_index(truncation_tol))
        ac = greedy_antichain([base.prob(j) for j in range(1, base.size + 1)], n)
    codebook = codebook_from_antichain(base, ac)
    reference = antichain_reference(ac, [base.prob(j) for j in range(1, base.size + 1)],
                                    [base.ratio(j) for j in range(1, base.size + 1)])
    if strategy == 'antichain+lloyd':
        polished, _ = lloyd_log(mu, len(codebook), lloyd_iters, seed, tol, initial=codebook.values)
        codebook = Codebook(polished.points, 'antichain+lloyd', ac, codebook.anchor, polished.flags)
    return codebook, reference


def _curve_entry(n: int, mu: Measure, strategy: str, eval_method: str, tol: float, samples: int, seed: int,
                 lloyd_iters: int, truncation_tol: float) -> CurveEntry:
    codebook, reference = build_codebook(mu, n, strategy, tol, seed, lloyd_iters, truncation_tol)
    if eval_method == 'exact':
        bracket = gme_exact(mu, codebook, tol)
    else:
        bracket = gme_mc(mu, codebook, samples, seed)
    logger.debug('n = %d: card %d, bracket [%s, %s]', n, len(codebook), bracket.lower, bracket.upper)
    return CurveEntry(n, bracket, len(codebook), reference)


def error_curve(mu: Measure, n_list: Sequence[int], strategy: str = 'antichain', eval_method: str = 'exact',
                tol: float = 1e-6, samples: int = 100_000, seed: int = 0, workers: int = 1, lloyd_iters: int = 30,
                truncation_tol: float = 1e-6) -> ErrorCurve:
    """
    Log error per codebook size.

    :param mu: measure
    :param n_list: strictly increasing codebook sizes
    :param strategy: one of antichain, lloyd, antichain+lloyd, grid
    :param eval_method: exact or mc
    :param tol: exact bracket width, also used inside Lloyd iterations
    :param samples: Monte-Carlo sample count
    :param seed: stream for Monte-Carlo evaluation and Lloyd starts
    :param workers: processes evaluating the sizes; results keep the order of n_list
    :param lloyd_iters: Lloyd iterations per size
    :param truncation_tol: tail mass left out of the alphabet of an infinite family
    """
    n_list = list(n_list)
    if not n_list or any(not isinstance(n, int) or n < 1 for n in n_list):
        raise ValueError('Codebook sizes must be positive integers')
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError('Codebook sizes must be strictly increasing')
    if strategy not in STRATEGIES:
        raise ValueError(f'Unknown codebook strategy {strategy}')
    if eval_method not in ('exact', 'mc'):
        raise ValueError(f'Unknown evaluation method {eval_method}')
    job = partial(_curve_entry, mu=mu, strategy=strategy, eval_method=eval_method, tol=tol, samples=samples,
                  seed=seed, lloyd_iters=lloyd_iters, truncation_tol=truncation_tol)
    entries = parallel_map(job, n_list, workers)
    return ErrorCurve(tuple(entries), _measure_id(mu), f'{strategy}/{eval_method}')
