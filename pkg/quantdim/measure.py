from __future__ import annotations
import logging
import math
from abc import ABC, abstractmethod
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Sequence
import numpy as np
from .errors import BadProbabilities, UnsupportedDim, UnsupportedOrientation
from .ifs_core import IfsModel
from .utils import SAMPLE_BLOCK, check_real, philox


logger = logging.getLogger(__name__)

CHILD_BLOCK = 8  # children expanded per split of an infinite family, before the tail cell


@dataclass(frozen=True)
class SampleBatch:
    points: np.ndarray  # (count, dim)
    seed: int
    depth_used: np.ndarray  # word length per point; 0 for atomic measures

    def __len__(self):
        return self.points.shape[0]

    @property
    def values(self) -> np.ndarray:
        if self.points.shape[1] != 1:
            raise UnsupportedDim('Flat values only exist for one-dimensional samples')
        return self.points[:, 0]


@dataclass(frozen=True)
class Cell:
    """
    Piece of a measure: its mass, an interval [lo, hi] holding its support, the mean of
    the normalized piece and a lower bound on inf_z of the integral of log|y - z| over it.
    """
    mass: float
    lo: float
    hi: float
    mean: float
    log_floor: float
    payload: tuple

    @property
    def is_atom(self) -> bool:
        return self.lo == self.hi

    @property
    def length(self) -> float:
        return self.hi - self.lo


class Measure(ABC):
    """
    Abstract Base Class for the probability measures the quantizers and metrics act on.
    """
    dim: int

    def __repr__(self):
        return self.__str__()

    def _require_line(self):
        if self.dim != 1:
            raise UnsupportedDim('This operation is only implemented for one-dimensional measures')

    @abstractmethod
    def support_hull(self) -> tuple[float, float]:
        pass

    @abstractmethod
    def mean(self) -> float:
        pass

    @abstractmethod
    def cdf_bounds(self, x: float, tol: float = 1e-12, left: bool = False) -> tuple[float, float]:
        """
        Certified enclosure of F(x) = mu((-inf, x]), or of mu((-inf, x)) when left is set

        :param x: a point
        :param tol: largest accepted enclosure width
        :return: lower and upper bound
        """
        pass

    @abstractmethod
    def quantile_bounds(self, u: float, tol: float = 1e-12) -> tuple[float, float]:
        """
        Interval holding Q(u), where Q(u) is the point whose cumulative mass interval
        [F(x-), F(x)) contains u; Q(1) is the right end of the support.
        """
        pass

    @abstractmethod
    def integrated_cdf(self, x: float, tol: float = 1e-12) -> tuple[float, float]:
        """ Enclosure of G(x) = integral of (x - y)^+ dmu(y) """
        pass

    @abstractmethod
    def integrated_quantile(self, u: float, tol: float = 1e-12) -> tuple[float, float]:
        """ Enclosure of H(u) = integral of Q over [0, u] """
        pass

    @abstractmethod
    def root_cell(self) -> Cell:
        pass

    @abstractmethod
    def split(self, cell: Cell) -> list[Cell]:
        """ Partition of a non-atomic cell into smaller cells of the same total mass """
        pass

    @abstractmethod
    def sample(self, count: int, seed: int) -> SampleBatch:
        pass

    @abstractmethod
    def transformed(self, scale: float, shift: float) -> Measure:
        """ Image of the measure under x -> scale * x + shift, scale > 0 """
        pass

    def cdf(self, x: float, tol: float = 1e-12) -> float:
        lo, hi = self.cdf_bounds(x, tol)
        return (lo + hi) / 2

    def quantile(self, u: float, tol: float = 1e-12) -> float:
        lo, hi = self.quantile_bounds(u, tol)
        return (lo + hi) / 2


def _check_count_seed(count: int, seed: int):
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ValueError('Sample count must be a positive integer')
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ValueError('Seed must be a nonnegative integer')


def _check_tol(tol: float):
    check_real(tol, 'Tolerance')
    if tol <= 0:
        raise ValueError('Tolerance must be positive')


class SelfSimilarMeasure(Measure):
    def __init__(self, model: IfsModel, depth_tol: float = 1e-9, name: str = 'self-similar'):
        """
        Invariant measure mu = sum_j p_j mu o S_j^-1 of a model.
        :param model: finite or infinite family
        :param depth_tol: sampled words stop once their cylinder diameter is below this
        :param name: label carried into error curves and exports
        """
        if not isinstance(model, IfsModel):
            raise TypeError('Model must be an IfsModel')
        check_real(depth_tol, 'Depth tolerance')
        if depth_tol <= 0:
            raise ValueError('Depth tolerance must be positive')
        self.model: IfsModel = model
        self.depth_tol: float = float(depth_tol)
        self.name = name
        self.dim: int = model.dim
        self._line_ready = False
        self._floor: float | None = None

    def __str__(self):
        return 'SELF-SIMILAR MEASURE: \n' + \
               f'DEPTH TOL: {self.depth_tol} \n' + \
               str(self.model)

    def __eq__(self, other):
        return isinstance(other, SelfSimilarMeasure) and self.model == other.model

    def __hash__(self):
        return hash(self.model)

    @property
    def is_point_mass(self) -> bool:
        return self.model.is_finite and self.model.size == 1

    def _line(self):
        if self._line_ready:
            return
        self._require_line()
        if self.model.is_finite and self.model.size > 1 and self.model.min_gap() < 0:
            raise ValueError('Images of the ambient interval overlap')
        self._lo, self._hi = self.model.hull()
        self._mean = self.model.first_moment()
        self._line_ready = True

    def _ordered(self):
        self._line()
        if not self.model.orientation_preserving:
            raise UnsupportedOrientation('Distribution recursions need orientation-preserving maps')

    def _prob(self, j: int) -> float:
        return float(self.model.prob(j))

    @property
    def log_floor(self) -> float:
        if self._floor is None:
            self._floor = self.model.log_potential_floor()
        return self._floor

    def support_hull(self) -> tuple[float, float]:
        self._line()
        return self._lo, self._hi

    def mean(self) -> float:
        self._line()
        return self._mean

    def cdf_bounds(self, x: float, tol: float = 1e-12, left: bool = False) -> tuple[float, float]:
        self._ordered()
        _check_tol(tol)
        y = float(x)
        if self.is_point_mass:
            v = float(y > self._lo if left else y >= self._lo)
            return v, v
        # mu has no atoms here, so left and right limits agree
        acc, w = 0., 1.
        while True:
            if y <= self._lo:
                return acc, acc
            if y >= self._hi:
                return acc + w, acc + w
            j, mass_left, _ = self.model.locate(y)
            acc += w * mass_left
            if j is None:
                return acc, acc
            w *= self._prob(j)
            if w <= tol:
                return acc, acc + w
            a, t = self.model.affine(j)
            y = (y - t) / a

    def quantile_bounds(self, u: float, tol: float = 1e-12) -> tuple[float, float]:
        self._ordered()
        _check_tol(tol)
        if self.is_point_mass or u <= 0:
            return self._lo, self._lo
        if u >= 1:
            return self._hi, self._hi
        a, b, w, v = 1., 0., 1., float(u)
        while True:
            found = self.model.child_at_mass(v)
            if found is None:
                x = a * self._hi + b
                return x, x
            j, before, _ = found
            p = self._prob(j)
            v = min(max((v - before) / p, 0.), 1.)
            s, t = self.model.affine(j)
            b = a * t + b
            a = a * s
            w *= p
            if w < tol:
                return a * self._lo + b, a * self._hi + b

    def integrated_cdf(self, x: float, tol: float = 1e-12) -> tuple[float, float]:
        self._ordered()
        _check_tol(tol)
        y = float(x)
        if self.is_point_mass:
            v = max(y - self._lo, 0.)
            return v, v
        acc, scale = 0., 1.
        while True:
            if y <= self._lo:
                return acc, acc
            if y >= self._hi:
                v = acc + scale * (y - self._mean)
                return v, v
            j, mass_left, moment_left = self.model.locate(y)
            acc += scale * (mass_left * y - moment_left)
            if j is None:
                return acc, acc
            a, t = self.model.affine(j)
            scale *= self._prob(j) * a
            y = (y - t) / a
            if scale * (self._hi - self._lo) <= tol:
                # (y - mean)^+ <= G(y) <= (y - lo)^+
                return acc + scale * max(y - self._mean, 0.), acc + scale * max(y - self._lo, 0.)

    def integrated_quantile(self, u: float, tol: float = 1e-12) -> tuple[float, float]:
        self._ordered()
        _check_tol(tol)
        if u <= 0:
            return 0., 0.
        if u >= 1:
            return self._mean, self._mean
        if self.is_point_mass:
            v = u * self._lo
            return v, v
        acc, factor, v = 0., 1., float(u)
        while True:
            found = self.model.child_at_mass(v)
            if found is None:
                w = acc + factor * self._mean
                return w, w
            j, before, moment_before = found
            p = self._prob(j)
            a, t = self.model.affine(j)
            v = min(max((v - before) / p, 0.), 1.)
            acc += factor * (moment_before + p * t * v)
            factor *= p * a
            if factor * (self._hi - self._lo) <= tol:
                return acc + factor * v * self._lo, acc + factor * v * self._hi

    # cell tree
    def root_cell(self) -> Cell:
        self._line()
        if self.is_point_mass:
            return Cell(1., self._lo, self._lo, self._lo, -math.inf, ('word', 1., 0.))
        return Cell(1., self._lo, self._hi, self._mean, self.log_floor, ('word', 1., 0.))

    def _word_cell(self, mass: float, a: float, b: float, j: int) -> Cell:
        s, t = self.model.affine(j)
        a2, b2 = a * s, a * t + b
        ends = sorted((a2 * self._lo + b2, a2 * self._hi + b2))
        return Cell(mass * self._prob(j), ends[0], ends[1], a2 * self._mean + b2,
                    math.log(abs(a2)) + self.log_floor, ('word', a2, b2))

    def _tail_cell(self, mass: float, a: float, b: float, n: int) -> Cell | None:
        tail = self.model.tail_mass(n)
        if tail <= 0.:
            return None
        lo, hi = self.model.tail_hull(n)
        ends = sorted((a * lo + b, a * hi + b))
        floor = math.log(abs(a)) + self.model.tail_lyapunov(n) / tail + self.log_floor
        return Cell(mass * tail, ends[0], ends[1], a * self.model.tail_mean(n) + b, floor, ('tail', a, b, n, mass))

    def split(self, cell: Cell) -> list[Cell]:
        if cell.is_atom:
            raise ValueError('An atomic cell cannot be split')
        kind, a, b = cell.payload[:3]
        if kind == 'word':
            mass, start = cell.mass, 1
        else:
            mass, start = cell.payload[4], cell.payload[3] + 1
        if self.model.is_finite:
            return [self._word_cell(mass, a, b, j) for j in self.model.children(start, None)]
        stop = start + CHILD_BLOCK
        children = [self._word_cell(mass, a, b, j) for j in self.model.children(start, stop)]
        tail = self._tail_cell(mass, a, b, stop - 1)
        if tail is not None:
            children.append(tail)
        return children

    # sampling
    def sample(self, count: int, seed: int) -> SampleBatch:
        _check_count_seed(count, seed)
        points, depths = [], []
        for block, start in enumerate(range(0, count, SAMPLE_BLOCK)):
            size = min(SAMPLE_BLOCK, count - start)
            rng = philox(seed, block)
            if self.dim == 1:
                p, d = self._sample_line(size, rng)
            else:
                p, d = self._sample_space(size, rng)
            points.append(p)
            depths.append(d)
        return SampleBatch(np.concatenate(points), seed, np.concatenate(depths))

    def _sample_line(self, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        diam, center = self.model.diameter, float(self.model.center[0])
        a, b = np.ones(size), np.zeros(size)
        depth = np.zeros(size, dtype=np.int64)
        active = np.ones(size, dtype=bool)
        while active.any():
            idx = np.flatnonzero(active)
            js = self.model.index_from_uniform(rng.random(idx.size))
            s, t = self.model.affine_arrays(js)
            b[idx] += a[idx] * t
            a[idx] *= s
            depth[idx] += 1
            active[idx] = np.abs(a[idx]) * diam >= self.depth_tol
        return (a * center + b)[:, None], depth

    def _sample_space(self, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        k = self.dim
        mats, vecs = self.model.linear_arrays()
        ratios = np.array([float(self.model.ratio(j)) for j in range(1, self.model.size + 1)])
        lin = np.tile(np.eye(k), (size, 1, 1))
        shift = np.zeros((size, k))
        scale = np.ones(size)
        depth = np.zeros(size, dtype=np.int64)
        active = np.ones(size, dtype=bool)
        diam = self.model.diameter
        while active.any():
            idx = np.flatnonzero(active)
            js = self.model.index_from_uniform(rng.random(idx.size)) - 1
            shift[idx] += np.einsum('nij,nj->ni', lin[idx], vecs[js])
            lin[idx] = lin[idx] @ mats[js]
            scale[idx] *= ratios[js]
            depth[idx] += 1
            active[idx] = scale[idx] * diam >= self.depth_tol
        return np.einsum('nij,j->ni', lin, self.model.center) + shift, depth

    def transformed(self, scale: float, shift: float) -> SelfSimilarMeasure:
        return SelfSimilarMeasure(self.model.transformed(scale, shift), self.depth_tol, self.name)


class DiscreteMeasure(Measure):
    def __init__(self, atoms: Sequence[float], weights: Sequence[float] | None = None, name: str = 'discrete'):
        """
        Finitely supported measure on the line.
        :param atoms: atom locations; repeated locations are merged
        :param weights: positive weights summing to 1; uniform when omitted
        :param name: label carried into error curves and exports
        """
        x = np.asarray(atoms, dtype=float).reshape(-1)
        if x.size == 0:
            raise ValueError('A discrete measure needs at least one atom')
        if not np.all(np.isfinite(x)):
            raise ValueError('Atoms must be finite')
        w = np.full(x.size, 1. / x.size) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
        if w.size != x.size:
            raise ValueError('Atoms and weights must have equal lengths')
        if np.any(w <= 0):
            raise BadProbabilities('Weights must be strictly positive')
        if abs(math.fsum(w) - 1.) > 1e-12:
            raise BadProbabilities(f'Weights must sum to 1, got {math.fsum(w)}')
        self.dim = 1
        self.name = name
        self.atoms, inverse = np.unique(x, return_inverse=True)
        self.weights = np.bincount(inverse, weights=w)
        self._atoms = self.atoms.tolist()
        self._cum = np.concatenate([[0.], np.cumsum(self.weights)])
        self._cum[-1] = 1.
        self._cum_list = self._cum.tolist()
        self._cum_moment = np.concatenate([[0.], np.cumsum(self.weights * self.atoms)])

    @classmethod
    def point_mass(cls, x: float) -> DiscreteMeasure:
        return cls([x])

    def __str__(self):
        return 'DISCRETE MEASURE: \n' + \
               f'ATOMS: {self.atoms.size} \n' + \
               f'SUPPORT: [{self.atoms[0]}, {self.atoms[-1]}] \n\n'

    def __eq__(self, other):
        return isinstance(other, DiscreteMeasure) and np.array_equal(self.atoms, other.atoms) and \
            np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.atoms.tobytes(), self.weights.tobytes()))

    def support_hull(self) -> tuple[float, float]:
        return float(self.atoms[0]), float(self.atoms[-1])

    def mean(self) -> float:
        return float(self._cum_moment[-1])

    def cdf_bounds(self, x: float, tol: float = 1e-12, left: bool = False) -> tuple[float, float]:
        k = bisect_left(self._atoms, x) if left else bisect_right(self._atoms, x)
        v = self._cum_list[k]
        return v, v

    def _quantile_index(self, u: float) -> int:
        return min(max(bisect_right(self._cum_list, u) - 1, 0), len(self._atoms) - 1)

    def quantile_bounds(self, u: float, tol: float = 1e-12) -> tuple[float, float]:
        x = self._atoms[-1] if u >= 1 else self._atoms[self._quantile_index(u)]
        return x, x

    def integrated_cdf(self, x: float, tol: float = 1e-12) -> tuple[float, float]:
        k = bisect_right(self._atoms, x)
        v = float(self._cum[k] * x - self._cum_moment[k])
        return v, v

    def integrated_quantile(self, u: float, tol: float = 1e-12) -> tuple[float, float]:
        if u <= 0:
            return 0., 0.
        if u >= 1:
            return self.mean(), self.mean()
        k = self._quantile_index(u)
        v = float(self._cum_moment[k] + (u - self._cum[k]) * self.atoms[k])
        return v, v

    def _slice(self, i: int, k: int) -> Cell:
        mass = float(self._cum[k] - self._cum[i])
        mean = float(self._cum_moment[k] - self._cum_moment[i]) / mass
        if k - i == 1:
            mean = self._atoms[i]
        return Cell(mass, self._atoms[i], self._atoms[k - 1], mean, -math.inf, ('atoms', i, k))

    def root_cell(self) -> Cell:
        return self._slice(0, len(self._atoms))

    def split(self, cell: Cell) -> list[Cell]:
        _, i, k = cell.payload
        if k - i < 2:
            raise ValueError('An atomic cell cannot be split')
        mid = (i + k) // 2
        return [self._slice(i, mid), self._slice(mid, k)]

    def sample(self, count: int, seed: int) -> SampleBatch:
        _check_count_seed(count, seed)
        points = []
        for block, start in enumerate(range(0, count, SAMPLE_BLOCK)):
            size = min(SAMPLE_BLOCK, count - start)
            u = philox(seed, block).random(size)
            idx = np.minimum(np.searchsorted(self._cum, u, side='right') - 1, self.atoms.size - 1)
            points.append(self.atoms[idx])
        return SampleBatch(np.concatenate(points)[:, None], seed, np.zeros(count, dtype=np.int64))

    def transformed(self, scale: float, shift: float) -> DiscreteMeasure:
        if scale <= 0:
            raise ValueError('Scale must be positive')
        return DiscreteMeasure(scale * self.atoms + shift, self.weights, self.name)


def sample(mu: Measure, count: int, seed: int) -> SampleBatch:
    return mu.sample(count, seed)


def cdf(mu: Measure, x: float, tol: float = 1e-12) -> float:
    return mu.cdf(x, tol)


def quantile(mu: Measure, u: float, tol: float = 1e-12) -> float:
    return mu.quantile(u, tol)


def self_similarity_residual(mu: SelfSimilarMeasure, points: int = 100, tol: float = 1e-8, seed: int = 0) -> float:
    """
    Largest violation of F(x) = sum_j p_j F(S_j^-1 x) over random test points. Infinite
    families are cut where the remaining mass is below tol; the cut-off maps contribute
    0 or their whole mass when x is outside their images, and half of it otherwise.
    """
    mu._ordered()
    _check_count_seed(points, seed)
    _check_tol(tol)
    model = mu.model
    n = model.size if model.is_finite else model.truncation_index(tol)
    tail = 0. if model.is_finite else model.tail_mass(n)
    tail_lo, tail_hi = (0., 0.) if model.is_finite else model.tail_hull(n)
    lo, hi = mu.support_hull()
    pad = 0.05 * max(hi - lo, 1.)
    xs = philox(seed).uniform(lo - pad, hi + pad, points)
    probs = [float(model.prob(j)) for j in range(1, n + 1)]
    maps = [model.affine(j) for j in range(1, n + 1)]
    worst = 0.
    for x in xs:
        parts = [p * mu.cdf((x - t) / a, tol) for p, (a, t) in zip(probs, maps)]
        if x >= tail_hi:
            rest = tail
        elif x < tail_lo:
            rest = 0.
        else:
            rest = tail / 2
        worst = max(worst, abs(mu.cdf(x, tol) - math.fsum(parts) - rest))
    logger.debug('Self-similarity residual %s over %d points', worst, points)
    return worst
