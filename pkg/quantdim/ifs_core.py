from __future__ import annotations
import logging
import math
from abc import ABC, abstractmethod
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from numbers import Real
from typing import Sequence, Tuple
import numpy as np
from .errors import BadIndex, BadProbabilities, InfeasiblePacking, NonContractive, UnsupportedDim
from .utils import check_real, is_exact


logger = logging.getLogger(__name__)

Word = Tuple[int, ...]  # letters are 1-based map indices; () is the empty word

ORTHOGONAL_TOL = 1e-12
PROB_TOL = 1e-12
LEVEL_MAPS_LIMIT = 4096  # largest iterated system used for the touching-images potential bound
HULL_TOL = 1e-16


@dataclass(frozen=True)
class SimilarityMap:
    """
    Contractive similarity x -> ratio * orthogonal @ x + translation.
    In one dimension the orthogonal part is a sign and exact (Fraction) inputs stay exact.
    """
    ratio: Real
    translation: tuple
    orthogonal: tuple | None = None  # rows of a k x k orthogonal matrix; None means identity

    def __post_init__(self):
        check_real(self.ratio, 'Similarity ratio')
        if not 0 < self.ratio < 1:
            raise NonContractive(f'Similarity ratio must lie in (0, 1), got {self.ratio}')
        translation = tuple(self.translation) if isinstance(self.translation, (tuple, list, np.ndarray)) \
            else (self.translation,)
        if not translation:
            raise ValueError('Translation must have at least one component')
        for t in translation:
            check_real(t, 'Translation component')
        object.__setattr__(self, 'translation', translation)
        k = len(translation)
        if self.orthogonal is None:
            return
        if isinstance(self.orthogonal, Real):
            rows = ((self.orthogonal,),)
        else:
            rows = tuple(tuple(row) for row in self.orthogonal)
        if len(rows) != k or any(len(row) != k for row in rows):
            raise ValueError(f'Orthogonal part must be a {k}x{k} matrix')
        if k == 1:
            if rows[0][0] not in (1, -1):
                raise ValueError('One-dimensional orthogonal part must be +1 or -1')
        else:
            q = np.array(rows, dtype=float)
            if not np.allclose(q @ q.T, np.eye(k), rtol=0., atol=ORTHOGONAL_TOL):
                raise ValueError('Orthogonal part must be an orthogonal matrix')
        object.__setattr__(self, 'orthogonal', rows)

    @classmethod
    def _unchecked(cls, ratio, translation: tuple, orthogonal: tuple | None) -> SimilarityMap:
        obj = object.__new__(cls)
        object.__setattr__(obj, 'ratio', ratio)
        object.__setattr__(obj, 'translation', translation)
        object.__setattr__(obj, 'orthogonal', orthogonal)
        return obj

    @classmethod
    def identity(cls, dim: int = 1) -> SimilarityMap:
        return cls._unchecked(1, (0,) * dim, None)

    @property
    def dim(self) -> int:
        return len(self.translation)

    @property
    def sign(self) -> int:
        if self.dim != 1:
            raise UnsupportedDim('Orientation sign is only defined in one dimension')
        return 1 if self.orthogonal is None else int(self.orthogonal[0][0])

    @property
    def matrix(self) -> np.ndarray:
        if self.orthogonal is None:
            return np.eye(self.dim)
        return np.array(self.orthogonal, dtype=float)

    @property
    def vector(self) -> np.ndarray:
        return np.array([float(t) for t in self.translation])

    @property
    def orientation_preserving(self) -> bool:
        if self.dim == 1:
            return self.sign == 1
        return bool(np.linalg.det(self.matrix) > 0)

    def __call__(self, x):
        if self.dim == 1 and isinstance(x, Real):
            return self.ratio * self.sign * x + self.translation[0]
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return float(self.ratio) * self.sign * x + float(self.translation[0])
        return float(self.ratio) * (x @ self.matrix.T) + self.vector

    def inverse(self, y):
        """ Preimage of y """
        if self.dim == 1 and isinstance(y, Real):
            return (y - self.translation[0]) / (self.ratio * self.sign)
        y = np.asarray(y, dtype=float)
        if self.dim == 1:
            return (y - float(self.translation[0])) / (float(self.ratio) * self.sign)
        return ((y - self.vector) @ self.matrix) / float(self.ratio)

    def compose(self, other: SimilarityMap) -> SimilarityMap:
        """ self o other """
        if other.dim != self.dim:
            raise ValueError('Cannot compose similarities of different dimensions')
        ratio = self.ratio * other.ratio
        if self.dim == 1:
            sign = self.sign * other.sign
            shift = self.ratio * self.sign * other.translation[0] + self.translation[0]
            return self._unchecked(ratio, (shift,), None if sign == 1 else ((-1,),))
        if self.orthogonal is None and other.orthogonal is None:
            orthogonal = None
        else:
            orthogonal = tuple(tuple(float(v) for v in row) for row in self.matrix @ other.matrix)
        shift = float(self.ratio) * (self.matrix @ other.vector) + self.vector
        return self._unchecked(ratio, tuple(float(v) for v in shift), orthogonal)


@dataclass(frozen=True)
class SeriesValue:
    value: float
    tail_bound: float
    terms_used: int

    def __contains__(self, x: float) -> bool:
        return self.value - self.tail_bound <= x <= self.value + self.tail_bound


@dataclass(frozen=True)
class SeparationReport:
    gaps: tuple  # (i, j, gap) per pair of the checked images; negative gap means overlap
    min_gap: float
    passed: bool
    tail_gap: float | None = None  # residual gap to the images beyond the checked ones


class IfsModel(ABC):
    """
    Abstract Base Class for a (finite or countably infinite) family of contractive
    similarities with a probability vector. Indices are 1-based.
    """
    def __init__(self, dim: int, ambient: Sequence[Sequence[Real]] | None):
        if not isinstance(dim, int) or dim < 1:
            raise ValueError('Dimension must be a positive integer')
        self.dim: int = dim
        if ambient is None:
            ambient = ((0, 1),) * dim
        ambient = tuple((lo, hi) for lo, hi in ambient)
        if len(ambient) != dim:
            raise ValueError('Ambient box must have one interval per dimension')
        for lo, hi in ambient:
            check_real(lo, 'Ambient bound')
            check_real(hi, 'Ambient bound')
            if not lo < hi:
                raise ValueError('Ambient intervals must have lo < hi')
        self.ambient: tuple = ambient

    def __repr__(self):
        return self.__str__()

    @property
    def diameter(self) -> float:
        return math.sqrt(sum(float(hi - lo) ** 2 for lo, hi in self.ambient))

    @property
    def center(self) -> np.ndarray:
        return np.array([float(lo + hi) / 2 for lo, hi in self.ambient])

    @property
    @abstractmethod
    def size(self) -> int | None:
        """ Number of maps, None for an infinite family """
        pass

    @property
    def is_finite(self) -> bool:
        return self.size is not None

    @property
    @abstractmethod
    def sup_ratio(self) -> float:
        pass

    @property
    @abstractmethod
    def orientation_preserving(self) -> bool:
        pass

    @abstractmethod
    def prob(self, j: int) -> Real:
        pass

    @abstractmethod
    def ratio(self, j: int) -> Real:
        pass

    @abstractmethod
    def similarity(self, j: int) -> SimilarityMap:
        pass

    @abstractmethod
    def log_probs(self, js: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def log_ratios(self, js: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def affine(self, j: int) -> tuple[float, float]:
        """ One-dimensional S_j as (signed ratio, shift) floats """
        pass

    @abstractmethod
    def affine_arrays(self, js: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """ Vectorized affine() """
        pass

    @abstractmethod
    def index_from_uniform(self, u: np.ndarray) -> np.ndarray:
        """
        Inverse CDF of the index distribution (p_j)

        :param u: uniforms in [0, 1)
        :return: 1-based indices
        """
        pass

    @abstractmethod
    def tail_mass(self, n: int) -> float:
        """ sum_{j>n} p_j """
        pass

    @abstractmethod
    def tail_entropy(self, n: int) -> float:
        """ sum_{j>n} p_j log p_j """
        pass

    @abstractmethod
    def tail_moment(self, n: int) -> float:
        """ sum_{j>n} j p_j """
        pass

    @abstractmethod
    def tail_lyapunov(self, n: int) -> float:
        """ sum_{j>n} p_j log s_j """
        pass

    @abstractmethod
    def tail_power(self, n: int, x: float) -> float:
        """ sum_{j>n} p_j x^j """
        pass

    def check_index(self, j) -> int:
        if isinstance(j, bool) or not isinstance(j, (int, np.integer)) or j < 1 or \
                (self.size is not None and j > self.size):
            raise BadIndex(f'Map index {j} is not a valid index for this model')
        return int(j)

    def cum_prob(self, n: int) -> float:
        """ L_n = sum_{j<=n} p_j """
        return 1. - self.tail_mass(n)

    def truncation_index(self, tol: float) -> int:
        """ Smallest n >= 1 with tail_mass(n) <= tol """
        if tol <= 0:
            raise ValueError('Tolerance must be positive')
        n = 1
        while self.tail_mass(n) > tol:
            n = n * 2
        lo, hi = n // 2, n
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.tail_mass(mid) > tol:
                lo = mid
            else:
                hi = mid
        return max(hi, 1)

    def entropy_series(self, tol: float = 1e-12) -> SeriesValue:
        return self._series(self.tail_entropy, self.log_probs, tol)

    def lyapunov_series(self, tol: float = 1e-12) -> SeriesValue:
        return self._series(self.tail_lyapunov, self.log_ratios, tol)

    def _series(self, tail, log_terms, tol: float) -> SeriesValue:
        if tol <= 0:
            raise ValueError('Tolerance must be positive')
        if self.is_finite:
            return SeriesValue(tail(0), 0., self.size)
        return SeriesValue(tail(0), 0., 0)

    def partial_series(self, n: int) -> tuple[float, float]:
        """
        Brute partial sums of sum p_j log p_j and sum p_j log s_j over j <= n,
        evaluated in log space so tiny probabilities underflow to exact zeros.
        """
        js = np.arange(1, n + 1)
        log_p = self.log_probs(js)
        p = np.exp(log_p)
        return math.fsum(p * log_p), math.fsum(p * self.log_ratios(js))

    # one-dimensional structure
    def _require_line(self):
        if self.dim != 1:
            raise UnsupportedDim('This operation is only implemented for one-dimensional models')

    @abstractmethod
    def image(self, j: int) -> tuple:
        """ The interval S_j(X) """
        pass

    @abstractmethod
    def hull(self) -> tuple[float, float]:
        """ Smallest interval containing the support of the invariant measure """
        pass

    @abstractmethod
    def first_moment(self) -> float:
        pass

    @abstractmethod
    def locate(self, y: float) -> tuple[int | None, float, float]:
        """
        Finds where y falls among the images S_j(X).

        :param y: a point
        :return: index of the image containing y (None in a gap or outside), the mass of
                 the images entirely left of y and their first moment sum p_i mean_i
        """
        pass

    @abstractmethod
    def child_at_mass(self, v: float) -> tuple[int, float, float] | None:
        """
        Child whose cumulative mass interval [before, before + p_j) holds v, in
        left-to-right image order.

        :return: index, mass before it and first moment before it; None for v >= 1
        """
        pass

    @abstractmethod
    def children(self, start: int, stop: int | None) -> list[int]:
        """ Indices start..stop-1 that exist, stop=None meaning all remaining ones (finite models) """
        pass

    @abstractmethod
    def tail_hull(self, n: int) -> tuple[float, float] | None:
        """ Interval holding every image S_j(X), j > n; None when there are none """
        pass

    @abstractmethod
    def tail_mean(self, n: int) -> float:
        """ sum_{j>n} p_j mean(S_j mu) / tail_mass(n) """
        pass

    @abstractmethod
    def log_potential_floor(self) -> float:
        """ Certified lower bound on inf_z integral log|y - z| dmu(y) """
        pass


class FiniteIfs(IfsModel):
    def __init__(self, maps: Sequence[SimilarityMap], probs: Sequence[Real], ambient=None):
        """
        Finite family {(S_j, p_j)}.
        :param maps: contractive similarities, all of the same dimension
        :param probs: positive probabilities summing to 1
        :param ambient: compact box X as one (lo, hi) pair per dimension; defaults to the unit cube
        """
        maps = tuple(maps)
        probs = tuple(probs)
        if not maps:
            raise ValueError('A model needs at least one map')
        if len(maps) != len(probs):
            raise ValueError('Maps and probabilities must have equal lengths')
        for m in maps:
            if not isinstance(m, SimilarityMap):
                raise TypeError('Maps must be SimilarityMap instances')
            if m.ratio >= 1:
                raise NonContractive(f'Similarity ratio must lie in (0, 1), got {m.ratio}')
        dim = maps[0].dim
        if any(m.dim != dim for m in maps):
            raise ValueError('All maps must have the same dimension')
        super().__init__(dim, ambient)
        for p in probs:
            check_real(p, 'Probability')
            if p <= 0:
                raise BadProbabilities('Probabilities must be strictly positive')
        if all(is_exact(p) for p in probs):
            if sum(probs) != 1:
                raise BadProbabilities(f'Probabilities must sum to 1, got {sum(probs)}')
        elif abs(math.fsum(float(p) for p in probs) - 1.) > PROB_TOL:
            raise BadProbabilities(f'Probabilities must sum to 1, got {math.fsum(float(p) for p in probs)}')
        self.maps: tuple = maps
        self.probabilities: tuple = probs
        self._p = np.array([float(p) for p in probs])
        self._s = np.array([float(m.ratio) for m in maps])
        self._cum_index = np.cumsum(self._p)
        self._cum_index[-1] = 1.
        if dim == 1:
            self._build_line()

    def __str__(self):
        return 'FINITE IFS: \n' + \
               f'MAPS: {self.size} \n' + \
               f'RATIOS: {[float(m.ratio) for m in self.maps]} \n' + \
               f'PROBABILITIES: {[float(p) for p in self.probabilities]} \n\n'

    def __eq__(self, other):
        return isinstance(other, FiniteIfs) and self.maps == other.maps and \
            self.probabilities == other.probabilities and self.ambient == other.ambient

    def __hash__(self):
        return hash((self.maps, self.probabilities, self.ambient))

    def _build_line(self):
        lo, hi = self.ambient[0]
        images = [tuple(sorted((float(m(lo)), float(m(hi))))) for m in self.maps]
        self._order = sorted(range(self.size), key=lambda i: images[i][0])
        self._lo_sorted = [images[i][0] for i in self._order]
        self._hi_sorted = [images[i][1] for i in self._order]
        self._signs = np.array([m.sign for m in self.maps])
        self._shifts = np.array([float(m.translation[0]) for m in self.maps])
        self._mean = self._solve_mean()
        means = self._signs * self._s * self._mean + self._shifts
        p_sorted = self._p[self._order]
        self._cum = np.concatenate([[0.], np.cumsum(p_sorted)])
        self._cum[-1] = 1.
        self._cum_moment = np.concatenate([[0.], np.cumsum(p_sorted * means[self._order])])

    def _solve_mean(self) -> float:
        return float(np.dot(self._p, self._shifts) / (1. - np.dot(self._p, self._signs * self._s)))

    @property
    def size(self) -> int:
        return len(self.maps)

    @property
    def sup_ratio(self) -> float:
        return float(self._s.max())

    @property
    def orientation_preserving(self) -> bool:
        return all(m.orientation_preserving for m in self.maps)

    def prob(self, j: int) -> Real:
        return self.probabilities[self.check_index(j) - 1]

    def ratio(self, j: int) -> Real:
        return self.maps[self.check_index(j) - 1].ratio

    def similarity(self, j: int) -> SimilarityMap:
        return self.maps[self.check_index(j) - 1]

    def affine(self, j: int) -> tuple[float, float]:
        self._require_line()
        i = self.check_index(j) - 1
        return float(self._signs[i] * self._s[i]), float(self._shifts[i])

    def affine_arrays(self, js: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        self._require_line()
        idx = np.asarray(js) - 1
        return (self._signs * self._s)[idx], self._shifts[idx]

    def linear_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """ Stacked (ratio * orthogonal) matrices and translation vectors of all maps """
        return np.stack([float(m.ratio) * m.matrix for m in self.maps]), np.stack([m.vector for m in self.maps])

    def log_probs(self, js: np.ndarray) -> np.ndarray:
        js = np.asarray(js)
        return np.log(self._p[np.minimum(js, self.size) - 1])

    def log_ratios(self, js: np.ndarray) -> np.ndarray:
        js = np.asarray(js)
        return np.log(self._s[np.minimum(js, self.size) - 1])

    def index_from_uniform(self, u: np.ndarray) -> np.ndarray:
        return np.minimum(np.searchsorted(self._cum_index, u, side='right'), self.size - 1) + 1

    def tail_mass(self, n: int) -> float:
        return math.fsum(self._p[n:])

    def tail_entropy(self, n: int) -> float:
        return math.fsum(self._p[n:] * np.log(self._p[n:]))

    def tail_moment(self, n: int) -> float:
        return math.fsum(self._p[n:] * np.arange(n + 1, self.size + 1))

    def tail_lyapunov(self, n: int) -> float:
        return math.fsum(self._p[n:] * np.log(self._s[n:]))

    def tail_power(self, n: int, x: float) -> float:
        return math.fsum(self._p[n:] * float(x) ** np.arange(n + 1, self.size + 1))

    def cum_prob(self, n: int) -> float:
        return math.fsum(self._p[:n])

    def transformed(self, scale: Real, shift: Real) -> FiniteIfs:
        """
        Conjugates a one-dimensional model by T(x) = scale * x + shift; the invariant
        measure of the result is the image of this one under T.
        """
        self._require_line()
        check_real(scale, 'Scale')
        if scale <= 0:
            raise ValueError('Scale must be positive')
        maps = []
        for m in self.maps:
            rs = m.ratio * m.sign
            maps.append(SimilarityMap(m.ratio, (scale * m.translation[0] + shift - rs * shift,), m.orthogonal))
        lo, hi = self.ambient[0]
        return FiniteIfs(maps, self.probabilities, ((scale * lo + shift, scale * hi + shift),))

    def image(self, j: int) -> tuple:
        self._require_line()
        m = self.similarity(j)
        lo, hi = self.ambient[0]
        return tuple(sorted((m(lo), m(hi))))

    def hull(self) -> tuple[float, float]:
        self._require_line()
        if self.size == 1:
            point = float(self._fixed_point())
            return point, point
        lo, hi = (float(v) for v in self.ambient[0])
        # the width shrinks at least by sup_ratio per pass
        passes = math.ceil(math.log(HULL_TOL) / math.log(self.sup_ratio)) + 8
        for _ in range(passes):
            ends = [(r * sg * lo + t, r * sg * hi + t) for r, sg, t in zip(self._s, self._signs, self._shifts)]
            new_lo = float(min(min(e) for e in ends))
            new_hi = float(max(max(e) for e in ends))
            if abs(new_lo - lo) <= HULL_TOL and abs(new_hi - hi) <= HULL_TOL:
                return new_lo, new_hi
            lo, hi = new_lo, new_hi
        return lo, hi

    def _fixed_point(self) -> Real:
        m = self.maps[0]
        return m.translation[0] / (1 - m.sign * m.ratio)

    def first_moment(self) -> float:
        self._require_line()
        return self._mean

    def _exact_images(self) -> list[tuple]:
        """ Images of the ambient interval sorted by left end, in exact arithmetic when the maps are exact """
        return sorted(self.image(j) for j in range(1, self.size + 1))

    def min_gap(self) -> float:
        """ Smallest gap between consecutive images; negative when images overlap """
        self._require_line()
        if self.size == 1:
            return math.inf
        images = self._exact_images()
        return float(min(images[i + 1][0] - images[i][1] for i in range(self.size - 1)))

    def locate(self, y: float) -> tuple[int | None, float, float]:
        idx = bisect_right(self._lo_sorted, y) - 1
        if idx >= 0 and y <= self._hi_sorted[idx]:
            return self._order[idx] + 1, float(self._cum[idx]), float(self._cum_moment[idx])
        return None, float(self._cum[idx + 1]), float(self._cum_moment[idx + 1])

    def child_at_mass(self, v: float) -> tuple[int, float, float] | None:
        if v >= 1.:
            return None
        k = min(bisect_right(self._cum, v) - 1, self.size - 1)
        k = max(k, 0)
        return self._order[k] + 1, float(self._cum[k]), float(self._cum_moment[k])

    def children(self, start: int, stop: int | None) -> list[int]:
        stop = self.size + 1 if stop is None else min(stop, self.size + 1)
        return list(range(start, stop))

    def tail_hull(self, n: int) -> tuple[float, float] | None:
        if n >= self.size:
            return None
        images = [self.image(j) for j in range(n + 1, self.size + 1)]
        return float(min(i[0] for i in images)), float(max(i[1] for i in images))

    def tail_mean(self, n: int) -> float:
        mass = self.tail_mass(n)
        means = self._signs[n:] * self._s[n:] * self._mean + self._shifts[n:]
        return math.fsum(self._p[n:] * means) / mass

    def log_potential_floor(self) -> float:
        self._require_line()
        if self.size == 1:
            return -math.inf
        gaps = self._side_gaps()
        if min(gaps.values()) < 0:
            raise ValueError('Images of the ambient interval overlap')
        if min(gaps.values()) > 0:
            return self._gap_floor(gaps)
        neighbour = self._neighbour_floor()
        if neighbour is None:
            raise ValueError('Could not bound the logarithmic potential of this model')
        return neighbour

    def _side_gaps(self) -> dict[int, Real]:
        """ For each map index, the narrower of the gaps on either side of its image """
        order = sorted(range(1, self.size + 1), key=lambda j: self.image(j)[0])
        images = [self.image(j) for j in order]
        gaps = {}
        for k, j in enumerate(order):
            sides = []
            if k > 0:
                sides.append(images[k][0] - images[k - 1][1])
            if k + 1 < len(order):
                sides.append(images[k + 1][0] - images[k][1])
            gaps[j] = min(sides)
        return gaps

    def _gap_floor(self, gaps: dict[int, Real]) -> float:
        """
        A point no farther from image i than from image j is at least half the side gap of j away
        from S_j(X), so every z has some i with
        F >= (sum_{j != i} p_j log(g_j / 2) + p_i log s_i) / (1 - p_i).
        """
        log_half = np.array([math.log(gaps[j] / 2) for j in range(1, self.size + 1)])
        total = math.fsum(self._p * log_half)
        bounds = (total - self._p * log_half + self._p * np.log(self._s)) / (1. - self._p)
        return float(bounds.min())

    def _neighbour_floor(self) -> float | None:
        """
        Bound from an iterated system: a point sees at most its nearest cylinder and the
        two adjacent ones closer than the shortest cylinder length.
        """
        level = 1
        lo, hi = (float(v) for v in self.ambient[0])
        while self.size ** level <= LEVEL_MAPS_LIMIT:
            cylinders = []
            for word in product(range(self.size), repeat=level):
                p = float(np.prod(self._p[list(word)]))
                s = float(np.prod(self._s[list(word)]))
                m = SimilarityMap.identity(1)
                for letter in word:
                    m = m.compose(self.maps[letter])
                a, b = sorted((float(m(lo)), float(m(hi))))
                cylinders.append((a, b, p, s))
            cylinders.sort()
            shortest = min(b - a for a, b, _, _ in cylinders)
            if shortest <= 0.:
                return None
            worst = math.inf
            for i in range(len(cylinders)):
                near = cylinders[max(i - 1, 0):i + 2]
                mass = sum(c[2] for c in near)
                if mass >= 1. - 1e-15:
                    break
                bound = (sum(c[2] * math.log(c[3]) for c in near) + (1. - mass) * math.log(shortest)) / (1. - mass)
                worst = min(worst, bound)
            else:
                return worst
            level += 1
        return None


class GeometricIfs(IfsModel):
    def __init__(self, a: Real, b: Real, c: Real, head: Sequence[Real] = ()):
        """
        Infinite family on X = [0, 1] with s_j = c b^j and images packed left to right.
        Probabilities: p_j = head[j-1] for j <= h, and (1 - sum(head)) (1 - a) a^(j-h-1) after.
        :param a: geometric ratio of the probability tail, in (0, 1)
        :param b: geometric ratio of the similarity ratios, in (0, 1)
        :param c: ratio scale, c > 0 with c b / (1 - b) < 1
        :param head: optional explicit leading probabilities
        """
        super().__init__(1, ((0, 1),))
        for name, v in (('a', a), ('b', b)):
            check_real(v, f'Parameter {name}')
            if not 0 < v < 1:
                raise ValueError(f'Parameter {name} must lie in (0, 1)')
        check_real(c, 'Parameter c')
        if c <= 0:
            raise ValueError('Parameter c must be positive')
        head = tuple(head)
        for q in head:
            check_real(q, 'Probability')
            if q <= 0:
                raise BadProbabilities('Probabilities must be strictly positive')
        one = Fraction(1) if all(is_exact(v) for v in (a, b, c, *head)) else 1.
        rest = one - sum(head)
        if rest <= 0:
            raise BadProbabilities('Head probabilities must leave a positive tail mass')
        total = c * b / (1 - b)
        if total >= 1:
            raise InfeasiblePacking(f'Total image length c*b/(1-b) = {float(total)} must be below 1')
        self.a, self.b, self.c = a, b, c
        self.head: tuple = head
        self.rest = rest
        # leftover length 1 - total is spread as gaps before images 2, 3, ...,
        # each proportional to the image that follows it
        s1 = c * b
        self.stretch = (one - s1) / (total - s1)
        self.kappa = c * (one + self.stretch * b / (one - b))
        self._a, self._b, self._c = float(a), float(b), float(c)
        self._h = len(head)
        self._head = np.array([float(q) for q in head])
        self._rest = float(rest)
        self._cum_head = np.cumsum(self._head) if head else np.zeros(0)
        self._kappa = float(self.kappa)
        self._stretch = float(self.stretch)
        power = self.tail_power(0, self._b)
        self._mean = (1. - self._kappa * power) / (1. - self._c * power)

    def __str__(self):
        return 'GEOMETRIC IFS: \n' + \
               f'A: {self.a} \n' + \
               f'B: {self.b} \n' + \
               f'C: {self.c} \n' + \
               f'HEAD: {self.head} \n\n'

    def __eq__(self, other):
        return isinstance(other, GeometricIfs) and \
            (self.a, self.b, self.c, self.head) == (other.a, other.b, other.c, other.head)

    def __hash__(self):
        return hash((self.a, self.b, self.c, self.head))

    @property
    def size(self) -> None:
        return None

    @property
    def sup_ratio(self) -> float:
        return self._c * self._b

    @property
    def orientation_preserving(self) -> bool:
        return True

    def prob(self, j: int) -> Real:
        j = self.check_index(j)
        if j <= self._h:
            return self.head[j - 1]
        return self.rest * (1 - self.a) * self.a ** (j - self._h - 1)

    def ratio(self, j: int) -> Real:
        return self.c * self.b ** self.check_index(j)

    def shift(self, j: int) -> Real:
        j = self.check_index(j)
        s1 = self.c * self.b
        return s1 + self.stretch * self.c * self.b ** 2 * (1 - self.b ** (j - 1)) / (1 - self.b) - self.c * self.b ** j

    def similarity(self, j: int) -> SimilarityMap:
        return SimilarityMap(self.ratio(j), (self.shift(j),))

    def log_probs(self, js: np.ndarray) -> np.ndarray:
        js = np.asarray(js)
        tail = math.log(self._rest * (1. - self._a)) + (js - self._h - 1) * math.log(self._a)
        if not self._h:
            return tail
        head = np.log(self._head[np.clip(js, 1, self._h) - 1])
        return np.where(js <= self._h, head, tail)

    def log_ratios(self, js: np.ndarray) -> np.ndarray:
        return math.log(self._c) + np.asarray(js) * math.log(self._b)

    def ratios(self, js: np.ndarray) -> np.ndarray:
        return self._c * self._b ** np.asarray(js, dtype=float)

    def shifts(self, js: np.ndarray) -> np.ndarray:
        return self.right_end(np.asarray(js, dtype=float)) - self.ratios(js)

    def affine(self, j: int) -> tuple[float, float]:
        return self._c * self._b ** j, float(self.right_end(j) - self._c * self._b ** j)

    def affine_arrays(self, js: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.ratios(js), self.shifts(js)

    def map_tail_bound(self, n: int) -> float:
        """ sum_{j>n} sup_X |S_j(x) - 1|, the distance of the tail maps from the accumulation point """
        return (self._kappa + self._c) * self._b ** (n + 1) / (1. - self._b)

    def index_from_uniform(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        head_total = float(self._cum_head[-1]) if self._h else 0.
        v = np.clip((u - head_total) / self._rest, 0., 1. - 1e-16)
        k = np.maximum(np.ceil(np.log1p(-v) / math.log(self._a)), 1).astype(np.int64)
        js = self._h + k
        if self._h:
            in_head = u < head_total
            head_js = np.minimum(np.searchsorted(self._cum_head, u, side='right'), self._h - 1) + 1
            js = np.where(in_head, head_js, js)
        return js

    def _split(self, n: int) -> int:
        """ exponent offset of the geometric part of a tail sum starting after n """
        return max(n - self._h, 0)

    def tail_mass(self, n: int) -> float:
        k0 = self._split(n)
        return math.fsum(self._head[n:]) + self._rest * self._a ** k0

    def tail_power(self, n: int, x: float) -> float:
        """ sum_{j>n} p_j x^j """
        k0 = self._split(n)
        head = math.fsum(q * x ** j for j, q in enumerate(self._head, start=1) if j > n)
        return head + self._rest * (1. - self._a) * x ** self._h * x * (self._a * x) ** k0 / (1. - self._a * x)

    def tail_moment(self, n: int) -> float:
        k0 = self._split(n)
        head = math.fsum(j * q for j, q in enumerate(self._head, start=1) if j > n)
        return head + self._rest * self._a ** k0 * (self._h + k0 + 1. / (1. - self._a))

    def tail_entropy(self, n: int) -> float:
        k0 = self._split(n)
        head = math.fsum(q * math.log(q) for j, q in enumerate(self._head, start=1) if j > n)
        return head + self._rest * self._a ** k0 * (
            math.log(self._rest * (1. - self._a)) + math.log(self._a) * (k0 + self._a / (1. - self._a)))

    def tail_lyapunov(self, n: int) -> float:
        return math.log(self._c) * self.tail_mass(n) + math.log(self._b) * self.tail_moment(n)

    def entropy_series(self, tol: float = 1e-12, closed_form: bool = True) -> SeriesValue:
        if closed_form:
            return super().entropy_series(tol)
        return self._partial(tol, 0)

    def lyapunov_series(self, tol: float = 1e-12, closed_form: bool = True) -> SeriesValue:
        if closed_form:
            return super().lyapunov_series(tol)
        return self._partial(tol, 1)

    def _partial(self, tol: float, which: int) -> SeriesValue:
        """ Partial sum with the exact remainder as certified tail bound """
        if tol <= 0:
            raise ValueError('Tolerance must be positive')
        tail = self.tail_entropy if which == 0 else self.tail_lyapunov
        n = max(self._h, 1)
        while abs(tail(n)) > tol:
            n *= 2
        return SeriesValue(self.partial_series(n)[which], abs(tail(n)), n)

    def right_end(self, j):
        s1 = self._c * self._b
        return s1 + self._stretch * self._c * self._b ** 2 * (1. - self._b ** (j - 1)) / (1. - self._b)

    def image(self, j: int) -> tuple:
        lo = self.shift(j)
        return lo, lo + self.ratio(j)

    def gap_before(self, j: int) -> float:
        """ Gap between images j-1 and j """
        return (self._stretch - 1.) * self._c * self._b ** j

    def hull(self) -> tuple[float, float]:
        return 0., 1.

    def first_moment(self) -> float:
        return self._mean

    def _moment_after(self, n: int) -> float:
        """ sum_{j>n} p_j mean(S_j mu) """
        power = self.tail_power(n, self._b)
        return self._c * power * self._mean + self.tail_mass(n) - self._kappa * power

    def _find_right(self, y: float) -> int:
        """ smallest j whose image ends at or after y, for 0 <= y < 1 """
        s1 = self._c * self._b
        if y <= s1:
            return 1
        w = 1. - (y - s1) * (1. - self._b) / (self._stretch * self._c * self._b ** 2)
        j = 1 + math.ceil(math.log(w) / math.log(self._b)) if w > 0 else 2
        j = max(j, 1)
        while j > 1 and self.right_end(j - 1) >= y:
            j -= 1
        while self.right_end(j) < y:
            j += 1
        return j

    def locate(self, y: float) -> tuple[int | None, float, float]:
        if y < 0:
            return None, 0., 0.
        if y >= 1:
            return None, 1., self._mean
        j = self._find_right(y)
        mass_before = 1. - self.tail_mass(j - 1)
        moment_before = self._mean - self._moment_after(j - 1)
        if float(self.shift(j)) <= y:
            return j, mass_before, moment_before
        return None, mass_before, moment_before

    def child_at_mass(self, v: float) -> tuple[int, float, float] | None:
        if v >= 1.:
            return None
        j = int(self.index_from_uniform(np.array([v]))[0])
        while j > 1 and 1. - self.tail_mass(j - 1) > v:
            j -= 1
        while 1. - self.tail_mass(j) <= v:
            j += 1
        return j, 1. - self.tail_mass(j - 1), self._mean - self._moment_after(j - 1)

    def children(self, start: int, stop: int | None) -> list[int]:
        if stop is None:
            raise ValueError('An infinite family needs an explicit stop index')
        return list(range(start, stop))

    def tail_hull(self, n: int) -> tuple[float, float] | None:
        return float(self.shift(n + 1)), 1.

    def tail_mean(self, n: int) -> float:
        return self._moment_after(n) / self.tail_mass(n)

    def log_potential_floor(self) -> float:
        # the gap next to image i, on the side of any other image, is at least (stretch - 1) b s_i
        p_max = max(float(self._head.max()) if self._h else 0., self._rest * (1. - self._a))
        return math.log((self._stretch - 1.) * self._b / 2.) + self.tail_lyapunov(0) / (1. - p_max)


def make_finite_ifs(maps: Sequence[SimilarityMap], probs: Sequence[Real], ambient=None) -> FiniteIfs:
    return FiniteIfs(maps, probs, ambient)


def make_geometric_family(a: Real, b: Real, c: Real, head: Sequence[Real] = ()) -> GeometricIfs:
    return GeometricIfs(a, b, c, head)


def truncate(ifs: IfsModel, n: int) -> FiniteIfs:
    """
    First n maps with probabilities renormalized by L_n = sum_{j<=n} p_j;
    the last probability is 1 minus the others so the vector sums to 1.
    """
    if not isinstance(n, int) or n < 1:
        raise ValueError('Truncation order must be a positive integer')
    if ifs.is_finite:
        if n > ifs.size:
            raise ValueError(f'Cannot truncate a model of {ifs.size} maps at {n}')
        if n == ifs.size:
            return ifs
    probs = [ifs.prob(j) for j in range(1, n + 1)]
    total = sum(probs)
    renormalized = [p / total for p in probs[:-1]]
    renormalized.append(1 - sum(renormalized))
    ambient = ifs.ambient
    return FiniteIfs([ifs.similarity(j) for j in range(1, n + 1)], renormalized, ambient)


def verify_ssc(ifs: IfsModel, n: int | None = None) -> SeparationReport:
    """
    Pairwise gaps between the images S_i(X), S_j(X) of the first n maps.
    For an infinite family the report also carries the gap separating the n-th image
    from the region holding every later image.
    """
    ifs._require_line()
    if n is None:
        if not ifs.is_finite:
            raise ValueError('An infinite family needs an explicit number of maps to check')
        n = ifs.size
    if n < 1 or (ifs.is_finite and n > ifs.size):
        raise ValueError('Number of maps to check is out of range')
    images = [ifs.image(j) for j in range(1, n + 1)]
    gaps = []
    for i in range(n):
        for j in range(i + 1, n):
            (lo_i, hi_i), (lo_j, hi_j) = images[i], images[j]
            gaps.append((i + 1, j + 1, max(lo_j - hi_i, lo_i - hi_j)))
    min_gap = min((g for _, _, g in gaps), default=math.inf)
    tail_gap = None
    if not ifs.is_finite:
        tail_lo, _ = ifs.tail_hull(n)
        tail_gap = tail_lo - max(hi for _, hi in images)
    passed = min_gap > 0 and (tail_gap is None or tail_gap > 0)
    if not passed:
        logger.info('Separation check failed: min gap %s, tail gap %s', min_gap, tail_gap)
    return SeparationReport(tuple(gaps), min_gap, passed, tail_gap)


def entropy_series(ifs: IfsModel, tol: float = 1e-12) -> SeriesValue:
    """ sum_j p_j log p_j """
    return ifs.entropy_series(tol)


def lyapunov_series(ifs: IfsModel, tol: float = 1e-12) -> SeriesValue:
    """ sum_j p_j log s_j """
    return ifs.lyapunov_series(tol)


def compose_word(ifs: IfsModel, word: Word) -> tuple[SimilarityMap, Real, Real]:
    """
    S_w = S_{w1} o ... o S_{wn} with p_w and s_w; the empty word gives the identity and (1, 1)
    """
    m = SimilarityMap.identity(ifs.dim)
    p, s = 1, 1
    for letter in word:
        j = ifs.check_index(letter)
        m = m.compose(ifs.similarity(j))
        p = p * ifs.prob(j)
        s = s * ifs.ratio(j)
    return m, p, s


def word_cylinder(ifs: IfsModel, word: Word) -> tuple:
    """ The interval S_w(X) """
    ifs._require_line()
    m, _, _ = compose_word(ifs, word)
    lo, hi = ifs.ambient[0]
    return tuple(sorted((m(lo), m(hi))))
