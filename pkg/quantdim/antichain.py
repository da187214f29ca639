from __future__ import annotations
import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from numbers import Real
from typing import Iterator, Sequence
import numpy as np
from .errors import BadEps, BadProbabilities, NTooSmall
from .ifs_core import IfsModel, Word, compose_word
from .utils import check_real, is_exact, philox


logger = logging.getLogger(__name__)

MAX_WORDS = 2_000_000


@dataclass(frozen=True)
class Antichain:
    words: tuple  # sorted tuple of Words
    alphabet_size: int
    _members: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'words', tuple(sorted(tuple(w) for w in self.words)))
        if self.alphabet_size < 1:
            raise ValueError('Alphabet size must be positive')
        for w in self.words:
            if any(not isinstance(letter, int) or not 1 <= letter <= self.alphabet_size for letter in w):
                raise ValueError(f'Word {w} uses letters outside the alphabet')
        object.__setattr__(self, '_members', frozenset(self.words))

    def __len__(self):
        return len(self.words)

    def __iter__(self) -> Iterator[Word]:
        return iter(self.words)

    def __contains__(self, word) -> bool:
        return tuple(word) in self._members

    @property
    def depth(self) -> int:
        return max((len(w) for w in self.words), default=0)


@dataclass(frozen=True)
class Codebook:
    points: np.ndarray  # (n, dim)
    provenance: str  # 'antichain', 'lloyd', 'grid' or 'explicit'
    antichain: Antichain | None = None
    anchor: tuple | None = None
    flags: tuple = field(default_factory=tuple)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError('A codebook needs at least one point')
        object.__setattr__(self, 'points', points)

    @classmethod
    def explicit(cls, points) -> Codebook:
        return cls(np.asarray(points, dtype=float), 'explicit')

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def values(self) -> np.ndarray:
        """ Sorted codepoints of a one-dimensional codebook """
        return np.sort(self.points[:, 0])


@dataclass(frozen=True)
class AntichainReport:
    prefix_free: bool
    total_mass: float
    maximal: bool
    trials: int
    trial_failures: int
    violations: tuple  # (prefix, extension) pairs

    @property
    def passed(self) -> bool:
        return self.prefix_free and self.maximal and self.trial_failures == 0


@dataclass(frozen=True)
class EntropyCheck:
    lhs: float
    rhs: float
    holds: bool


def _check_probs(probs: Sequence[Real]) -> tuple:
    probs = tuple(probs)
    if not probs:
        raise BadProbabilities('Probability vector must not be empty')
    for p in probs:
        check_real(p, 'Probability')
        if p <= 0:
            raise BadProbabilities('Probabilities must be strictly positive')
    if all(is_exact(p) for p in probs):
        if sum(probs) != 1:
            raise BadProbabilities('Probabilities must sum to 1')
    elif abs(math.fsum(float(p) for p in probs) - 1.) > 1e-12:
        raise BadProbabilities('Probabilities must sum to 1')
    return probs


def word_mass(probs: Sequence[Real], word: Word) -> Real:
    mass = 1
    for letter in word:
        mass = mass * probs[letter - 1]
    return mass


def build_antichain(probs: Sequence[Real], eps: Real) -> Antichain:
    """
    Words whose mass first drops strictly below eps: p(parent) >= eps > p(word).
    Masses are computed in the type of the inputs, so Fractions give an exact tree.
    """
    probs = _check_probs(probs)
    check_real(eps, 'Threshold')
    if not 0 < eps <= 1:
        raise BadEps(f'Threshold must lie in (0, 1], got {eps}')
    if len(probs) == 1:
        raise BadProbabilities('A single-letter alphabet never splits mass')
    words = []
    queue = deque([((), 1)])
    while queue:
        word, mass = queue.popleft()
        for letter, p in enumerate(probs, start=1):
            child, child_mass = word + (letter,), mass * p
            if child_mass < eps:
                words.append(child)
            else:
                queue.append((child, child_mass))
        if len(words) + len(queue) > MAX_WORDS:
            raise BadEps(f'Threshold {eps} produces more than {MAX_WORDS} words')
    return Antichain(tuple(words), len(probs))


def greedy_antichain(probs: Sequence[Real], n: int) -> Antichain:
    """
    Repeatedly splits the heaviest leaf of the word tree while the leaf count stays <= n.
    """
    probs = _check_probs(probs)
    if not isinstance(n, int) or n < 1:
        raise ValueError('Codebook size must be a positive integer')
    size = len(probs)
    heap = [(-1., ())]
    while len(heap) - 1 + size <= n:
        mass, word = heapq.heappop(heap)
        for letter, p in enumerate(probs, start=1):
            heapq.heappush(heap, (mass * float(p), word + (letter,)))
    return Antichain(tuple(word for _, word in heap), size)


def _model_probs(ifs: IfsModel) -> tuple:
    if not ifs.is_finite:
        raise ValueError('Antichains are built over a finite alphabet; truncate the model first')
    return tuple(ifs.prob(j) for j in range(1, ifs.size + 1))


def antichain_for_n(ifs: IfsModel, n: int, strict: bool = True) -> tuple[Real, Antichain]:
    """
    Mass-threshold antichain with eps_n = 1 / (n p_min).
    Every word then has mass >= 1/n, so at most n words.

    :param ifs: finite model
    :param n: codebook size
    :param strict: require n > 1 / p_min^2
    :return: threshold and antichain; when eps_n exceeds 1 the greedy antichain is used
    """
    probs = _model_probs(ifs)
    if not isinstance(n, int) or n < 1:
        raise ValueError('Codebook size must be a positive integer')
    p_min = min(probs)
    if strict and not n * p_min * p_min > 1:
        raise NTooSmall(f'n = {n} does not exceed 1/p_min^2 = {float(1 / (p_min * p_min))}')
    eps = 1 / (n * p_min)
    if eps > 1:
        logger.debug('Threshold %s above 1 for n = %d, using the greedy antichain', eps, n)
        return eps, greedy_antichain(probs, n)
    return eps, build_antichain(probs, eps)


def verify_antichain(probs: Sequence[Real], ac: Antichain, trials: int = 1000, seed: int = 0) -> AntichainReport:
    """
    Prefix-freeness (exhaustive), total mass and, for random index sequences drawn from
    probs, that exactly one prefix of each lies in the antichain.
    """
    probs = _check_probs(probs)
    words = ac.words
    violations = []
    # in sorted order every extension of a word directly follows it
    for w, v in zip(words, words[1:]):
        if v[:len(w)] == w:
            violations.append((w, v))
    total = math.fsum(float(word_mass(probs, w)) for w in words)
    maximal = abs(total - 1.) <= 1e-10
    failures = 0
    if trials > 0 and words:
        depth = ac.depth
        cum = np.cumsum([float(p) for p in probs])
        cum[-1] = 1.
        letters = np.searchsorted(cum, philox(seed).random((trials, depth)), side='right') + 1
        letters = np.minimum(letters, len(probs))
        for row in letters:
            hits = sum(tuple(int(x) for x in row[:k]) in ac for k in range(depth + 1))
            failures += hits != 1
    report = AntichainReport(not violations, total, maximal, trials, failures, tuple(violations))
    if not report.passed:
        logger.info('Antichain check failed: %d prefix violations, mass %s, %d trial failures',
                    len(violations), total, failures)
    return report


def codebook_from_antichain(ifs: IfsModel, ac: Antichain, anchor=None) -> Codebook:
    """
    One point S_w(anchor) per word; the anchor defaults to the center of the ambient box.
    """
    if anchor is None:
        anchor = ifs.center
    anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
    if anchor.shape != (ifs.dim,):
        raise ValueError('Anchor dimension does not match the model')
    if any(not lo <= x <= hi for x, (lo, hi) in zip(anchor, ifs.ambient)):
        raise ValueError('Anchor must lie in the ambient box')
    points = []
    for word in ac:
        m, _, _ = compose_word(ifs, word)
        points.append(np.atleast_1d(m(anchor[0] if ifs.dim == 1 else anchor)).astype(float))
    return Codebook(np.array(points), 'antichain', ac, tuple(anchor))


def _word_logs(word: Word, log_probs: np.ndarray, log_ratios: np.ndarray) -> tuple[float, float]:
    idx = [letter - 1 for letter in word]
    return math.fsum(log_probs[idx]), math.fsum(log_ratios[idx])


def antichain_reference(ac: Antichain, probs: Sequence[Real], ratios: Sequence[Real]) -> float:
    """ sum over the antichain of p_w log s_w """
    log_p = np.log(np.array([float(p) for p in probs]))
    log_s = np.log(np.array([float(s) for s in ratios]))
    terms = []
    for word in ac:
        lp, ls = _word_logs(word, log_p, log_s)
        terms.append(math.exp(lp) * ls)
    return math.fsum(terms)


def check_entropy_inequality(ac: Antichain, probs: Sequence[Real], ratios: Sequence[Real],
                             d_tilde: float) -> EntropyCheck:
    """
    sum q_w log s_w <= (1 / d_tilde) sum q_w log q_w over the antichain
    """
    if d_tilde <= 0:
        raise ValueError('Dimension must be positive')
    log_p = np.log(np.array([float(p) for p in probs]))
    log_s = np.log(np.array([float(s) for s in ratios]))
    lhs_terms, rhs_terms = [], []
    for word in ac:
        lp, ls = _word_logs(word, log_p, log_s)
        q = math.exp(lp)
        lhs_terms.append(q * ls)
        rhs_terms.append(q * lp)
    lhs = math.fsum(lhs_terms)
    rhs = math.fsum(rhs_terms) / d_tilde
    return EntropyCheck(lhs, rhs, lhs <= rhs + 1e-12)
