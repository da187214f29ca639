from __future__ import annotations
import multiprocessing
from fractions import Fraction
from numbers import Real
from typing import Callable, Iterable, TypeVar
import numpy as np


S = TypeVar('S')  # Generic type for the work item
F = TypeVar('F')  # Generic type for the result

SAMPLE_BLOCK = 4096  # samples drawn per counter block


def parallel_map(func: Callable[[S], F], items: Iterable[S], workers: int = 1) -> list[F]:
    """
    Evaluates func on every item, in a process pool when workers > 1.
    Results always come back in the order of items.
    :param func: picklable callable
    :param items: work items
    :param workers: number of worker processes
    :return: list with func(item) per item
    """
    items = list(items)
    if not isinstance(workers, int) or workers < 1:
        raise ValueError('Number of workers must be a positive integer')
    if workers == 1 or len(items) < 2:
        return [func(item) for item in items]
    with multiprocessing.Pool(min(workers, len(items))) as pool:
        return pool.map(func, items)


def philox(seed: int, block: int = 0) -> np.random.Generator:
    """
    Counter-based random stream: the key is the seed and the counter starts at block,
    so disjoint blocks can be drawn by different workers with identical results.
    """
    if seed < 0:
        raise ValueError('Seed must be a nonnegative integer')
    key = [seed & 0xFFFFFFFFFFFFFFFF, (seed >> 64) & 0xFFFFFFFFFFFFFFFF]
    counter = [0, 0, block, 0]
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def is_exact(value) -> bool:
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


def check_real(value, name: str) -> Real:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise TypeError(f'{name} must be a numeric type')
    return value
