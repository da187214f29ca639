from __future__ import annotations
import logging
from abc import ABC, abstractmethod
from copy import deepcopy
from typing import Generic, TypeVar


logger = logging.getLogger(__name__)

S = TypeVar('S')  # Generic type for the state
O = TypeVar('O')  # Generic type for the evaluated objective


class CodebookDescent(ABC, Generic[S, O]):
    def __init__(self, max_steps: int, min_improvement: float = 1e-9, report_every: int = 10):
        """
        Abstract Base Class for monotone descent: a candidate replaces the current state
        only when its certified objective bound is lower.
        :param max_steps: maximum steps to run the descent for
        :param min_improvement: stop once a step improves the bound by less than this
        :param report_every: steps between status reports when verbose
        """
        if not isinstance(max_steps, int) or max_steps <= 0:
            raise ValueError('Max steps must be a positive integer')
        self.max_steps = max_steps
        if not isinstance(min_improvement, (float, int)) or min_improvement < 0:
            raise ValueError('Minimum improvement must be a nonnegative number')
        self.min_improvement = float(min_improvement)
        if not isinstance(report_every, int) or report_every <= 0:
            raise ValueError('Report interval must be a positive integer')
        self.report_every = report_every
        self.current_state: S | None = None
        self.best_state: S | None = None
        self.best_objective: O | None = None
        self.history: list[O] = []
        self.cur_steps: int = 0

    def __str__(self):
        return 'CODEBOOK DESCENT: \n' + \
               f'CURRENT STEPS: {self.cur_steps} \n' + \
               f'BEST OBJECTIVE: {self.best_objective} \n' + \
               f'BEST STATE: {str(self.best_state)} \n\n'

    def __repr__(self):
        return self.__str__()

    def _clear(self):
        """
        Resets the variables that are altered on a per-run basis of the algorithm
        """
        self.current_state = None
        self.best_state = None
        self.best_objective = None
        self.history = []
        self.cur_steps = 0

    @abstractmethod
    def _initial(self) -> S:
        """
        Returns the starting state
        """
        pass

    @abstractmethod
    def _step(self) -> S:
        """
        Returns a candidate state, given access to self.current_state
        """
        pass

    @abstractmethod
    def _objective(self, state: S) -> O:
        """
        Evaluates a given state

        :param state: a state
        :return: evaluated objective
        """
        pass

    @abstractmethod
    def _bound(self, objective: O) -> float:
        """
        Value of an evaluated objective that the descent must never increase
        """
        pass

    def run(self, verbose: bool = True):
        """
        Conducts the descent

        :param verbose: indicates whether or not to log progress regularly
        :return: best state and its evaluated objective
        """
        self._clear()
        self.current_state = self._initial()
        self.best_objective = self._objective(self.current_state)
        self.best_state = deepcopy(self.current_state)
        self.history.append(self.best_objective)
        for i in range(self.max_steps):
            self.cur_steps += 1

            if ((i + 1) % self.report_every == 0) and verbose:
                logger.info(self)

            candidate = self._step()
            objective = self._objective(candidate)
            improvement = self._bound(self.best_objective) - self._bound(objective)
            if improvement > 0:
                self.current_state = candidate
                self.best_state = deepcopy(candidate)
                self.best_objective = objective
            self.history.append(self.best_objective)

            if not improvement >= self.min_improvement:
                logger.info('TERMINATING - NO FURTHER IMPROVEMENT')
                return self.best_state, self.best_objective
        logger.info('TERMINATING - REACHED MAXIMUM STEPS')
        return self.best_state, self.best_objective
