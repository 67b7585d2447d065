"""Budgeted access to the true values of uniformly random variables."""

from __future__ import annotations

import numpy as np

from .csp import Assignment
from .errors import BudgetExhausted
from .sim import stream_id


class VerifiedOracle:
    """Reveals planted values of variables drawn i.i.d. (with replacement)
    from the full variable set, counting every draw.

    Each call draws a fresh batch; duplicates count against the budget.
    """

    def __init__(self, planted: Assignment, seed: int = 0, budget: int | None = None):
        if budget is not None and budget < 0:
            raise ValueError("budget must be non-negative")
        self._planted = planted.values
        self._rng = np.random.default_rng([int(seed), stream_id("oracle")])
        self._used = 0
        self.budget = budget

    @property
    def n(self) -> int:
        return len(self._planted)

    @property
    def used(self) -> int:
        return self._used

    def sample_arrays(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Like :meth:`sample_batch` but returns ``(variables, values)`` arrays."""
        if count < 1:
            raise ValueError("count must be >= 1")
        if self.budget is not None and self._used + count > self.budget:
            raise BudgetExhausted(f"drawing {count} would exceed budget {self.budget} (used {self._used})")
        idx = self._rng.integers(0, self.n, size=count)
        self._used += count
        return idx, self._planted[idx]

    def sample_batch(self, count: int) -> list[tuple[int, bool]]:
        idx, vals = self.sample_arrays(count)
        return list(zip(idx.tolist(), vals.tolist()))


def sample_batch(oracle: VerifiedOracle, count: int) -> list[tuple[int, bool]]:
    return oracle.sample_batch(count)


def used(oracle: VerifiedOracle) -> int:
    return oracle.used
