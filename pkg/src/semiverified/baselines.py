"""Brute-force oracles and baseline recoverers for small instances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .csp import Assignment, ConstraintSet
from .errors import TooLarge
from .oracle import VerifiedOracle
from .sim import ConstraintProvider, ConstraintSource, materialize, stream_id

MAX_ENUMERATION_N = 24


@dataclass(frozen=True)
class SolutionSet:
    """All satisfying assignments, in lexicographic order (F < T).

    ``codes[i]`` is the integer code of ``assignments[i]`` with variable 0 as
    the most significant bit.
    """

    n: int
    codes: np.ndarray

    @property
    def assignments(self) -> list[Assignment]:
        return [Assignment.from_int(int(c), self.n) for c in self.codes]

    def bit_matrix(self) -> np.ndarray:
        shifts = np.arange(self.n - 1, -1, -1, dtype=np.int64)
        return ((self.codes[:, None] >> shifts) & 1).astype(bool)

    def __len__(self) -> int:
        return len(self.codes)

    def __contains__(self, assignment: Assignment) -> bool:
        code = assignment.to_int()
        i = np.searchsorted(self.codes, code)
        return bool(i < len(self.codes) and self.codes[i] == code)


def enumerate_satisfying(constraints: Mapping[tuple[int, ...], ConstraintSet] | ConstraintSource, n: int | None = None) -> SolutionSet:
    """Every assignment whose restriction to each constrained tuple is allowed."""
    if not isinstance(constraints, Mapping):
        n = constraints.n if n is None else n
        if n > MAX_ENUMERATION_N:
            raise TooLarge(f"n={n} exceeds enumeration cap {MAX_ENUMERATION_N}")
        constraints = materialize(constraints)
    if n is None:
        raise ValueError("n is required with a constraint mapping")
    if n > MAX_ENUMERATION_N:
        raise TooLarge(f"n={n} exceeds enumeration cap {MAX_ENUMERATION_N}")
    codes = np.arange(1 << n, dtype=np.int64)
    for t, c in constraints.items():
        idx = np.zeros(len(codes), dtype=np.int64)
        for v in t:
            idx = (idx << 1) | ((codes >> (n - 1 - v)) & 1)
        codes = codes[(c.mask >> idx) & 1 == 1]
        if len(codes) == 0:
            break
    return SolutionSet(n, codes)


def vc_recover(solutions: SolutionSet, oracle: VerifiedOracle, k: int) -> Assignment:
    """Solution agreeing with the most of ``k`` verified samples (ties go to the
    lexicographically smallest)."""
    if len(solutions) == 0:
        raise ValueError("empty solution set")
    if k < 1:
        raise ValueError("k must be >= 1")
    idx, vals = oracle.sample_arrays(k)
    bits = solutions.bit_matrix()
    agreement = (bits[:, idx] == vals[None, :]).sum(axis=1)
    return Assignment(bits[int(np.argmax(agreement))])


def vc_sample_bound(epsilon: float, delta: float, r: int, multiplier: float = 4.0) -> int:
    """``multiplier * (1/eps) * (r ln(1/eps) + ln(1/delta))``, ceiled."""
    return math.ceil(multiplier / epsilon * (r * math.log(1 / epsilon) + math.log(1 / delta)))


def cluster_count(solutions: SolutionSet, epsilon: float) -> int:
    """Greedy cover by Hamming balls of radius ``epsilon * n``, centers taken
    in lexicographic order. An upper bound on the minimum cluster count."""
    if len(solutions) == 0:
        raise ValueError("empty solution set")
    bits = solutions.bit_matrix()
    radius = epsilon * solutions.n
    uncovered = np.ones(len(bits), dtype=bool)
    centers = 0
    while uncovered.any():
        c = int(np.argmax(uncovered))
        dist = (bits != bits[c]).sum(axis=1)
        uncovered &= dist > radius
        centers += 1
    return centers


def majority_baseline(provider: ConstraintProvider, n: int | None = None, *, tuples_per_var: int = 4, seed: int = 0) -> Assignment:
    """Per-variable majority of the raw review votes over a few random tuples
    containing that variable (ties go to T)."""
    n = provider.n if n is None else n
    r0 = provider.r0
    rng = np.random.default_rng([int(seed), stream_id("majority")])
    votes = np.zeros(n, dtype=np.int64)
    for v in range(n):
        for _ in range(tuples_per_var):
            others = set()
            while len(others) < r0 - 1:
                w = int(rng.integers(n))
                if w != v:
                    others.add(w)
            t = tuple(sorted(others | {v}))
            pos = t.index(v)
            batch = provider.sample_reviews(t)
            for k, c in enumerate(batch.vote_counts):
                votes[v] += c if (k >> (r0 - 1 - pos)) & 1 else -c
    return Assignment(votes >= 0)
