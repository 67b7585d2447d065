"""Recovering a planted assignment from sound tuple constraints and a few
verified variable values.

Three tiers share one phase driver:

* :func:`recover_r2` -- pairwise constraints; commit everyone's pessimistic
  value unless a verified sample exposes an optimistic one.
* :func:`recover_basic` -- exact descend over every tuple of every arity,
  then ascend-and-verify. Reference implementation, needs all ``C(n, r0)``
  constraints.
* :func:`recover_efficient` -- optimistic assignments estimated from a
  constant number of sampled constraints, so a phase touches
  ``O(|remaining|)`` constraints.

Any unassigned variables left at the end (fewer than ``epsilon * n / 2``)
are filled with T.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .csp import Assignment, ConstraintSet, bits_to_index, check_tuple, implication_table, implying_subs, insert_var
from .errors import (
    AscendFail,
    AscendOverflow,
    EmptyConstraint,
    InvariantViolation,
    NoOptimisticFound,
    PhaseFail,
    RecoveryFailure,
    SmallIntersectionFail,
    TooLarge,
)
from .oracle import VerifiedOracle
from .sim import ConstraintSource, derive_seed, stream_id

FILL_VALUE = True
_FREE = 2
_CONTRA = 3


@dataclass(frozen=True)
class RecoveryConfig:
    r0: int
    epsilon: float
    delta: float
    max_phase_retries: int = 0

    def __post_init__(self):
        if self.r0 < 2:
            raise ValueError("r0 must be >= 2")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.max_phase_retries < 0:
            raise ValueError("max_phase_retries must be >= 0")


def total_verify_calls(cfg: RecoveryConfig) -> int:
    return math.ceil(cfg.r0 * 2 ** (cfg.r0 + 1) * math.log(2 / cfg.epsilon))


def phase_bound(r0: int, epsilon: float) -> int:
    """Most phases needed if each commits a ``2**-(r0+1)`` share of the rest."""
    return math.ceil(math.log(2 / epsilon) / -math.log1p(-(2.0 ** -(r0 + 1))))


@dataclass(frozen=True)
class RoundPlan:
    """Sample sizes for one phase over ``n_remaining`` of ``n_total`` variables.

    All logarithms are natural; every count is ceiled with a floor of 1.
    """

    n_total: int
    n_remaining: int
    delta: float
    T: int
    eps_x: float
    s: int
    A: int

    @classmethod
    def build(cls, cfg: RecoveryConfig, n_total: int, n_remaining: int) -> RoundPlan:
        eps, delta = cfg.epsilon, cfg.delta
        T = max(1, total_verify_calls(cfg))
        ratio = n_total / max(n_remaining, 1)
        eps_x = min(1.0, eps / (2 * math.log(2 / eps)) * ratio)
        s = max(1, math.ceil(10 * ratio / eps_x * math.log(10 * T / delta)))
        A = max(1, math.ceil(2**cfg.r0 * math.log(1 / delta) * math.log(1 / eps) / eps**2))
        return cls(n_total, n_remaining, delta, T, eps_x, s, A)

    def s_i(self, i: int) -> int:
        return self.s * 2**i


@dataclass
class FailEvent:
    kind: str
    phase: int
    step: str
    detail: str = ""
    fatal: bool = True

    def to_dict(self) -> dict:
        return {"kind": self.kind, "phase": self.phase, "step": self.step, "detail": self.detail, "fatal": self.fatal}


@dataclass
class RecoveryOutcome:
    assignment: Assignment
    assigned_mask: np.ndarray
    verified_used: int
    phases: int
    fail_events: list[FailEvent] = field(default_factory=list)
    phase_commits: list[int] = field(default_factory=list)
    phase_remaining: list[int] = field(default_factory=list)
    ascend_depths: list[int] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(e.fatal for e in self.fail_events)

    @property
    def unassigned(self) -> int:
        return int(np.count_nonzero(~self.assigned_mask))


# A phase maps (remaining variables, phase seed) to committed values and
# the deepest ascend level it reached.
PhaseFn = Callable[[np.ndarray, int], "tuple[dict[int, bool], int]"]


def _run_phases(n: int, cfg: RecoveryConfig, oracle: VerifiedOracle, seed: int, phase_fn: PhaseFn) -> RecoveryOutcome:
    values = np.full(n, FILL_VALUE, dtype=bool)
    assigned = np.zeros(n, dtype=bool)
    out = RecoveryOutcome(Assignment(values), assigned, 0, 0)
    stop_below = cfg.epsilon * n / 2
    phase = 0
    while True:
        remaining = np.flatnonzero(~assigned)
        if len(remaining) < stop_below or len(remaining) == 0:
            break
        result = None
        for attempt in range(cfg.max_phase_retries + 1):
            try:
                result = phase_fn(remaining, derive_seed(seed, "phase", phase, attempt))
                break
            except (RecoveryFailure, EmptyConstraint) as exc:
                fatal = attempt == cfg.max_phase_retries
                kind = getattr(exc, "kind", type(exc).__name__)
                step = getattr(exc, "step", "query")
                out.fail_events.append(FailEvent(kind, phase, step, str(exc), fatal))
        if result is None:
            break
        committed, depth = result
        fresh = 0
        for v, val in committed.items():
            if not assigned[v]:
                assigned[v] = True
                values[v] = val
                fresh += 1
        out.phase_commits.append(fresh)
        out.phase_remaining.append(len(remaining))
        out.ascend_depths.append(depth)
        phase += 1
        if fresh == 0:
            out.fail_events.append(FailEvent("NoProgress", phase - 1, "commit", "phase committed nothing"))
            break
    out.assignment = Assignment(values)
    out.assigned_mask = assigned
    out.verified_used = oracle.used
    out.phases = phase
    return out


def _in_x_samples(oracle: VerifiedOracle, count: int, in_x: np.ndarray) -> list[tuple[int, bool]]:
    idx, vals = oracle.sample_arrays(count)
    keep = in_x[idx]
    return list(zip(idx[keep].tolist(), vals[keep].tolist()))


def _mask_of(remaining: np.ndarray, n: int) -> np.ndarray:
    in_x = np.zeros(n, dtype=bool)
    in_x[remaining] = True
    return in_x


def _extend(t: tuple[int, ...], a_t: tuple[bool, ...], x: int, a: bool):
    u, j = insert_var(t, x)
    return u, a_t[:j] + (bool(a),) + a_t[j:]


# ---------------------------------------------------------------------------
# exact descend (shared by the r=2 and basic tiers)


def _lex_first_optimistic(counts: list[int], k: int, population: int) -> int:
    """First assignment implying at least a ``2**-k`` share of ``population``."""
    for sub, c in enumerate(counts):
        if c << k >= population:
            return sub
    raise NoOptimisticFound("descend", f"no assignment reaches 1/2^{k} of {population}")


def _derive_level(pool: list[int], k: int, upper: dict[tuple[int, ...], int]) -> dict[tuple[int, ...], int]:
    """Arity-``k`` constraints from arity-``k+1`` ones by removing each tuple's
    optimistic assignment, computed exactly over every extension in ``pool``."""
    full = (1 << (1 << k)) - 1
    derived = {}
    population = len(pool) - k
    for t in itertools.combinations(pool, k):
        members = set(t)
        counts = [0] * (1 << k)
        for v in pool:
            if v in members:
                continue
            u, j = insert_var(t, v)
            for sub in implying_subs(k + 1, upper[u], j):
                counts[sub] += 1
        sigma = _lex_first_optimistic(counts, k, population) if population > 0 else 0
        derived[t] = full & ~(1 << sigma)
    return derived


def _top_level(source: ConstraintSource, pool: list[int]) -> dict[tuple[int, ...], int]:
    return {t: source.query(t).mask for t in itertools.combinations(pool, source.r0)}


def _implications(pool, t, a_t, level_masks) -> tuple[dict[int, bool], set[int]]:
    """Values forced by ``a_t`` through the constraints on ``t + v``, and the
    set of ``v`` for which ``a_t`` contradicts the constraint."""
    k = len(t) + 1
    a_idx = bits_to_index(a_t)
    members = set(t)
    forced, contra = {}, set()
    for v in pool:
        if v in members:
            continue
        u, j = insert_var(t, v)
        code = implication_table(k, level_masks[u], j)[a_idx]
        if code == _CONTRA:
            contra.add(v)
        elif code != _FREE:
            forced[v] = bool(code)
    return forced, contra


# ---------------------------------------------------------------------------
# r = 2


def recover_r2(source: ConstraintSource, oracle: VerifiedOracle, cfg: RecoveryConfig, *, seed: int = 0) -> RecoveryOutcome:
    """Pessimistic-value algorithm for pairwise constraints."""
    if source.r0 != 2 or cfg.r0 != 2:
        raise ValueError("recover_r2 needs r0 == 2")
    n = source.n
    batch = max(1, math.ceil(10 * math.log(1 / cfg.delta) / cfg.epsilon**2))
    min_hits = math.log(1 / cfg.delta) / cfg.epsilon

    def phase(remaining: np.ndarray, _seed: int):
        pool = remaining.tolist()
        pairs = _top_level(source, pool)
        singles = _derive_level(pool, 1, pairs)
        # a singleton constraint {b} has mask 1 << b
        pessimistic = {t[0]: m == 0b10 for t, m in singles.items()}
        hits = _in_x_samples(oracle, batch, _mask_of(remaining, n))
        if len(hits) < min_hits:
            raise PhaseFail("verify", f"{len(hits)} of {batch} samples in remaining set, need {min_hits:.1f}")
        for x, a in hits:
            if pessimistic[x] != a:
                forced, _ = _implications(pool, (x,), (a,), pairs)
                forced[x] = a
                return forced, 1
        return pessimistic, 0

    return _run_phases(n, cfg, oracle, seed, phase)


# ---------------------------------------------------------------------------
# basic descend / ascend-and-verify


def recover_basic(
    source: ConstraintSource,
    oracle: VerifiedOracle,
    cfg: RecoveryConfig,
    *,
    seed: int = 0,
    max_tuples: int = 10_000,
) -> RecoveryOutcome:
    """Exact descend over all tuples, then ascend-and-verify.

    Materializes every ``r0``-tuple constraint; refuses instances with more
    than ``max_tuples`` of them.
    """
    n, r0 = source.n, source.r0
    if r0 != cfg.r0:
        raise ValueError("source and config disagree on r0")
    if math.comb(n, r0) > max_tuples:
        raise TooLarge(f"C({n},{r0}) = {math.comb(n, r0)} tuples exceeds cap {max_tuples}")
    plan = RoundPlan.build(cfg, n, n)
    min_hits = math.log(1 / cfg.delta) / cfg.epsilon

    def phase(remaining: np.ndarray, _seed: int):
        pool = remaining.tolist()
        in_x = _mask_of(remaining, n)
        levels = {r0: _top_level(source, pool)}
        for k in range(r0 - 1, 0, -1):
            levels[k] = _derive_level(pool, k, levels[k + 1])

        t: tuple[int, ...] = ()
        a_t: tuple[bool, ...] = ()
        while True:
            proposed, contra = _implications(pool, t, a_t, levels[len(t) + 1])
            hits = _in_x_samples(oracle, plan.A, in_x)
            if len(hits) < min_hits:
                raise PhaseFail("verify", f"{len(hits)} of {plan.A} samples in remaining set")
            bad = None
            for v, a in hits:
                if v in contra or proposed.get(v, a) != a:
                    bad = (v, a)
                    break
            if bad is None:
                proposed.update(zip(t, a_t))
                return proposed, len(t)
            t, a_t = _extend(t, a_t, *bad)
            if len(t) >= r0:
                raise AscendOverflow("ascend", f"verified {t} contradicts a given constraint")

    return _run_phases(n, cfg, oracle, seed, phase)


# ---------------------------------------------------------------------------
# efficient (sampled) tier


class OptimisticCache:
    """Sampled optimistic constraints for one phase, memoized by
    ``(tuple, failure probability)``.

    Partner variables are drawn from the phase's remaining set with a
    generator seeded by ``(phase seed, sample size, tuple)``, so results do
    not depend on evaluation order.
    """

    def __init__(self, source: ConstraintSource, remaining, seed: int = 0):
        self.source = source
        self.r0 = source.r0
        self.remaining = np.asarray(remaining, dtype=np.int64)
        self.in_x = _mask_of(self.remaining, source.n)
        self.seed = int(seed)
        self._memo: dict[tuple[tuple[int, ...], float], int] = {}
        self._stream = stream_id("optimistic")

    def _partners(self, t: tuple[int, ...], s: int) -> list[int]:
        pool = self.remaining
        if len(pool) <= len(t):
            return []
        rng = np.random.default_rng([self.seed, self._stream, s, *t])
        out: list[int] = []
        while len(out) < s:
            draw = pool[rng.integers(0, len(pool), size=s)].tolist()
            out.extend(x for x in draw if x not in t)
        return out[:s]

    def mask(self, t: tuple[int, ...], gamma: float) -> int:
        if len(t) == self.r0:
            return self.source.query(t).mask
        key = (t, gamma)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        k = len(t)
        s = max(1, math.ceil(3 * 2**k * math.log(1 / gamma)))
        partners = self._partners(t, s)
        full = (1 << (1 << k)) - 1
        if not partners:
            result = full & ~1
        else:
            child_gamma = gamma / (2 * s)
            counts = [0] * (1 << k)
            for x in partners:
                u, j = insert_var(t, x)
                for sub in implying_subs(k + 1, self.mask(u, child_gamma), j):
                    counts[sub] += 1
            sigma = next((sub for sub, c in enumerate(counts) if c << k >= len(partners)), None)
            if sigma is None:
                raise NoOptimisticFound("find-optimistic", f"tuple {t}: counts {counts} of {len(partners)}")
            result = full & ~(1 << sigma)
        self._memo.setdefault(key, result)
        return result

    def pessimistic(self, x: int, gamma: float) -> bool:
        return self.mask((x,), gamma) == 0b10


def find_optimistic(source: ConstraintSource, t, gamma: float, *, remaining=None, seed: int = 0, cache: OptimisticCache | None = None):
    """Constraint on ``t`` with its (sampled) optimistic assignment removed.

    For ``|t| == r0`` this is the source's own constraint. Uses no verified
    samples.
    """
    t = check_tuple(t, source.n)
    if not 1 <= len(t) <= source.r0:
        raise ValueError(f"tuple arity must be in 1..{source.r0}")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if cache is None:
        cache = OptimisticCache(source, np.arange(source.n) if remaining is None else remaining, seed)
    return ConstraintSet(t, cache.mask(t, gamma))


def _ascend(
    cache: OptimisticCache,
    oracle: VerifiedOracle,
    plan: RoundPlan,
    i: int,
    t: tuple[int, ...],
    a_t: tuple[bool, ...],
) -> tuple[dict[int, bool], int]:
    r0 = cache.r0
    n_x = len(cache.remaining)
    while True:
        if i >= r0:
            raise AscendFail("ascend-entry", f"i={i} reached r0={r0} with verified {t}={a_t}")
        s_i = plan.s_i(i)
        gamma = plan.delta / (10 * plan.T * s_i)
        a_idx = bits_to_index(a_t)
        members = set(t)
        implied = []
        for x, a in _in_x_samples(oracle, s_i, cache.in_x):
            if x in members:
                continue
            u, j = insert_var(t, x)
            code = implication_table(i + 1, cache.mask(u, gamma), j)[a_idx]
            if code != _FREE:
                implied.append((x, a, code))
        floor = s_i * n_x / (4 * 2**i * plan.n_total)
        if len(implied) <= floor:
            raise SmallIntersectionFail("ascend-verify", f"i={i}: {len(implied)} implied samples <= {floor:.1f}")
        bad = next(((x, a) for x, a, code in implied if code == _CONTRA or bool(code) != a), None)
        if bad is None:
            committed = dict(zip(t, a_t))
            for x in cache.remaining.tolist():
                if x in members:
                    continue
                u, j = insert_var(t, x)
                code = implication_table(i + 1, cache.mask(u, gamma), j)[a_idx]
                if code < _FREE:
                    committed[x] = bool(code)
            return committed, i
        t, a_t = _extend(t, a_t, *bad)
        i += 1


def efficient_ascend(
    source: ConstraintSource,
    oracle: VerifiedOracle,
    remaining,
    i: int,
    t,
    a_t,
    plan: RoundPlan,
    *,
    seed: int = 0,
    cache: OptimisticCache | None = None,
) -> tuple[dict[int, bool], int]:
    """Verify the implications of the verified assignment ``a_t`` to ``t``,
    escalating to larger tuples on a mismatch.

    Returns the committed values and the level at which they were verified.
    """
    if cache is None:
        cache = OptimisticCache(source, remaining, seed)
    t = tuple(t)
    a_t = tuple(bool(b) for b in a_t)
    if len(t) != len(a_t):
        raise ValueError("t and a_t differ in length")
    return _ascend(cache, oracle, plan, i, t, a_t)


def recover_efficient(source: ConstraintSource, oracle: VerifiedOracle, cfg: RecoveryConfig, *, seed: int = 0) -> RecoveryOutcome:
    """Linear-time recovery with a verified budget independent of ``n``."""
    n = source.n
    if source.r0 != cfg.r0:
        raise ValueError("source and config disagree on r0")

    def phase(remaining: np.ndarray, phase_seed: int):
        plan = RoundPlan.build(cfg, n, len(remaining))
        cache = OptimisticCache(source, remaining, phase_seed)
        hits = _in_x_samples(oracle, plan.s, cache.in_x)
        floor = plan.s * len(remaining) / (2 * n)
        if len(hits) < floor:
            raise PhaseFail("select", f"{len(hits)} of {plan.s} samples in remaining set, need {floor:.1f}")
        gamma = cfg.delta / plan.T
        for x, a in hits:
            if cache.pessimistic(x, gamma) != a:
                return _ascend(cache, oracle, plan, 1, (x,), (a,))
        return {x: cache.pessimistic(x, gamma) for x in remaining.tolist()}, 0

    return _run_phases(n, cfg, oracle, seed, phase)


ALGORITHMS = {
    "r2": recover_r2,
    "basic": recover_basic,
    "efficient": recover_efficient,
}

