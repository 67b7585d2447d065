"""Planted instances, simulated reviewers and review-to-constraint reduction.

The reviewer pool is never materialized. For a queried tuple, the reviews
of its ``m_per_tuple`` reviewers are i.i.d. draws from the mixture of the
good-reviewer distribution and the adversary distribution, so the vote
counts are a single multinomial draw from a per-tuple seeded generator.
"""

from __future__ import annotations

import itertools
import math
import threading
import zlib
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Protocol

import numpy as np

from .csp import Assignment, ConstraintSet, bits_to_index, format_bits, index_to_bits, parse_bits
from .errors import AdversaryInfeasible, EmptyConstraint, InvalidConstraint, InvariantViolation

_FEASIBILITY_TOL = 1e-12


def stream_id(label: str) -> int:
    return zlib.crc32(label.encode())


def derive_seed(*parts: int | str) -> int:
    """64-bit seed from integer/string parts via numpy's SeedSequence hash.

    Strings are mapped through CRC-32 first, so the derivation is stable
    across processes and Python versions.
    """
    entropy = [stream_id(p) if isinstance(p, str) else int(p) for p in parts]
    lo, hi = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


@dataclass(frozen=True)
class Adversary:
    """Strategy of the bad reviewers.

    ``uniform_cover``
        Fills the complement of the good-reviewer distribution so that the
        overall review distribution is uniform. Only feasible while
        ``alpha * max_v G(v) <= 2**-r``.
    ``anti_planted``
        Spends its mass on the vectors the good reviewers under-represent,
        proportionally to ``max(0, 2**-r - alpha * G(v))``. Identical to
        ``uniform_cover`` wherever that is feasible, and still defined above
        the threshold.
    ``constant_vector``
        Always submits the same vector ``pattern``.
    ``random_independent``
        Submits a uniformly random vector.
    """

    kind: str
    pattern: tuple[bool, ...] | None = None

    KINDS = ("uniform_cover", "anti_planted", "constant_vector", "random_independent")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if (self.kind == "constant_vector") != (self.pattern is not None):
            raise ValueError("constant_vector needs a pattern; other kinds take none")

    @classmethod
    def parse(cls, text: str) -> Adversary:
        """``"uniform_cover"``, ``"constant_vector:FFT"`` etc."""
        kind, _, arg = text.strip().partition(":")
        kind = kind.strip().lower()
        if kind == "constant_vector":
            return cls(kind, parse_bits(arg))
        if arg:
            raise ValueError(f"adversary {kind!r} takes no argument")
        return cls(kind)

    def __str__(self) -> str:
        if self.pattern is not None:
            return f"{self.kind}:{format_bits(self.pattern)}"
        return self.kind


UNIFORM_COVER = Adversary("uniform_cover")
ANTI_PLANTED = Adversary("anti_planted")
RANDOM_INDEPENDENT = Adversary("random_independent")


def constant_vector(pattern) -> Adversary:
    if isinstance(pattern, str):
        pattern = parse_bits(pattern)
    return Adversary("constant_vector", tuple(bool(b) for b in pattern))


def default_m_per_tuple(n: int, r0: int) -> int:
    return math.ceil(50 * 2**r0 * math.log(max(n, 2)))


def sufficient_m_per_tuple(alpha: float, p: float, r0: int, n: int) -> int | None:
    """Reviews per tuple for which Hoeffding puts the planted vector above the
    ``2**-r0`` threshold with probability ``>= 1 - 1/n**2`` against any adversary.

    Returns ``None`` below the threshold ``alpha * (1-p)**r0 <= 2**-r0``.
    """
    gap = alpha * (1 - p) ** r0 - 2.0**-r0
    if gap <= 0:
        return None
    return math.ceil(math.log(max(n, 2)) / gap**2)


@dataclass(frozen=True)
class SimConfig:
    n: int
    r0: int
    alpha: float
    p: float = 0.0
    m_per_tuple: int | None = None
    adversary: Adversary = RANDOM_INDEPENDENT
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.adversary, str):
            object.__setattr__(self, "adversary", Adversary.parse(self.adversary))
        if self.m_per_tuple is None:
            object.__setattr__(self, "m_per_tuple", default_m_per_tuple(self.n, self.r0))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.r0 < 2:
            raise ValueError("r0 must be >= 2")
        if self.n < self.r0:
            raise ValueError(f"n={self.n} smaller than tuple arity r0={self.r0}")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.p < 0.5:
            raise ValueError("p must lie in [0, 0.5)")
        if self.m_per_tuple < 1:
            raise ValueError("m_per_tuple must be >= 1")
        if self.adversary.pattern is not None and len(self.adversary.pattern) != self.r0:
            raise ValueError("constant_vector pattern length must equal r0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def threshold_alpha(self) -> float:
        """The information threshold ``1 / (2 - 2p)**r0``."""
        return 1.0 / (2 - 2 * self.p) ** self.r0


def gen_planted(n: int, seed: int) -> Assignment:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng([int(seed), stream_id("planted")])
    return Assignment(rng.integers(0, 2, size=n).astype(bool))


def good_distribution(planted_index: int, r: int, p: float) -> np.ndarray:
    """Review-vector distribution of a good reviewer on a tuple whose planted
    restriction has index ``planted_index``."""
    flips = np.array([bin(v ^ planted_index).count("1") for v in range(1 << r)])
    return p**flips * (1 - p) ** (r - flips)


def adversary_distribution(cfg: SimConfig, planted_index: int) -> np.ndarray:
    r = cfg.r0
    size = 1 << r
    kind = cfg.adversary.kind
    if kind == "random_independent":
        return np.full(size, 1.0 / size)
    if kind == "constant_vector":
        out = np.zeros(size)
        out[bits_to_index(cfg.adversary.pattern)] = 1.0
        return out
    deficit = 1.0 / size - cfg.alpha * good_distribution(planted_index, r, cfg.p)
    if kind == "uniform_cover":
        if deficit.min() < -_FEASIBILITY_TOL:
            raise AdversaryInfeasible(
                f"uniform_cover needs alpha <= {cfg.threshold_alpha:.6g}, got alpha={cfg.alpha}"
            )
        deficit = np.clip(deficit, 0.0, None)
        return deficit / deficit.sum()
    # anti_planted
    deficit = np.clip(deficit, 0.0, None)
    total = deficit.sum()
    if total <= _FEASIBILITY_TOL:
        return np.full(size, 1.0 / size)
    return deficit / total


def mixture_distribution(cfg: SimConfig, planted_index: int) -> np.ndarray:
    good = good_distribution(planted_index, cfg.r0, cfg.p)
    mix = cfg.alpha * good + (1 - cfg.alpha) * adversary_distribution(cfg, planted_index)
    mix = np.clip(mix, 0.0, None)
    return mix / mix.sum()


@dataclass(frozen=True)
class ReviewBatch:
    """Vote counts for one tuple, indexed by review-vector index."""

    variables: tuple[int, ...]
    vote_counts: tuple[int, ...]

    @property
    def arity(self) -> int:
        return len(self.variables)

    @property
    def total(self) -> int:
        return sum(self.vote_counts)

    @property
    def counts(self) -> dict[tuple[bool, ...], int]:
        return {index_to_bits(k, self.arity): c for k, c in enumerate(self.vote_counts)}

    @classmethod
    def from_counts(cls, variables, counts: Mapping) -> ReviewBatch:
        r = len(variables)
        vec = [0] * (1 << r)
        for bits, c in counts.items():
            if isinstance(bits, str):
                bits = parse_bits(bits)
            if len(bits) != r:
                raise ValueError(f"vote vector {bits} has wrong length")
            if c < 0:
                raise ValueError("counts must be non-negative")
            vec[bits_to_index(bits)] += int(c)
        return cls(tuple(variables), tuple(vec))


def build_constraint(batch: ReviewBatch) -> ConstraintSet:
    """Allow exactly the vectors submitted by strictly more than a
    ``2**-r`` fraction of the reviewers."""
    m = batch.total
    if m <= 0:
        raise ValueError("empty review batch")
    r = batch.arity
    mask = 0
    for k, c in enumerate(batch.vote_counts):
        # c / m > 1 / 2**r, in exact integer arithmetic
        if c << r > m:
            mask |= 1 << k
    if mask == 0:
        raise EmptyConstraint(batch.variables)
    if mask == (1 << (1 << r)) - 1:
        raise InvariantViolation("strict threshold admitted every vector")
    return ConstraintSet(batch.variables, mask)


class ConstraintSource(Protocol):
    """Query access to the arity-``r0`` constraints, all recovery ever sees."""

    n: int
    r0: int

    def query(self, t: tuple[int, ...]) -> ConstraintSet: ...


class _EmptyMarker:
    __slots__ = ("error",)

    def __init__(self, error):
        self.error = error


class ConstraintProvider:
    """Lazy, memoized review simulator for a planted assignment.

    The planted assignment is held here only to generate reviews and to
    count soundness breaches; recovery code interacts only through
    :meth:`query`.
    """

    def __init__(self, config: SimConfig, planted: Assignment):
        if len(planted) != config.n:
            raise ValueError("planted assignment length differs from config.n")
        self.config = config
        self.n = config.n
        self.r0 = config.r0
        self._planted = planted
        self._mixtures = [mixture_distribution(config, q) for q in range(1 << config.r0)]
        self._cache: dict[tuple[int, ...], ConstraintSet | _EmptyMarker] = {}
        self._breaches: set[tuple[int, ...]] = set()
        self._lock = threading.Lock()
        self.queries = 0

    def _check(self, t) -> tuple[int, ...]:
        t = tuple(t)
        if len(t) != self.r0:
            raise InvalidConstraint(f"tuple {t} must have arity {self.r0}")
        if any(a >= b for a, b in zip(t, t[1:])) or t[0] < 0 or t[-1] >= self.n:
            raise InvalidConstraint(f"tuple {t} is not canonical for n={self.n}")
        return t

    def sample_reviews(self, t) -> ReviewBatch:
        t = self._check(t)
        q = self._planted.restrict_index(t)
        rng = np.random.default_rng([self.config.seed, stream_id("reviews"), *t])
        counts = rng.multinomial(self.config.m_per_tuple, self._mixtures[q])
        return ReviewBatch(t, tuple(int(c) for c in counts))

    def query(self, t) -> ConstraintSet:
        self.queries += 1
        hit = self._cache.get(t)
        if hit is None:
            t = self._check(t)
            try:
                hit = build_constraint(self.sample_reviews(t))
            except EmptyConstraint as exc:
                hit = _EmptyMarker(exc)
            else:
                if not (hit.mask >> self._planted.restrict_index(t)) & 1:
                    with self._lock:
                        self._breaches.add(t)
            hit = self._cache.setdefault(t, hit)
        if isinstance(hit, _EmptyMarker):
            raise EmptyConstraint(hit.error.variables)
        return hit

    @property
    def soundness_breaches(self) -> int:
        return len(self._breaches)

    @property
    def empty_constraints(self) -> int:
        return sum(isinstance(v, _EmptyMarker) for v in self._cache.values())

    @property
    def distinct_queries(self) -> int:
        return len(self._cache)


def sample_reviews(provider: ConstraintProvider, t) -> ReviewBatch:
    return provider.sample_reviews(t)


def query_constraint(provider: ConstraintSource, t) -> ConstraintSet:
    return provider.query(tuple(t))


class StaticProvider:
    """Constraint source backed by a rule ``tuple -> mask`` (memoized).

    Used for hand-built instances; carries no planted assignment.
    """

    def __init__(self, n: int, r0: int, rule: Callable[[tuple[int, ...]], int]):
        if n < r0:
            raise ValueError("n must be >= r0")
        self.n = n
        self.r0 = r0
        self._rule = rule
        self._cache: dict[tuple[int, ...], ConstraintSet] = {}
        self.soundness_breaches = 0

    @classmethod
    def from_table(cls, n: int, r0: int, table: Mapping[tuple[int, ...], ConstraintSet]) -> StaticProvider:
        masks = {tuple(t): c.mask for t, c in table.items()}
        return cls(n, r0, masks.__getitem__)

    def query(self, t) -> ConstraintSet:
        hit = self._cache.get(t)
        if hit is None:
            t = tuple(t)
            hit = self._cache.setdefault(t, ConstraintSet(t, self._rule(t)))
        return hit


def all_tuples(n: int, r: int) -> Iterable[tuple[int, ...]]:
    return itertools.combinations(range(n), r)


def materialize(source: ConstraintSource, variables: Iterable[int] | None = None) -> dict[tuple[int, ...], ConstraintSet]:
    """Query every ``r0``-tuple (over ``variables``, default all)."""
    pool = sorted(variables) if variables is not None else range(source.n)
    return {t: source.query(t) for t in itertools.combinations(pool, source.r0)}


# Hand-built instance families


def agreement_instance(n: int) -> StaticProvider:
    """Every pair allows only (F,F) and (T,T): all-T and all-F both satisfy."""
    mask = (1 << 0) | (1 << 3)
    return StaticProvider(n, 2, lambda t: mask)


def no_all_false_instance(n: int, r0: int) -> StaticProvider:
    """Every ``r0``-tuple forbids the all-F assignment and nothing else."""
    mask = ((1 << (1 << r0)) - 1) & ~1
    return StaticProvider(n, r0, lambda t: mask)


def random_sound_instance(planted: Assignment, r0: int, seed: int, extra_prob: float = 0.5) -> StaticProvider:
    """Random constraints that always contain the planted restriction.

    Each non-planted vector is allowed independently with probability
    ``extra_prob``; if that would allow everything, one random non-planted
    vector is dropped.
    """
    size = 1 << r0
    full = (1 << size) - 1

    def rule(t):
        q = planted.restrict_index(t)
        rng = np.random.default_rng([int(seed), stream_id("sound"), *t])
        keep = rng.random(size) < extra_prob
        mask = 1 << q
        for k in range(size):
            if keep[k]:
                mask |= 1 << k
        if mask == full:
            others = [k for k in range(size) if k != q]
            mask &= ~(1 << others[int(rng.integers(len(others)))])
        return mask

    return StaticProvider(len(planted), r0, rule)


def with_seed(cfg: SimConfig, seed: int) -> SimConfig:
    return replace(cfg, seed=seed)
