"""Assignments, tuple constraints and single-variable implication logic.

Conventions used throughout the package:

* Truth values are Python bools, ``False`` standing for F and ``True`` for T.
* A variable tuple is a strictly increasing ``tuple[int, ...]``.
* A partial assignment over an ``r``-tuple is either a bool tuple aligned
  with the variable order, or its integer index
  ``sum(b_i << (r - 1 - i))``. Integer order equals lexicographic order
  with F < T.
* A constraint set over an ``r``-tuple is a ``2**r``-bit membership mask;
  bit ``k`` is set iff the assignment with index ``k`` is allowed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ArityMismatch,
    EmptyConstraint,
    InvalidConstraint,
    InvariantViolation,
    LengthMismatch,
    SubsetViolation,
)

Bits = tuple  # tuple[bool, ...]


def bits_to_index(bits: Sequence[bool]) -> int:
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(bool(b))
    return idx


def index_to_bits(idx: int, r: int) -> tuple[bool, ...]:
    return tuple(bool((idx >> (r - 1 - i)) & 1) for i in range(r))


def format_bits(bits: Sequence[bool]) -> str:
    return "".join("T" if b else "F" for b in bits)


def parse_bits(text: str) -> tuple[bool, ...]:
    out = []
    for ch in text.strip().upper():
        if ch in "T1":
            out.append(True)
        elif ch in "F0":
            out.append(False)
        else:
            raise ValueError(f"bad truth value {ch!r} in {text!r}")
    return tuple(out)


def check_tuple(variables: Iterable[int], n: int | None = None) -> tuple[int, ...]:
    """Validate canonical (strictly ascending, in-range) variable tuple."""
    t = tuple(int(v) for v in variables)
    if not t:
        raise InvalidConstraint("empty variable tuple")
    for a, b in zip(t, t[1:]):
        if a >= b:
            raise InvalidConstraint(f"tuple {t} is not strictly increasing")
    if t[0] < 0 or (n is not None and t[-1] >= n):
        raise InvalidConstraint(f"tuple {t} out of range for n={n}")
    return t


def insert_var(t: tuple[int, ...], x: int) -> tuple[tuple[int, ...], int]:
    """Return ``(sorted t + (x,), position of x)``; ``x`` must not be in ``t``."""
    j = 0
    while j < len(t) and t[j] < x:
        j += 1
    return t[:j] + (x,) + t[j:], j


def insert_bit(sub: int, j: int, b: int, r: int) -> int:
    """Index of the ``r``-assignment obtained by inserting bit ``b`` at ``j``
    into the ``(r-1)``-assignment ``sub``."""
    low_width = r - 1 - j
    high = sub >> low_width
    low = sub & ((1 << low_width) - 1)
    return (high << (r - j)) | (b << low_width) | low


class Assignment:
    """Immutable length-n Boolean vector."""

    __slots__ = ("_values",)

    def __init__(self, values: Iterable[bool] | np.ndarray):
        arr = np.array(values, dtype=bool).reshape(-1)
        arr.setflags(write=False)
        self._values = arr

    @classmethod
    def constant(cls, n: int, value: bool) -> Assignment:
        return cls(np.full(n, bool(value)))

    @classmethod
    def from_int(cls, code: int, n: int) -> Assignment:
        """Inverse of :meth:`to_int` (variable 0 is the most significant bit)."""
        return cls([(code >> (n - 1 - i)) & 1 for i in range(n)])

    @classmethod
    def parse(cls, text: str) -> Assignment:
        return cls(parse_bits(text))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n(self) -> int:
        return len(self._values)

    def to_int(self) -> int:
        return bits_to_index(self._values.tolist())

    def restrict(self, t: Sequence[int]) -> tuple[bool, ...]:
        return tuple(bool(self._values[v]) for v in t)

    def restrict_index(self, t: Sequence[int]) -> int:
        return bits_to_index(self._values[list(t)].tolist())

    def __len__(self) -> int:
        return len(self._values)

    def __getitem__(self, i: int) -> bool:
        return bool(self._values[i])

    def __iter__(self):
        return (bool(v) for v in self._values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Assignment):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __hash__(self) -> int:
        return hash(self._values.tobytes())

    def __repr__(self) -> str:
        body = format_bits(self._values.tolist())
        if len(body) > 64:
            body = body[:61] + "..."
        return f"Assignment({body})"


class Implication(enum.Enum):
    """What fixing all-but-one variable of a constraint says about the last."""

    FORCED_F = 0
    FORCED_T = 1
    FREE = 2
    CONTRADICTION = 3

    @classmethod
    def forced(cls, value: bool) -> Implication:
        return cls.FORCED_T if value else cls.FORCED_F

    @property
    def is_forced(self) -> bool:
        return self.value < 2

    @property
    def implies(self) -> bool:
        """Forced or (vacuously) contradictory."""
        return self is not Implication.FREE

    @property
    def forced_value(self) -> bool | None:
        return bool(self.value) if self.value < 2 else None


_FREE = Implication.FREE.value
_CONTRA = Implication.CONTRADICTION.value


@lru_cache(maxsize=None)
def implication_table(r: int, mask: int, j: int) -> tuple[int, ...]:
    """Implication codes for every assignment to the other ``r-1`` positions.

    Entry ``sub`` is the code (see :class:`Implication` values) for the
    variable at position ``j`` of an ``r``-tuple constrained by ``mask``.
    """
    codes = []
    for sub in range(1 << (r - 1)):
        f_ok = (mask >> insert_bit(sub, j, 0, r)) & 1
        t_ok = (mask >> insert_bit(sub, j, 1, r)) & 1
        if f_ok and t_ok:
            codes.append(_FREE)
        elif t_ok:
            codes.append(1)
        elif f_ok:
            codes.append(0)
        else:
            codes.append(_CONTRA)
    return tuple(codes)


@lru_cache(maxsize=None)
def implying_subs(r: int, mask: int, j: int) -> tuple[int, ...]:
    """Indices of the ``(r-1)``-assignments that imply position ``j``."""
    return tuple(sub for sub, code in enumerate(implication_table(r, mask, j)) if code != _FREE)


@dataclass(frozen=True)
class ConstraintSet:
    """Allowed joint values for one canonical variable tuple."""

    variables: tuple[int, ...]
    mask: int

    def __post_init__(self):
        object.__setattr__(self, "variables", check_tuple(self.variables))
        r = len(self.variables)
        full = (1 << (1 << r)) - 1
        if self.mask == 0:
            raise EmptyConstraint(self.variables, f"constraint over {self.variables} allows nothing")
        if self.mask < 0 or self.mask > full:
            raise InvalidConstraint(f"mask {self.mask:#x} out of range for arity {r}")
        if self.mask == full:
            raise InvalidConstraint(f"constraint over {self.variables} allows all {1 << r} assignments")

    @classmethod
    def from_allowed(cls, variables: Sequence[int], allowed: Iterable[Sequence[bool]]) -> ConstraintSet:
        r = len(variables)
        mask = 0
        for bits in allowed:
            if len(bits) != r:
                raise ArityMismatch(f"assignment {bits} has length {len(bits)}, expected {r}")
            mask |= 1 << bits_to_index(bits)
        return cls(tuple(variables), mask)

    @property
    def arity(self) -> int:
        return len(self.variables)

    @property
    def allowed(self) -> frozenset[tuple[bool, ...]]:
        r = self.arity
        return frozenset(index_to_bits(k, r) for k in range(1 << r) if (self.mask >> k) & 1)

    def allowed_indices(self) -> list[int]:
        return [k for k in range(1 << self.arity) if (self.mask >> k) & 1]

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __contains__(self, bits) -> bool:
        if isinstance(bits, int):
            return bool((self.mask >> bits) & 1)
        if len(bits) != self.arity:
            return False
        return bool((self.mask >> bits_to_index(bits)) & 1)

    def satisfied_by(self, assignment: Assignment) -> bool:
        return bool((self.mask >> assignment.restrict_index(self.variables)) & 1)

    def __repr__(self) -> str:
        allowed = sorted(format_bits(index_to_bits(k, self.arity)) for k in self.allowed_indices())
        return f"ConstraintSet({self.variables}, {{{', '.join(allowed)}}})"


def _positions(c: ConstraintSet, sub: Sequence[int]) -> list[int]:
    index = {v: i for i, v in enumerate(c.variables)}
    try:
        return [index[v] for v in sub]
    except KeyError as exc:
        raise SubsetViolation(f"variable {exc.args[0]} not in {c.variables}") from None


def restrict(c: ConstraintSet, sub: Sequence[int]) -> frozenset[tuple[bool, ...]]:
    """Project every allowed assignment of ``c`` onto the variables of ``sub``."""
    pos = _positions(c, sub)
    return frozenset(tuple(bits[i] for i in pos) for bits in c.allowed)


def _target_position(c: ConstraintSet, target: int) -> int:
    try:
        return c.variables.index(target)
    except ValueError:
        raise SubsetViolation(f"target {target} not in {c.variables}") from None


def implied_value(c: ConstraintSet, sub_assignment: Sequence[bool], target: int) -> Implication:
    """Implication for ``target`` given values for the rest of ``c.variables``.

    ``sub_assignment`` is aligned with ``c.variables`` with ``target`` removed.
    """
    j = _target_position(c, target)
    if len(sub_assignment) != c.arity - 1:
        raise ArityMismatch(f"expected {c.arity - 1} values, got {len(sub_assignment)}")
    code = implication_table(c.arity, c.mask, j)[bits_to_index(sub_assignment)]
    return Implication(code)


def forced_exists(c: ConstraintSet, sub: Sequence[int]) -> tuple[bool, ...]:
    """Lexicographically smallest assignment to ``sub`` that implies the
    remaining variable of ``c`` (forced, or vacuously by contradiction)."""
    sub = tuple(sub)
    _positions(c, sub)
    if len(sub) != c.arity - 1 or len(set(sub)) != len(sub):
        raise ArityMismatch(f"{sub} must omit exactly one variable of {c.variables}")
    (target,) = set(c.variables) - set(sub)
    j = _target_position(c, target)
    r = c.arity
    for k, code in enumerate(implication_table(r, c.mask, j)):
        if code != _FREE:
            # sub is not necessarily sorted; report in the caller's order
            canon = index_to_bits(k, r - 1)
            order = [v for v in c.variables if v != target]
            by_var = dict(zip(order, canon))
            return tuple(by_var[v] for v in sub)
    raise InvariantViolation(f"no implying assignment for {c!r}; constraint must be full")


def hamming_error(a: Assignment, b: Assignment) -> float:
    if len(a) != len(b):
        raise LengthMismatch(f"lengths differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        return 0.0
    return float(np.count_nonzero(a.values != b.values)) / len(a)
