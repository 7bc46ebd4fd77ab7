"""Finite event spaces, variable subsets, subset families, and dense tensors.

Everything downstream works over a product space ``[I_1] x ... x [I_d]`` of
``d`` categorical variables. This module owns the bookkeeping for that space:

* :class:`Shape` — the per-variable cardinalities,
* :class:`VarSubset` — a sorted subset of variable indices (1-based),
* :class:`InteractionCollection` — a family of subsets, always containing
  the empty subset, optionally downward closed ("hierarchical"),
* :class:`DenseTensor` / :class:`ProbTensor` — real tensors indexed by a
  subset's coordinates, stored row-major with variables sorted ascending.

Axis ``j`` of a tensor over ``S`` corresponds to the ``j``-th smallest member
of ``S``; that ordering is the serialization contract for every file format
in the package. All values here are immutable after construction and all
operations are pure, so they are safe to share across workers.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Iterator

import numpy as np

from .errors import CapacityError, DomainError

DEFAULT_ENUM_CAP = 10_000_000

__all__ = [
    "Shape",
    "VarSubset",
    "InteractionCollection",
    "DenseTensor",
    "ProbTensor",
    "enum_cap",
    "check_enum_cap",
    "marginalize",
    "expand_uniform",
    "center_fibers",
    "is_hierarchical",
    "heredity_count",
    "subsets_up_to_order",
]


def enum_cap() -> int:
    """Current full-enumeration cap in cells (env MAHGENTA_ENUM_CAP overrides)."""
    raw = os.environ.get("MAHGENTA_ENUM_CAP")
    return int(raw) if raw else DEFAULT_ENUM_CAP


def check_enum_cap(n_events: int, what: str, alternative: str | None = None) -> None:
    """Raise CapacityError when `n_events` exceeds the enumeration cap."""
    cap = enum_cap()
    if n_events > cap:
        hint = f"; use {alternative} instead" if alternative else ""
        raise CapacityError(
            f"{what} would enumerate {n_events} events, over the cap of {cap}{hint}"
        )


@dataclass(frozen=True)
class Shape:
    """Per-variable cardinalities ``(I_1, ..., I_d)``."""

    cardinalities: tuple[int, ...]

    def __post_init__(self):
        cards = tuple(int(c) for c in self.cardinalities)
        object.__setattr__(self, "cardinalities", cards)
        if len(cards) < 1:
            raise DomainError("a shape needs at least one variable")
        if any(c < 2 for c in cards):
            raise DomainError(f"every cardinality must be >= 2, got {cards}")

    @property
    def d(self) -> int:
        return len(self.cardinalities)

    def n_events(self) -> int:
        """Total event count as an exact Python int (never wraps)."""
        return math.prod(self.cardinalities)

    def card(self, k: int) -> int:
        """Cardinality of variable `k` (1-based)."""
        if not 1 <= k <= self.d:
            raise DomainError(f"variable {k} out of range 1..{self.d}")
        return self.cardinalities[k - 1]

    def restrict(self, subset: "VarSubset") -> tuple[int, ...]:
        """Cardinalities of the variables in `subset`, ascending order."""
        return tuple(self.card(k) for k in subset)

    def all_variables(self) -> "VarSubset":
        return VarSubset(tuple(range(1, self.d + 1)))

    def __iter__(self) -> Iterator[int]:
        return iter(self.cardinalities)


@dataclass(frozen=True)
class VarSubset:
    """A sorted, duplicate-free subset of variable indices in ``1..d``.

    The empty subset is permitted and represents the trivial interaction.
    Deterministic orderings use :meth:`sort_key` (size first, then members);
    containment is a separate notion, tested with :meth:`issubset`.
    """

    members: tuple[int, ...]

    def __post_init__(self):
        mem = tuple(int(k) for k in self.members)
        object.__setattr__(self, "members", mem)
        if any(k < 1 for k in mem):
            raise DomainError(f"variable indices are 1-based, got {mem}")
        if any(a >= b for a, b in zip(mem, mem[1:])):
            raise DomainError(f"members must be strictly increasing, got {mem}")
        object.__setattr__(self, "_hash", hash(mem))

    def __hash__(self) -> int:
        return self._hash

    @classmethod
    def of(cls, *members: int) -> "VarSubset":
        return cls(tuple(sorted(set(members))))

    @classmethod
    def empty(cls) -> "VarSubset":
        return cls(())

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __contains__(self, k: int) -> bool:
        return k in self.members

    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        return (len(self.members), self.members)

    def issubset(self, other: "VarSubset") -> bool:
        return set(self.members) <= set(other.members)

    def union(self, other: "VarSubset") -> "VarSubset":
        return VarSubset(tuple(sorted(set(self.members) | set(other.members))))

    def difference(self, other: "VarSubset") -> "VarSubset":
        return VarSubset(tuple(k for k in self.members if k not in other.members))

    def complement(self, shape: Shape) -> "VarSubset":
        return VarSubset(tuple(k for k in range(1, shape.d + 1) if k not in self.members))

    def axes(self) -> tuple[int, ...]:
        """0-based full-space axes of the members (variable k -> axis k-1)."""
        return tuple(k - 1 for k in self.members)

    def position_of(self, k: int) -> int:
        """Axis of variable `k` within a tensor over this subset."""
        return self.members.index(k)

    def subsets(self) -> Iterator["VarSubset"]:
        """All subsets of this subset, the empty subset included."""
        for r in range(len(self.members) + 1):
            for combo in combinations(self.members, r):
                yield VarSubset(combo)

    def drop_one(self) -> Iterator["VarSubset"]:
        """Immediate sub-subsets (each obtained by removing one member)."""
        for k in self.members:
            yield VarSubset(tuple(m for m in self.members if m != k))

    def __repr__(self) -> str:
        return "{" + ",".join(str(k) for k in self.members) + "}"


EMPTY_SUBSET = VarSubset(())


class InteractionCollection:
    """A family of variable subsets; always contains the empty subset.

    Insertion order is preserved (it drives deterministic iteration in
    fitting and sampling schedules) but equality and hashing ignore it.
    """

    __slots__ = ("_ordered", "_members")

    def __init__(self, subsets: Iterable[VarSubset] = ()):
        ordered: list[VarSubset] = [EMPTY_SUBSET]
        seen = {EMPTY_SUBSET}
        for s in subsets:
            if not isinstance(s, VarSubset):
                s = VarSubset(tuple(sorted(set(s))))
            if s not in seen:
                ordered.append(s)
                seen.add(s)
        self._ordered = tuple(ordered)
        self._members = frozenset(seen)

    @classmethod
    def of(cls, *subsets) -> "InteractionCollection":
        return cls(VarSubset(tuple(sorted(set(s)))) for s in subsets)

    @classmethod
    def singletons(cls, d: int) -> "InteractionCollection":
        return cls(VarSubset((k,)) for k in range(1, d + 1))

    @classmethod
    def up_to_order(cls, d: int, order: int) -> "InteractionCollection":
        """All subsets of [d] with at most `order` members (the r-body family)."""
        return cls(
            VarSubset(c)
            for r in range(1, order + 1)
            for c in combinations(range(1, d + 1), r)
        )

    @classmethod
    def full(cls, d: int) -> "InteractionCollection":
        return cls.up_to_order(d, d)

    def __contains__(self, s: VarSubset) -> bool:
        return s in self._members

    def __len__(self) -> int:
        return len(self._ordered)

    def __iter__(self) -> Iterator[VarSubset]:
        return iter(self._ordered)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InteractionCollection):
            return NotImplemented
        return self._members == other._members

    def __hash__(self) -> int:
        return hash(self._members)

    def key(self) -> frozenset:
        """Order-insensitive identity, suitable for memoization."""
        return self._members

    def nonempty(self) -> tuple[VarSubset, ...]:
        return tuple(s for s in self._ordered if len(s) > 0)

    def with_subset(self, s: VarSubset) -> "InteractionCollection":
        """New collection with `s` adjoined (no-op if already present)."""
        if s in self._members:
            return self
        return InteractionCollection(list(self._ordered[1:]) + [s])

    def with_subsets(self, subsets: Iterable[VarSubset]) -> "InteractionCollection":
        out = self
        for s in subsets:
            out = out.with_subset(s)
        return out

    def issubset(self, other: "InteractionCollection") -> bool:
        return self._members <= other._members

    def max_order(self) -> int:
        return max((len(s) for s in self._ordered), default=0)

    def is_hierarchical(self) -> bool:
        """True iff every subset of every member is also a member."""
        for s in self._ordered:
            for t in s.drop_one():
                if t not in self._members:
                    return False
        return True

    def __repr__(self) -> str:
        inner = ", ".join(repr(s) for s in self._ordered)
        return f"InteractionCollection([{inner}])"


def is_hierarchical(collection: InteractionCollection) -> bool:
    """True iff `collection` is downward closed under taking subsets."""
    return collection.is_hierarchical()


def heredity_count(s: VarSubset, collection: InteractionCollection) -> int:
    """Number of immediate sub-subsets of `s` present in `collection`."""
    if len(s) == 0:
        raise DomainError("heredity count is undefined for the empty subset")
    return sum(1 for t in s.drop_one() if t in collection)


def subsets_up_to_order(d: int, max_order: int) -> Iterator[VarSubset]:
    """All non-empty subsets of [d] with at most `max_order` members."""
    for r in range(1, min(max_order, d) + 1):
        for combo in combinations(range(1, d + 1), r):
            yield VarSubset(combo)


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """A real tensor indexed by the coordinates of `subset`.

    Values are stored row-major over the subset's variables sorted ascending
    and are frozen after construction.
    """

    subset: VarSubset
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != len(self.subset):
            raise DomainError(
                f"tensor over {self.subset} needs {len(self.subset)} axes, got {vals.ndim}"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError(f"tensor over {self.subset} contains non-finite entries")
        vals = np.ascontiguousarray(vals)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def n_cells(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.subset == other.subset and np.array_equal(self.values, other.values)


class ProbTensor(DenseTensor):
    """A DenseTensor holding a probability distribution: non-negative, sums to 1."""

    _SUM_TOL = 1e-9

    def __post_init__(self):
        super().__post_init__()
        total = float(self.values.sum())
        if self.values.size and float(self.values.min()) < 0:
            raise DomainError(f"probability tensor over {self.subset} has negative entries")
        if abs(total - 1.0) > self._SUM_TOL:
            raise DomainError(
                f"probability tensor over {self.subset} sums to {total!r}, not 1"
            )

    @classmethod
    def uniform(cls, subset: VarSubset, shape: Shape) -> "ProbTensor":
        cards = shape.restrict(subset)
        n = math.prod(cards) if cards else 1
        return cls(subset, np.full(cards, 1.0 / n))

    @classmethod
    def from_counts(cls, subset: VarSubset, counts: np.ndarray) -> "ProbTensor":
        counts = np.asarray(counts, dtype=np.float64)
        total = counts.sum()
        if total <= 0:
            raise DomainError("cannot normalize an all-zero count tensor")
        return cls(subset, counts / total)


def marginalize(p: ProbTensor, s: VarSubset) -> ProbTensor:
    """Marginal of `p` onto `s` by summation over the complement modes."""
    t = p.subset
    if not s.issubset(t):
        raise DomainError(f"{s} is not a subset of the tensor's variables {t}")
    drop = tuple(i for i, k in enumerate(t) if k not in s)
    vals = p.values.sum(axis=drop) if drop else np.array(p.values)
    return ProbTensor(s, vals)


def sum_onto(values: np.ndarray, t: VarSubset, s: VarSubset) -> np.ndarray:
    """Raw-array marginal sum of a tensor over `t` onto `s` (s must be in t)."""
    drop = tuple(i for i, k in enumerate(t) if k not in s)
    return values.sum(axis=drop) if drop else values


def expand_uniform(t: DenseTensor, s: VarSubset, shape: Shape) -> DenseTensor:
    """Lift a tensor over T to S >= T by tensoring with the uniform weights.

    ``result(i_S) = t(i_T) / prod(I_k for k in S - T)``; the total sum is
    preserved, so probability tensors stay probability tensors.
    """
    sub = t.subset
    if not sub.issubset(s):
        raise DomainError(f"{sub} is not a subset of the target variables {s}")
    vals = expand_uniform_values(t.values, sub, s, shape)
    if isinstance(t, ProbTensor):
        return ProbTensor(s, vals)
    return DenseTensor(s, vals)


def expand_uniform_values(
    values: np.ndarray, sub: VarSubset, s: VarSubset, shape: Shape
) -> np.ndarray:
    """Raw-array version of :func:`expand_uniform`."""
    target_cards = shape.restrict(s)
    view_shape = tuple(
        shape.card(k) if k in sub else 1 for k in s
    )
    extra = [shape.card(k) for k in s if k not in sub]
    scale = 1.0 / math.prod(extra) if extra else 1.0
    return np.broadcast_to(values.reshape(view_shape), target_cards) * scale


def center_fibers(t: DenseTensor) -> DenseTensor:
    """Project onto the zero-fiber-sum gauge: every fiber sum becomes zero.

    Implemented as sequential per-mode mean subtraction; the per-mode
    operators commute, so the order does not matter. Idempotent and linear.
    """
    return DenseTensor(t.subset, center_fibers_values(t.values))


def center_fibers_values(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=np.float64)
    for axis in range(out.ndim):
        out -= out.sum(axis=axis, keepdims=True) * (1.0 / out.shape[axis])
    return out
