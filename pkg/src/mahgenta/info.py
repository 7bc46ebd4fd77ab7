"""Exact information measures on small discrete distributions.

Entropy, KL divergence, multiple mutual information, the alternating-KL
J-value used as a selection score, refined information (the KL-error drop
from enlarging an interaction collection by one subset), and the complete
decomposition of ``KL(p; uniform)`` along a maximal hierarchical chain.

Divergences are computed and stored in nats; reporting surfaces convert to
bits on request.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    InteractionCollection,
    ProbTensor,
    Shape,
    VarSubset,
    check_enum_cap,
    marginalize,
)
from .errors import DomainError
from .loglinear import PROJECTION_TOL, ThetaModel, project_model

__all__ = [
    "entropy",
    "kl_divergence",
    "mmi",
    "j_value",
    "information_lattice",
    "ProjectionCache",
    "refined_information",
    "canonical_ri",
    "Chain",
    "random_maximal_chain",
    "greedy_chain",
    "DecompositionStep",
    "DecompositionReport",
    "decompose_chain",
]

LN2 = math.log(2.0)
# Projections backing refined information run tighter than the generic
# default so that telescoping sums hold to 1e-8 and steps to -1e-10.
RI_PROJECTION_TOL = 1e-9


def _to_unit(nats: float, unit: str) -> float:
    if unit == "nats":
        return nats
    if unit == "bits":
        return nats / LN2
    raise DomainError(f"unknown unit {unit!r}; expected 'nats' or 'bits'")


def entropy(p: ProbTensor, s: VarSubset | None = None, unit: str = "nats") -> float:
    """Shannon entropy of the marginal of `p` on `s` (0 log 0 = 0)."""
    ps = marginalize(p, s) if s is not None and s != p.subset else p
    vals = ps.values.reshape(-1)
    nz = vals[vals > 0]
    h = float(-(nz * np.log(nz)).sum())
    return _to_unit(max(h, 0.0), unit)


def kl_divergence(p: ProbTensor, q: ProbTensor) -> float:
    """KL(p; q) in nats. Raises when q lacks support where p has mass."""
    if p.subset != q.subset or p.shape != q.shape:
        raise DomainError("KL divergence needs two tensors over the same space")
    pv = p.values.reshape(-1)
    qv = q.values.reshape(-1)
    bad = (pv > 0) & (qv == 0)
    if np.any(bad):
        cell = np.unravel_index(int(np.argmax(bad)), p.shape)
        raise DomainError(
            f"support violation at cell {tuple(int(c) for c in cell)}: p > 0 but q = 0"
        )
    mask = pv > 0
    return float((pv[mask] * (np.log(pv[mask]) - np.log(qv[mask]))).sum())


def _kl_to_uniform_nats(p: ProbTensor, t: VarSubset) -> float:
    """KL(p_T; u_T) = log|I_T| - H_T, in nats."""
    pt = marginalize(p, t)
    return math.log(max(pt.values.size, 1)) - entropy(pt, unit="nats")


def mmi(p: ProbTensor, s: VarSubset, unit: str = "bits") -> float:
    """Multiple mutual information: alternating entropy sum over subsets of `s`.

    Matches classical mutual information for pairs; may be negative from
    order three upward.
    """
    if len(s) == 0:
        raise DomainError("multiple mutual information is undefined for the empty subset")
    total = 0.0
    for t in s.subsets():
        if len(t) == 0:
            continue  # H of the empty marginal is 0
        total += (-1.0) ** (len(t) - 1) * entropy(p, t, unit="nats")
    return _to_unit(total, unit)


def j_value(p: ProbTensor, s: VarSubset, unit: str = "bits") -> float:
    """Alternating sum of KL-to-uniform over subsets of `s`.

    Equals ``(-1)^|S|`` times the multiple mutual information from order two
    upward; its absolute value is the interaction-selection score.
    """
    total = 0.0
    for t in s.subsets():
        total += (-1.0) ** (len(s) - len(t)) * _kl_to_uniform_nats(p, t)
    return _to_unit(total, unit)


def information_lattice(p: ProbTensor, unit: str = "bits") -> dict[str, dict[VarSubset, float]]:
    """H, I, and J for every subset of the tensor's variables.

    The I entry for the empty subset is 0 by convention (the scalar form
    rejects it).
    """
    out = {"H": {}, "I": {}, "J": {}}
    for s in p.subset.subsets():
        out["H"][s] = entropy(p, s, unit=unit)
        out["I"][s] = 0.0 if len(s) == 0 else mmi(p, s, unit=unit)
        out["J"][s] = j_value(p, s, unit=unit)
    return out


class ProjectionCache:
    """Memoizes one projection per collection and warm-starts refinements.

    Chain decompositions touch nested collections; reusing the fitted model
    of the largest cached sub-collection makes each successive projection a
    short correction instead of a cold solve. Duplicate computation is
    harmless (entries are idempotent).
    """

    def __init__(self, p: ProbTensor, tol: float = RI_PROJECTION_TOL):
        self.p = p
        self.tol = tol
        self._entries: dict[frozenset, tuple[ThetaModel, ProbTensor]] = {}

    def projection(self, collection: InteractionCollection) -> ProbTensor:
        return self._solve(collection)[1]

    def kl_from(self, collection: InteractionCollection) -> float:
        """KL(p; projection onto the collection's family), in nats."""
        return kl_divergence(self.p, self.projection(collection))

    def _solve(self, collection: InteractionCollection) -> tuple[ThetaModel | None, ProbTensor]:
        key = collection.key()
        hit = self._entries.get(key)
        if hit is not None:
            return hit
        if collection == InteractionCollection.full(len(self.p.subset)):
            # moment matching on the joint itself pins the projection to p
            entry: tuple[ThetaModel | None, ProbTensor] = (None, self.p)
        else:
            warm = None
            best = -1
            for cached_key, (model, _) in self._entries.items():
                if model is not None and cached_key <= key and len(cached_key) > best:
                    warm = model
                    best = len(cached_key)
            entry = project_model(self.p, collection, tol=self.tol, warm_start=warm)
        self._entries[key] = entry
        return entry


def refined_information(
    p: ProbTensor,
    collection: InteractionCollection,
    s: VarSubset,
    tol: float = RI_PROJECTION_TOL,
    cache: ProjectionCache | None = None,
) -> float:
    """KL-error drop from adjoining `s` to the collection, in nats.

    Both the collection and the enlarged collection must be hierarchical and
    `s` must not already be a member. Non-negative up to projection accuracy.
    """
    if s in collection:
        raise DomainError(f"{s} is already in the collection")
    if not collection.is_hierarchical():
        raise DomainError("the context collection must be hierarchical")
    enlarged = collection.with_subset(s)
    if not enlarged.is_hierarchical():
        raise DomainError(f"adjoining {s} breaks the hierarchical property")
    check_enum_cap(math.prod(p.shape), "refined information")
    if cache is None:
        cache = ProjectionCache(p, tol=tol)
    return cache.kl_from(collection) - cache.kl_from(enlarged)


def canonical_ri(p: ProbTensor, s: VarSubset, mode: str = "marginal",
                 tol: float = RI_PROJECTION_TOL) -> float:
    """Chain-free refined information of `s`, in nats.

    "marginal" uses the minimal admissible context (all proper subsets of
    `s`); for pairs this is classical mutual information. "conditional" uses
    the maximal context (everything except the supersets of `s`) and
    vanishes when the variables of `s` are conditionally independent given
    the rest.
    """
    if len(s) < 2:
        raise DomainError("canonical refined information needs at least two variables")
    d = len(p.subset)
    if mode == "marginal":
        context = InteractionCollection(t for t in s.subsets() if t != s)
    elif mode == "conditional":
        context = InteractionCollection(
            t for t in p.subset.subsets() if not s.issubset(t)
        )
    else:
        raise DomainError(f"unknown mode {mode!r}; expected 'marginal' or 'conditional'")
    del d
    return refined_information(p, context, s, tol=tol)


@dataclass(frozen=True)
class Chain:
    """A strictly increasing sequence of hierarchical collections."""

    collections: tuple[InteractionCollection, ...]

    def __post_init__(self):
        if len(self.collections) == 0:
            raise DomainError("a chain needs at least one collection")
        for a, b in zip(self.collections, self.collections[1:]):
            if not (a.issubset(b) and len(a) < len(b)):
                raise DomainError("chain collections must strictly increase")
        for c in self.collections:
            if not c.is_hierarchical():
                raise DomainError("every chain collection must be hierarchical")

    @classmethod
    def from_added(cls, subsets: list[VarSubset]) -> "Chain":
        """Build a maximally refined chain from {empty} by adjoining in order."""
        collections = [InteractionCollection()]
        for s in subsets:
            collections.append(collections[-1].with_subset(s))
        return cls(tuple(collections))

    def is_complete(self, d: int) -> bool:
        return (
            len(self.collections[0]) == 1
            and self.collections[-1] == InteractionCollection.full(d)
        )

    def is_maximally_refined(self) -> bool:
        return all(
            len(b) == len(a) + 1
            for a, b in zip(self.collections, self.collections[1:])
        )

    @property
    def added_subsets(self) -> tuple[VarSubset, ...]:
        if not self.is_maximally_refined():
            raise DomainError("added subsets are defined only for maximally refined chains")
        out = []
        for a, b in zip(self.collections, self.collections[1:]):
            (new,) = set(b.key()) - set(a.key())
            out.append(new)
        return tuple(out)


def random_maximal_chain(d: int, rng: np.random.Generator) -> Chain:
    """A uniformly grown complete maximal hierarchical chain on [d]."""
    current = InteractionCollection()
    added: list[VarSubset] = []
    universe = list(VarSubset(tuple(range(1, d + 1))).subsets())
    while len(added) < 2 ** d - 1:
        admissible = [
            s for s in universe
            if len(s) > 0 and s not in current
            and all(t in current for t in s.drop_one())
        ]
        pick = admissible[int(rng.integers(len(admissible)))]
        added.append(pick)
        current = current.with_subset(pick)
    return Chain.from_added(added)


def greedy_chain(p: ProbTensor, tol: float = RI_PROJECTION_TOL) -> Chain:
    """Complete maximal chain grown by always adjoining the largest-RI subset.

    Ties break toward smaller subsets, then lexicographic members.
    """
    d = len(p.subset)
    check_enum_cap(math.prod(p.shape), "greedy chain construction")
    cache = ProjectionCache(p, tol=tol)
    current = InteractionCollection()
    added: list[VarSubset] = []
    universe = list(p.subset.subsets())
    while len(added) < 2 ** d - 1:
        admissible = [
            s for s in universe
            if len(s) > 0 and s not in current
            and all(t in current for t in s.drop_one())
        ]
        scored = [
            (refined_information(p, current, s, cache=cache), s) for s in admissible
        ]
        scored.sort(key=lambda pair: (-pair[0], pair[1].sort_key()))
        best = scored[0][1]
        added.append(best)
        current = current.with_subset(best)
    return Chain.from_added(added)


@dataclass(frozen=True)
class DecompositionStep:
    subset: VarSubset
    context: InteractionCollection
    nats: float

    @property
    def bits(self) -> float:
        return self.nats / LN2


@dataclass(frozen=True)
class DecompositionReport:
    """Per-step refined information along a chain, summing to KL(p; uniform)."""

    steps: tuple[DecompositionStep, ...]
    total_kl: float

    SUM_TOL = 1e-8
    STEP_FLOOR = -1e-10

    def __post_init__(self):
        gap = abs(sum(s.nats for s in self.steps) - self.total_kl)
        if gap > self.SUM_TOL:
            raise DomainError(
                f"decomposition steps sum off the total KL by {gap:.3e} (tolerance {self.SUM_TOL})"
            )
        worst = min((s.nats for s in self.steps), default=0.0)
        if worst < self.STEP_FLOOR:
            raise DomainError(
                f"a refined-information step is negative beyond tolerance: {worst:.3e}"
            )

    def residual(self) -> float:
        return sum(s.nats for s in self.steps) - self.total_kl

    def to_json_dict(self) -> dict:
        total = self.total_kl
        cum = 0.0
        steps = []
        for s in self.steps:
            cum += s.nats
            steps.append(
                {
                    "subset": list(s.subset.members),
                    "nats": s.nats,
                    "bits": s.bits,
                    "cumulative_fraction": (cum / total) if total > 0 else 0.0,
                }
            )
        return {
            "format_version": 1,
            "total_kl_nats": total,
            "total_kl_bits": total / LN2,
            "residual_nats": self.residual(),
            "steps": steps,
        }


def decompose_chain(
    p: ProbTensor,
    chain: Chain,
    tol: float = RI_PROJECTION_TOL,
    cache: ProjectionCache | None = None,
) -> DecompositionReport:
    """Attribute all of ``KL(p; uniform)`` to the chain's added subsets.

    Pass a shared :class:`ProjectionCache` when decomposing the same
    distribution along several chains; overlapping collections are then
    projected once.
    """
    d = len(p.subset)
    if not chain.is_complete(d):
        raise DomainError("the chain must run from the empty collection to the full powerset")
    if not chain.is_maximally_refined():
        raise DomainError("the chain must add exactly one subset per step")
    check_enum_cap(math.prod(p.shape), "chain decomposition")
    if cache is None:
        cache = ProjectionCache(p, tol=tol)
    shape = Shape(p.shape)
    uniform = ProbTensor.uniform(p.subset, shape)
    total = kl_divergence(p, uniform)
    steps = []
    prev_kl = cache.kl_from(chain.collections[0])
    for context, subset in zip(chain.collections, chain.added_subsets):
        next_kl = cache.kl_from(context.with_subset(subset))
        steps.append(DecompositionStep(subset=subset, context=context, nats=prev_kl - next_kl))
        prev_kl = next_kl
    return DecompositionReport(steps=tuple(steps), total_kl=total)
