"""The hierarchical log-linear (energy) model and its exact training machinery.

A model assigns each event ``i`` the unnormalized log-probability
``E(i) = sum_S theta^S(i_S)`` over the subsets in its interaction collection;
the normalized distribution is ``q(i) = exp(E(i) - log Z)``. Parameters live
in the zero-fiber-sum gauge, which pins down the otherwise-redundant
parametrization and makes the gradient of the KL objective "purified": free
of lower-order components.

Everything in this module enumerates the event space exactly and therefore
checks the enumeration cap; the sampled counterparts for large spaces live in
:mod:`mahgenta.sampling`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.special import logsumexp

from .core import (
    DenseTensor,
    InteractionCollection,
    ProbTensor,
    Shape,
    VarSubset,
    center_fibers_values,
    check_enum_cap,
    marginalize,
    sum_onto,
)
from .errors import ConvergenceError, DomainError, StepSizeError

__all__ = [
    "ThetaModel",
    "EtaVector",
    "energy",
    "energy_table",
    "exact_log_partition",
    "model_distribution",
    "model_eta",
    "purified_gradient",
    "gd_fit",
    "fit_to_tolerance",
    "project",
    "project_model",
    "ipf_project",
    "energy_of_rows",
    "conditional_energies",
]

CENTERING_TOL = 1e-9
PROJECTION_TOL = 1e-8
PROJECTION_BUDGET = 50_000


@dataclass
class ThetaModel:
    """Interaction collection plus one zero-fiber-sum tensor per subset.

    ``log_z`` (the log-normalizer, i.e. minus the constant term) carries a
    validity tag: "exact" after full enumeration, "estimated" after AIS, and
    "stale" whenever parameters changed since it was computed. Models are
    values: fitting routines return new instances and never mutate `params`
    in place (the log_z fields double as an idempotent cache).
    """

    shape: Shape
    collection: InteractionCollection
    params: dict[VarSubset, np.ndarray]
    log_z: float | None = None
    log_z_state: str = "stale"
    log_z_stderr: float = 0.0

    def __post_init__(self):
        expected = set(self.collection.nonempty())
        got = set(self.params)
        if expected != got:
            raise DomainError(
                f"params must cover exactly the non-empty collection subsets; "
                f"missing {expected - got}, extra {got - expected}"
            )
        clean = {}
        for s, th in self.params.items():
            arr = np.ascontiguousarray(np.asarray(th, dtype=np.float64))
            if arr.shape != self.shape.restrict(s):
                raise DomainError(
                    f"theta for {s} has shape {arr.shape}, expected {self.shape.restrict(s)}"
                )
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"theta for {s} contains non-finite entries")
            for axis in range(arr.ndim):
                worst = float(np.abs(arr.sum(axis=axis)).max())
                if worst > CENTERING_TOL:
                    raise DomainError(
                        f"theta for {s} violates the zero-fiber-sum gauge "
                        f"(mode {axis} sum {worst:.2e})"
                    )
            clean[s] = arr
        self.params = clean
        if self.log_z_state not in ("exact", "estimated", "stale"):
            raise DomainError(f"unknown log_z state {self.log_z_state!r}")

    @classmethod
    def zeros(cls, shape: Shape, collection: InteractionCollection) -> "ThetaModel":
        params = {s: np.zeros(shape.restrict(s)) for s in collection.nonempty()}
        return cls(shape, collection, params, log_z=None, log_z_state="stale")

    def with_params(self, params: Mapping[VarSubset, np.ndarray]) -> "ThetaModel":
        return ThetaModel(self.shape, self.collection, dict(params))

    def with_subsets_added(self, subsets: Iterable[VarSubset]) -> "ThetaModel":
        """New model with zero-initialized tensors for `subsets` adjoined."""
        coll = self.collection.with_subsets(subsets)
        params = dict(self.params)
        for s in coll.nonempty():
            if s not in params:
                params[s] = np.zeros(self.shape.restrict(s))
        return ThetaModel(self.shape, coll, params)

    def n_free_parameters(self) -> int:
        """Effective parameter count: prod(I_k - 1) per interaction tensor."""
        return sum(
            math.prod(c - 1 for c in self.shape.restrict(s)) for s in self.params
        )

    def copy(self) -> "ThetaModel":
        m = ThetaModel(self.shape, self.collection, {s: a.copy() for s, a in self.params.items()})
        m.log_z, m.log_z_state, m.log_z_stderr = self.log_z, self.log_z_state, self.log_z_stderr
        return m


@dataclass
class EtaVector:
    """Expectation coordinates: one marginal probability table per subset."""

    tables: dict[VarSubset, ProbTensor] = field(default_factory=dict)

    @classmethod
    def from_distribution(cls, p: ProbTensor, collection: InteractionCollection) -> "EtaVector":
        return cls({s: marginalize(p, s) for s in collection.nonempty()})

    def __getitem__(self, s: VarSubset) -> ProbTensor:
        return self.tables[s]

    def __contains__(self, s: VarSubset) -> bool:
        return s in self.tables

    def subsets(self) -> tuple[VarSubset, ...]:
        return tuple(self.tables)

    def arrays(self) -> dict[VarSubset, np.ndarray]:
        return {s: t.values for s, t in self.tables.items()}


def _target_arrays(data_eta, collection: InteractionCollection) -> dict[VarSubset, np.ndarray]:
    """Normalize an EtaVector / mapping into raw target arrays for fitting."""
    if isinstance(data_eta, EtaVector):
        raw = data_eta.arrays()
    else:
        raw = {s: (t.values if isinstance(t, DenseTensor) else np.asarray(t, float))
               for s, t in dict(data_eta).items()}
    out = {}
    for s in collection.nonempty():
        if s not in raw:
            raise DomainError(f"data marginal for {s} is missing")
        out[s] = raw[s]
    return out


def energy(model: ThetaModel, index: tuple[int, ...]) -> float:
    """Unnormalized log-probability of one full event (0-based codes)."""
    if len(index) != model.shape.d:
        raise DomainError(f"index has {len(index)} coordinates, expected {model.shape.d}")
    for k, (code, card) in enumerate(zip(index, model.shape), start=1):
        if not 0 <= code < card:
            raise DomainError(f"coordinate {k} out of range: {code} not in [0, {card})")
    total = 0.0
    for s, th in model.params.items():
        total += float(th[tuple(index[k - 1] for k in s)])
    return total


def energy_table(model: ThetaModel) -> np.ndarray:
    """The full energy tensor over the event space (cap-checked)."""
    check_enum_cap(model.shape.n_events(), "energy table", "mahgenta.sampling")
    table = np.zeros(model.shape.cardinalities)
    for s, th in model.params.items():
        view = tuple(c if (k + 1) in s else 1 for k, c in enumerate(model.shape))
        table += th.reshape(view)
    return table


def exact_log_partition(model: ThetaModel) -> float:
    """log sum_i exp(E(i)), max-shifted; caches the result on the model."""
    check_enum_cap(
        model.shape.n_events(), "exact log-partition", "mahgenta.sampling.ais_log_partition"
    )
    table = energy_table(model)
    log_z = float(logsumexp(table))
    model.log_z = log_z
    model.log_z_state = "exact"
    model.log_z_stderr = 0.0
    return log_z


def model_distribution(model: ThetaModel) -> ProbTensor:
    """The normalized distribution as a full probability tensor (cap-checked)."""
    table = energy_table(model)
    log_z = float(logsumexp(table))
    model.log_z, model.log_z_state, model.log_z_stderr = log_z, "exact", 0.0
    q = np.exp(table - log_z)
    q /= q.sum()
    return ProbTensor(model.shape.all_variables(), q)


def model_eta(model: ThetaModel, s: VarSubset) -> ProbTensor:
    """Exact marginal of the model distribution on `s`."""
    if len(s) == 0:
        return ProbTensor(s, np.asarray(1.0))
    check_enum_cap(
        model.shape.n_events(), "exact model marginal", "mahgenta.sampling.estimate_eta"
    )
    q = model_distribution(model)
    return marginalize(q, s)


def energy_of_rows(model: ThetaModel, rows: np.ndarray) -> np.ndarray:
    """Vectorized energies for an (n, d) matrix of category codes."""
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] != model.shape.d:
        raise DomainError(f"rows must be (n, {model.shape.d}), got {rows.shape}")
    out = np.zeros(len(rows))
    for s, th in model.params.items():
        out += th[tuple(rows[:, k - 1] for k in s)]
    return out


def conditional_energies(model: ThetaModel, rows: np.ndarray, target: int) -> np.ndarray:
    """Energies over all values of variable `target` with the rest held at `rows`.

    Returns an ``(n, I_target)`` array; only tensors touching `target`
    contribute, so the result is normalizer-free by construction.
    """
    rows = np.asarray(rows)
    m = model.shape.card(target)
    grid = np.arange(m)[None, :]
    out = np.zeros((len(rows), m))
    for s, th in model.params.items():
        if target not in s:
            continue
        idx = tuple(
            grid if k == target else rows[:, k - 1][:, None] for k in s
        )
        out += th[idx]
    return out


def purified_gradient(model: ThetaModel, data_eta, s: VarSubset) -> DenseTensor:
    """Gradient of the KL objective for theta^S, projected to the centered gauge.

    Equals ``center_fibers(eta_theta^S - eta_data^S)``; every fiber sum of the
    result is zero, so updates never leak into lower-order components.
    """
    if s not in model.collection or len(s) == 0:
        raise DomainError(f"{s} is not a non-empty member of the model collection")
    targets = _target_arrays(data_eta, InteractionCollection([s]))
    eta_model = model_eta(model, s).values
    raw = eta_model - targets[s]
    return DenseTensor(s, center_fibers_values(raw))


class _FitWorkspace:
    """Precomputed axis bookkeeping for repeated exact-gradient evaluations.

    The hot loop works with parallel lists aligned to `subsets`, avoiding
    any per-iteration hashing.
    """

    def __init__(self, shape: Shape, collection: InteractionCollection, targets):
        check_enum_cap(shape.n_events(), "exact fitting", "mahgenta.sampling.stochastic_fit")
        self.shape = shape
        self.subsets = list(collection.nonempty())
        d = shape.d
        self.targets = [targets[s] for s in self.subsets]
        self.views = [
            tuple(shape.cardinalities[k] if (k + 1) in s else 1 for k in range(d))
            for s in self.subsets
        ]
        self.marg_axes = [
            tuple(k for k in range(d) if (k + 1) not in s) for s in self.subsets
        ]

    def params_list(self, params: Mapping[VarSubset, np.ndarray]) -> list[np.ndarray]:
        return [params[s].copy() for s in self.subsets]

    def params_dict(self, params: list[np.ndarray]) -> dict[VarSubset, np.ndarray]:
        return {s: center_fibers_values(p) for s, p in zip(self.subsets, params)}

    def evaluate(self, params: list[np.ndarray]):
        """One full pass: log Z, centered gradients, residuals, objective."""
        table = np.zeros(self.shape.cardinalities)
        for view, th in zip(self.views, params):
            table += th.reshape(view)
        shift = table.max()
        table -= shift
        np.exp(table, out=table)
        z = table.sum()
        log_z = shift + math.log(z)
        table *= 1.0 / z  # table is now the normalized distribution
        grads = []
        res_inf = 0.0
        gnorm2 = 0.0
        inner = 0.0
        for axes, target, th in zip(self.marg_axes, self.targets, params):
            dev = (table.sum(axis=axes) if axes else table) - target
            res_inf = max(res_inf, float(np.abs(dev).max()))
            for axis in range(dev.ndim):
                dev -= dev.sum(axis=axis, keepdims=True) * (1.0 / dev.shape[axis])
            grads.append(dev)
            gnorm2 += float((dev * dev).sum())
            inner += float((th * target).sum())
        ce = log_z - inner
        return log_z, grads, res_inf, gnorm2, ce


def gd_fit(
    model: ThetaModel,
    data_eta,
    lr: float = 0.5,
    epochs: int = 10,
    *,
    divergence_patience: int = 5,
) -> ThetaModel:
    """Fixed-rate gradient descent: `epochs` simultaneous purified updates.

    All tensors are updated from the same model snapshot within an epoch
    (Jacobi style) and re-centered. Aborts with :class:`StepSizeError` when
    the training objective rises for `divergence_patience` consecutive
    epochs. The returned model carries a fresh exact log-normalizer.
    """
    if lr <= 0:
        raise DomainError(f"learning rate must be positive, got {lr}")
    targets = _target_arrays(data_eta, model.collection)
    ws = _FitWorkspace(model.shape, model.collection, targets)
    params = ws.params_list(model.params)
    best_ce = math.inf
    bad = 0
    for _ in range(epochs):
        _, grads, _, _, ce = ws.evaluate(params)
        # the margin keeps float-level wiggle at convergence from counting
        if ce > best_ce + 1e-9 * max(1.0, abs(best_ce)):
            bad += 1
            if bad >= divergence_patience:
                raise StepSizeError(
                    f"training objective stayed above its best for {bad} "
                    f"consecutive epochs at lr={lr}"
                )
        else:
            best_ce = ce
            bad = 0
        params = [p - lr * g for p, g in zip(params, grads)]
    out = model.with_params(ws.params_dict(params))
    exact_log_partition(out)
    return out


def fit_to_tolerance(
    model: ThetaModel,
    data_eta,
    tol: float = PROJECTION_TOL,
    max_epochs: int = PROJECTION_BUDGET,
    lr: float = 1.0,
) -> ThetaModel:
    """Gradient descent until the worst marginal deviation drops below `tol`.

    Runs accelerated (momentum) descent with a gradient-based restart, which
    handles both ill-conditioned interiors and the boundary rays created by
    zero cells in the target marginals. A coarse objective guard halves the
    step size if an iterate ever climbs far above the best value seen.
    Raises :class:`ConvergenceError` carrying the residual when the budget
    runs out.
    """
    targets = _target_arrays(data_eta, model.collection)
    ws = _FitWorkspace(model.shape, model.collection, targets)
    x = ws.params_list(model.params)
    x_prev = x
    best_f = math.inf
    best_x = x
    t_mom = 0
    res = math.inf
    for _ in range(max_epochs):
        mu = t_mom / (t_mom + 3.0)
        if mu > 0.0:
            y = [xi + mu * (xi - xp) for xi, xp in zip(x, x_prev)]
        else:
            y = x
        _, grads, res, _, f = ws.evaluate(y)
        if res < tol:
            out = model.with_params(ws.params_dict(y))
            exact_log_partition(out)
            return out
        if f < best_f:
            best_f = f
            best_x = y
        elif f > best_f + 0.5:
            lr *= 0.5
            if lr < 1e-14:
                raise ConvergenceError(
                    f"step size collapsed at marginal residual {res:.3e}", residual=res
                )
            x = [a.copy() for a in best_x]
            x_prev = x
            t_mom = 0
            continue
        x_new = [yi - lr * g for yi, g in zip(y, grads)]
        uphill = sum(float((g * (xn - xi)).sum()) for g, xn, xi in zip(grads, x_new, x))
        t_mom = 0 if uphill > 0 else t_mom + 1
        x_prev = x
        x = x_new
    raise ConvergenceError(
        f"no convergence within {max_epochs} epochs; marginal residual {res:.3e}",
        residual=res,
    )


def project_model(
    p: ProbTensor,
    collection: InteractionCollection,
    tol: float = PROJECTION_TOL,
    max_epochs: int = PROJECTION_BUDGET,
    warm_start: ThetaModel | None = None,
) -> tuple[ThetaModel, ProbTensor]:
    """Fit the collection's model to `p` and return (model, its distribution)."""
    d = int(p.subset.members[-1]) if len(p.subset) else 1
    if p.subset.members != tuple(range(1, d + 1)):
        raise DomainError("projection expects a tensor over the full variable set")
    if not collection.is_hierarchical():
        raise DomainError("projection requires a hierarchical collection")
    shape = Shape(p.shape)
    if warm_start is not None and warm_start.collection.issubset(collection):
        start = ThetaModel.zeros(shape, collection)
        merged = dict(start.params)
        merged.update({s: a.copy() for s, a in warm_start.params.items()})
        start = ThetaModel(shape, collection, merged)
    else:
        start = ThetaModel.zeros(shape, collection)
    data_eta = {s: marginalize(p, s).values for s in collection.nonempty()}
    fitted = fit_to_tolerance(start, data_eta, tol=tol, max_epochs=max_epochs)
    return fitted, model_distribution(fitted)


def project(
    p: ProbTensor,
    collection: InteractionCollection,
    tol: float = PROJECTION_TOL,
    max_epochs: int = PROJECTION_BUDGET,
) -> ProbTensor:
    """The unique member of the collection's model family matching `p`'s marginals.

    The stopping rule is observable moment matching: the fit ends when every
    marginal on the collection deviates from `p`'s by less than `tol`. The
    saturated collection is the closed-form case: matching every marginal
    including the joint forces the answer to be `p` itself.
    """
    if not collection.is_hierarchical():
        raise DomainError("projection requires a hierarchical collection")
    if collection == InteractionCollection.full(len(p.subset)):
        return ProbTensor(p.subset, np.array(p.values))
    return project_model(p, collection, tol=tol, max_epochs=max_epochs)[1]


def ipf_project(
    p: ProbTensor,
    collection: InteractionCollection,
    tol: float = PROJECTION_TOL,
    max_cycles: int = 10_000,
) -> ProbTensor:
    """Classical iterative proportional fitting; independent of :func:`project`.

    Cycles over the maximal subsets, rescaling the running table so its
    marginal matches the target, until every collection marginal agrees with
    `p`'s within `tol`.
    """
    if not collection.is_hierarchical():
        raise DomainError("IPF requires a hierarchical collection")
    full = p.subset
    shape = Shape(p.shape)
    nonempty = sorted(collection.nonempty(), key=VarSubset.sort_key)
    maximal = [
        s for s in nonempty
        if not any(s != t and s.issubset(t) for t in nonempty)
    ]
    targets = {s: sum_onto(p.values, full, s) for s in nonempty}
    q = np.full(p.shape, 1.0 / p.values.size)
    d = shape.d
    views = {
        s: tuple(shape.cardinalities[k] if (k + 1) in s else 1 for k in range(d))
        for s in nonempty
    }
    for _ in range(max_cycles):
        for s in maximal:
            qs = sum_onto(q, full, s)
            bad = (targets[s] > 0) & (qs == 0)
            if np.any(bad):
                cell = np.argwhere(bad)[0]
                raise DomainError(
                    f"IPF hit a zero marginal cell {tuple(cell)} on {s} where the target is positive"
                )
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = np.where(qs > 0, targets[s] / np.where(qs > 0, qs, 1.0), 0.0)
            q *= ratio.reshape(views[s])
        residual = 0.0
        for s in nonempty:
            residual = max(residual, float(np.abs(sum_onto(q, full, s) - targets[s]).max()))
        if residual < tol:
            return ProbTensor(full, q / q.sum())
    raise ConvergenceError(
        f"IPF did not reach tolerance {tol} within {max_cycles} cycles", residual=residual
    )
