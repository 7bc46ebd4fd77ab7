"""Greedy interaction selection with validation-based early stopping.

Each round generates candidate subsets under a weak-heredity rule, scores
them by the absolute J-value of the training marginals (an inexpensive stand
in for refined information), adjoins the top K as zero-initialized tensors,
and runs a short burst of gradient descent. The loop stops the first round
the validation error fails to improve and returns the best-validation
snapshot together with the capacity-curve history.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    InteractionCollection,
    Shape,
    VarSubset,
    enum_cap,
    heredity_count,
    marginalize,
    subsets_up_to_order,
)
from .data import Dataset, EmpiricalMarginals, entropy_of_rows
from .errors import CapacityError, DomainError
from .info import entropy
from .loglinear import ThetaModel, energy_of_rows, exact_log_partition, gd_fit
from .sampling import ais_log_partition, stochastic_fit

__all__ = [
    "SelectionConfig",
    "HistoryRound",
    "SelectionHistory",
    "next_available_interactions",
    "score_interaction",
    "top_interactions",
    "mahgenta_fit",
]


@dataclass(frozen=True)
class SelectionConfig:
    """Knobs of the selection loop; defaults follow the reference recipe."""

    tau: float = 0.30
    k: int = 10
    epochs_per_round: int = 10
    lr: float = 0.50
    max_order: int | None = 4
    renormalize_score: bool = True
    error_mode: str = "exact_kl"
    max_rounds: int | None = None
    # sampled-regime knobs, used only in estimated_nll mode
    n_chains: int = 256
    ais_temps: int = 200
    sweeps_per_epoch: int = 1

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise DomainError(f"tau must lie in [0, 1], got {self.tau}")
        if self.k < 1:
            raise DomainError(f"k must be at least 1, got {self.k}")
        if self.lr <= 0:
            raise DomainError(f"lr must be positive, got {self.lr}")
        if self.epochs_per_round < 1:
            raise DomainError("epochs_per_round must be at least 1")
        if self.error_mode not in ("exact_kl", "estimated_nll"):
            raise DomainError(
                f"unknown error mode {self.error_mode!r}; expected 'exact_kl' or 'estimated_nll'"
            )


@dataclass(frozen=True)
class HistoryRound:
    round: int
    collection_size: int
    parameter_count: int
    train_error: float
    val_error: float
    added: tuple[VarSubset, ...]
    wall_time: float


@dataclass
class SelectionHistory:
    """Capacity curve: one row per selection round."""

    rounds: list[HistoryRound] = field(default_factory=list)

    def append(self, row: HistoryRound) -> None:
        if self.rounds:
            prev = self.rounds[-1].collection_size
            if row.added and row.collection_size <= prev:
                raise DomainError("collection size must strictly increase across rounds")
            if not row.added and row.collection_size != prev and row.round > 0:
                raise DomainError("a training-only round cannot change the collection")
        self.rounds.append(row)

    def best_round(self) -> HistoryRound:
        return min(self.rounds, key=lambda r: r.val_error)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["round", "collection_size", "parameter_count",
                 "train_error", "val_error", "added_subsets", "wall_time_s"]
            )
            for r in self.rounds:
                added = ";".join(",".join(str(k) for k in s) for s in r.added)
                writer.writerow(
                    [r.round, r.collection_size, r.parameter_count,
                     repr(r.train_error), repr(r.val_error), added, f"{r.wall_time:.3f}"]
                )


def next_available_interactions(
    collection: InteractionCollection,
    tau: float,
    shape: Shape,
    max_order: int | None = None,
) -> list[VarSubset]:
    """Candidate subsets admissible under heredity strength `tau`.

    A candidate outside the collection qualifies when more than a `tau`
    fraction of its immediate sub-subsets are already members. Full strength
    (tau = 1) cannot be met by a strict inequality, so it switches to the
    strong rule: every immediate sub-subset present.
    """
    order_cap = shape.d if max_order is None else min(max_order, shape.d)
    out = []
    for s in subsets_up_to_order(shape.d, order_cap):
        if s in collection:
            continue
        n_s = heredity_count(s, collection)
        if tau >= 1.0:
            ok = n_s == len(s)
        else:
            ok = n_s / len(s) > tau
        if ok:
            out.append(s)
    return out


def score_interaction(marginals, s: VarSubset, renormalize: bool = False) -> float:
    """|J| of the source's marginal on `s`, in nats.

    Needs only tables over subsets of `s`, never the full joint. With
    `renormalize`, the score is divided by the tensor's free-parameter count
    so large interactions are not favored merely for their size.
    """
    if len(s) == 0:
        return 0.0
    ps = marginals.marginal(s)
    j = 0.0
    for t in s.subsets():
        pt = marginalize(ps, t)
        kl_u = math.log(max(pt.values.size, 1)) - entropy(pt, unit="nats")
        j += (-1.0) ** (len(s) - len(t)) * kl_u
    score = abs(j)
    if renormalize:
        free = math.prod(c - 1 for c in ps.shape)
        score /= max(free, 1)
    return score


def top_interactions(scores: dict[VarSubset, float], k: int) -> list[VarSubset]:
    """The k highest-scoring subsets, descending; ties prefer smaller subsets."""
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0].sort_key()))
    return [s for s, _ in ranked[: max(k, 0)]]


def _exact_error(model: ThetaModel, rows: np.ndarray, emp_entropy: float) -> float:
    """KL(empirical; model) in nats via log Z - mean energy - plug-in entropy."""
    log_z = exact_log_partition(model)
    mean_e = float(energy_of_rows(model, rows).mean()) if len(rows) else 0.0
    return log_z - mean_e - emp_entropy


def _nll_error(model: ThetaModel, rows: np.ndarray, log_z: float) -> float:
    mean_e = float(energy_of_rows(model, rows).mean()) if len(rows) else 0.0
    return log_z - mean_e


def mahgenta_fit(
    train: Dataset,
    val: Dataset,
    config: SelectionConfig = SelectionConfig(),
    seed: int = 0,
) -> tuple[ThetaModel, SelectionHistory]:
    """Run the full selection loop and return (best model, history).

    Round 0 records the empty (uniform) model. Each later round adds the top
    scoring admissible interactions and refits; the loop exits the first
    time validation error fails to improve and the best-validation snapshot
    is returned.
    """
    if train.n == 0:
        raise DomainError("the training split is empty")
    if val.n == 0:
        raise DomainError("the validation split is empty")
    if train.shape != val.shape or train.category_labels != val.category_labels:
        raise DomainError("train and validation data must share shape and category maps")
    shape = train.shape
    exact = config.error_mode == "exact_kl"
    if exact and shape.n_events() > enum_cap():
        raise CapacityError(
            f"exact_kl error mode needs full enumeration of {shape.n_events()} events; "
            "switch to error_mode='estimated_nll'"
        )
    scorer = EmpiricalMarginals(train.rows, shape)
    scores_memo: dict[VarSubset, float] = {}
    eta_memo: dict[VarSubset, np.ndarray] = {}

    def data_eta_for(collection: InteractionCollection) -> dict[VarSubset, np.ndarray]:
        for s in collection.nonempty():
            if s not in eta_memo:
                eta_memo[s] = scorer.marginal(s).values
        return {s: eta_memo[s] for s in collection.nonempty()}

    h_train = entropy_of_rows(train.rows)
    h_val = entropy_of_rows(val.rows)

    def errors(model: ThetaModel, round_idx: int) -> tuple[float, float]:
        if exact:
            return (
                _exact_error(model, train.rows, h_train),
                _exact_error(model, val.rows, h_val),
            )
        est = ais_log_partition(
            model,
            n_chains=config.n_chains,
            n_temps=config.ais_temps,
            seed=seed * 131071 + round_idx,
        )
        model.log_z, model.log_z_state = est.log_z, "estimated"
        model.log_z_stderr = est.stderr
        return (
            _nll_error(model, train.rows, est.log_z),
            _nll_error(model, val.rows, est.log_z),
        )

    model = ThetaModel.zeros(shape, InteractionCollection())
    history = SelectionHistory()
    best_model = model.copy()
    best_err = math.inf
    round_idx = 0
    added: tuple[VarSubset, ...] = ()
    t_round = time.perf_counter()
    while True:
        train_err, val_err = errors(model, round_idx)
        now = time.perf_counter()
        history.append(
            HistoryRound(
                round=round_idx,
                collection_size=len(model.collection),
                parameter_count=model.n_free_parameters(),
                train_error=train_err,
                val_error=val_err,
                added=added,
                wall_time=now - t_round,
            )
        )
        t_round = now
        if not (val_err < best_err):
            break
        best_err = val_err
        best_model = model.copy()
        if config.max_rounds is not None and round_idx >= config.max_rounds:
            break
        candidates = next_available_interactions(
            model.collection, config.tau, shape, config.max_order
        )
        for s in candidates:
            if s not in scores_memo:
                scores_memo[s] = score_interaction(
                    scorer, s, renormalize=config.renormalize_score
                )
        added = tuple(
            top_interactions({s: scores_memo[s] for s in candidates}, config.k)
        )
        # an exhausted candidate lattice still gets training rounds: the loop
        # only ends when validation error stops improving
        if added:
            model = model.with_subsets_added(added)
        elif not model.collection.nonempty():
            break  # nothing to add and nothing to train
        eta = data_eta_for(model.collection)
        if exact:
            model = gd_fit(model, eta, lr=config.lr, epochs=config.epochs_per_round)
        else:
            model = stochastic_fit(
                model,
                eta,
                lr=config.lr,
                epochs=config.epochs_per_round,
                n_chains=config.n_chains,
                sweeps_per_epoch=config.sweeps_per_epoch,
                seed=seed * 131071 + round_idx,
                init_rows=train.rows,
            )
        round_idx += 1
    return best_model, history
