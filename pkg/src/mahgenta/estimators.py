"""Scikit-learn style estimators wrapping the density learners.

Both estimators consume an ``(n_samples, n_features)`` matrix of categorical
values (strings or integers), encode them by first appearance, and expose
``score`` as mean log-likelihood in nats so they compose with model
selection utilities. Prediction of any single column from the others comes
for free from the fitted energy model and needs no partition function.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_is_fitted

from .core import InteractionCollection, Shape, enum_cap
from .data import Dataset, classify, empirical_eta
from .errors import DomainError
from .loglinear import (
    ThetaModel,
    energy_of_rows,
    exact_log_partition,
    fit_to_tolerance,
)
from .sampling import ais_log_partition, draw_samples
from .seeding import substream
from .selection import SelectionConfig, mahgenta_fit

__all__ = ["MahgentaDensity", "ManyBodyDensity"]


def _validate_matrix(X) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2:
        raise DomainError(f"expected a 2d sample matrix, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise DomainError(f"need at least one row and one column, got {X.shape}")
    return X


class _CategoricalDensity(DensityMixin, BaseEstimator):
    """Shared encoding, scoring, sampling, and per-column prediction."""

    def _fit_encode(self, X) -> Dataset:
        X = _validate_matrix(X)
        n, d = X.shape
        labels: list[list[str]] = [[] for _ in range(d)]
        maps: list[dict[str, int]] = [{} for _ in range(d)]
        codes = np.empty((n, d), dtype=np.int64)
        for j in range(d):
            for i in range(n):
                value = str(X[i, j])
                code = maps[j].get(value)
                if code is None:
                    code = len(labels[j])
                    maps[j][value] = code
                    labels[j].append(value)
                codes[i, j] = code
        for j, col in enumerate(labels):
            if len(col) < 2:
                raise DomainError(
                    f"column {j} has a single category and cannot define a variable"
                )
        self.category_labels_ = labels
        self._maps = maps
        self.shape_ = Shape(tuple(len(col) for col in labels))
        self.n_features_in_ = d
        names = [f"x{k}" for k in range(1, d + 1)]
        return Dataset(self.shape_, codes, names, labels)

    def _encode_new(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = _validate_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise DomainError(
                f"X has {X.shape[1]} features, the model was fitted with {self.n_features_in_}"
            )
        codes = np.empty(X.shape, dtype=np.int64)
        for j in range(X.shape[1]):
            col_map = self._maps[j]
            for i in range(X.shape[0]):
                value = str(X[i, j])
                code = col_map.get(value)
                if code is None:
                    raise DomainError(
                        f"unseen category {value!r} in column {j}; "
                        "the model only covers categories observed at fit time"
                    )
                codes[i, j] = code
        return codes

    def _log_partition(self) -> float:
        model = self.model_
        if model.log_z_state == "exact" and model.log_z is not None:
            return model.log_z
        if model.shape.n_events() <= enum_cap():
            return exact_log_partition(model)
        est = ais_log_partition(model, seed=self._seed())
        model.log_z, model.log_z_state = est.log_z, "estimated"
        model.log_z_stderr = est.stderr
        return est.log_z

    def _seed(self) -> int:
        rs = getattr(self, "random_state", 0)
        return 0 if rs is None else int(rs)

    def score(self, X, y=None) -> float:
        """Mean log-likelihood of X in nats (higher is better)."""
        codes = self._encode_new(X)
        log_z = self._log_partition()
        return float(energy_of_rows(self.model_, codes).mean()) - log_z

    def sample(self, n_samples: int = 1, burn_in: int = 100):
        """Gibbs samples from the fitted model, decoded to category labels."""
        check_is_fitted(self, "model_")
        rows = draw_samples(self.model_, n_samples, seed=self._seed(), burn_in=burn_in)
        out = np.empty(rows.shape, dtype=object)
        for j in range(rows.shape[1]):
            col = np.asarray(self.category_labels_[j], dtype=object)
            out[:, j] = col[rows[:, j]]
        return out

    def predict_column_proba(self, X, column: int) -> np.ndarray:
        """Conditional distribution of 1-based `column` given the other columns."""
        codes = self._encode_new(X)
        ds = Dataset(
            self.shape_,
            codes,
            [f"x{k}" for k in range(1, self.n_features_in_ + 1)],
            self.category_labels_,
        )
        return classify(self.model_, ds, column).probabilities

    def predict_column(self, X, column: int) -> np.ndarray:
        """Most likely category labels for `column` given the other columns."""
        probs = self.predict_column_proba(X, column)
        preds = np.argmax(probs, axis=1)
        labels = np.asarray(self.category_labels_[column - 1], dtype=object)
        return labels[preds]

    @property
    def interactions_(self):
        check_is_fitted(self, "model_")
        return [tuple(s.members) for s in self.model_.collection if len(s) > 0]


class MahgentaDensity(_CategoricalDensity):
    """Density estimator with greedy interaction selection and early stopping.

    Fitting splits the provided rows into an internal train/validation pair,
    grows the interaction collection by highest |J| score under weak
    heredity, and keeps the best-validation snapshot.

    Parameters mirror :class:`mahgenta.selection.SelectionConfig`;
    `validation_fraction` controls the internal holdout.
    """

    def __init__(self, tau=0.30, k=10, epochs_per_round=10, lr=0.50, max_order=4,
                 renormalize_score=True, error_mode="exact_kl",
                 validation_fraction=0.3, random_state=0):
        self.tau = tau
        self.k = k
        self.epochs_per_round = epochs_per_round
        self.lr = lr
        self.max_order = max_order
        self.renormalize_score = renormalize_score
        self.error_mode = error_mode
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y=None):
        ds = self._fit_encode(X)
        if not 0.0 < self.validation_fraction < 1.0:
            raise DomainError("validation_fraction must lie strictly between 0 and 1")
        n = ds.n
        if n < 5:
            raise DomainError(f"need at least 5 rows to fit, got {n}")
        rng = substream(self._seed(), "split")
        order = rng.permutation(n)
        n_train = int(math.floor((1.0 - self.validation_fraction) * n))
        n_train = min(max(n_train, 1), n - 1)
        tags = np.empty(n, dtype="<U5")
        tags[order[:n_train]] = "train"
        tags[order[n_train:]] = "val"
        tagged = Dataset(ds.shape, ds.rows.copy(), ds.column_names, ds.category_labels, tags)
        config = SelectionConfig(
            tau=self.tau,
            k=self.k,
            epochs_per_round=self.epochs_per_round,
            lr=self.lr,
            max_order=self.max_order,
            renormalize_score=self.renormalize_score,
            error_mode=self.error_mode,
        )
        self.model_, self.history_ = mahgenta_fit(
            tagged.subset("train"), tagged.subset("val"), config, seed=self._seed()
        )
        return self


class ManyBodyDensity(_CategoricalDensity):
    """Fixed-order log-linear density: all interactions up to `order`.

    Order 1 is the independent model, order 2 the pairwise (Boltzmann)
    model. Fitting runs gradient descent until the training marginals match
    within `tol` (or the epoch budget ends).
    """

    def __init__(self, order=2, tol=1e-4, max_epochs=20000, random_state=0):
        self.order = order
        self.tol = tol
        self.max_epochs = max_epochs
        self.random_state = random_state

    def fit(self, X, y=None):
        ds = self._fit_encode(X)
        if not 1 <= self.order <= ds.shape.d:
            raise DomainError(f"order must lie in 1..{ds.shape.d}, got {self.order}")
        collection = InteractionCollection.up_to_order(ds.shape.d, self.order)
        eta = empirical_eta(ds, collection)
        start = ThetaModel.zeros(ds.shape, collection)
        self.model_ = fit_to_tolerance(start, eta, tol=self.tol, max_epochs=self.max_epochs)
        return self
