"""Dataset ingestion, splits, empirical marginals, synthesis, classification.

Every column of a dataset is categorical; codes are assigned by first
appearance and the original labels are kept for round-tripping. Missing
entries (``?`` or empty fields) become their own category labeled ``"?"`` so
row counts never silently change.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    InteractionCollection,
    ProbTensor,
    Shape,
    VarSubset,
    center_fibers_values,
    check_enum_cap,
)
from .errors import DomainError, ParseError
from .loglinear import ThetaModel, conditional_energies, model_distribution
from .seeding import substream

__all__ = [
    "Dataset",
    "load_csv",
    "split",
    "empirical_marginal",
    "EmpiricalMarginals",
    "empirical_eta",
    "entropy_of_rows",
    "SyntheticSpec",
    "synth_generate",
    "ClassificationResult",
    "classify",
    "SAMPLE_SIZE_SWEEP",
    "COMPLEXITY_PRESETS",
    "complexity_preset",
]

MISSING_LABEL = "?"

# Named sample-size sweep used by the synthetic experiments.
SAMPLE_SIZE_SWEEP = (10, 20, 40, 80, 160, 320, 640, 1280, 2560, 5120, 10240)

# Ground-truth interaction presets over a 4-variable, 5-category space.
_PRESET_SUBSETS = {
    "low": ((1,), (2,), (3,), (4,), (1, 2), (1, 4), (2, 3)),
    "med": ((1,), (2,), (3,), (4,), (1, 2), (1, 3), (1, 4), (2, 3), (1, 2, 3)),
    "high": (
        (1,), (2,), (3,), (4,),
        (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4),
        (1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4), (1, 2, 3, 4),
    ),
}
COMPLEXITY_PRESETS = {
    name: InteractionCollection.of(*subsets) for name, subsets in _PRESET_SUBSETS.items()
}
PRESET_SHAPE = Shape((5, 5, 5, 5))


def complexity_preset(name: str) -> tuple[Shape, InteractionCollection]:
    if name not in COMPLEXITY_PRESETS:
        raise DomainError(f"unknown complexity {name!r}; expected one of {sorted(COMPLEXITY_PRESETS)}")
    return PRESET_SHAPE, COMPLEXITY_PRESETS[name]


@dataclass
class Dataset:
    """An (n, d) matrix of category codes with label maps and optional split tags."""

    shape: Shape
    rows: np.ndarray
    column_names: list[str]
    category_labels: list[list[str]]
    split_tags: np.ndarray | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        if rows.ndim != 2 or rows.shape[1] != self.shape.d:
            raise DomainError(f"rows must be (n, {self.shape.d}), got {rows.shape}")
        if len(self.column_names) != self.shape.d:
            raise DomainError("one column name per variable is required")
        if len(self.category_labels) != self.shape.d:
            raise DomainError("one label list per variable is required")
        for k, (labels, card) in enumerate(zip(self.category_labels, self.shape), start=1):
            if len(labels) != card:
                raise DomainError(
                    f"column {k} has {len(labels)} labels but cardinality {card}"
                )
        if rows.size and (rows.min() < 0 or np.any(rows.max(axis=0) >= self.shape.cardinalities)):
            raise DomainError("a row contains a code outside its column's cardinality")
        if self.split_tags is not None:
            tags = np.asarray(self.split_tags)
            if tags.shape != (len(rows),):
                raise DomainError("split tags must assign one tag per row")
            self.split_tags = tags
        rows.flags.writeable = False
        self.rows = rows

    @property
    def n(self) -> int:
        return len(self.rows)

    def subset(self, tag: str) -> "Dataset":
        """Rows carrying `tag`; shape and label maps are inherited unchanged."""
        if self.split_tags is None:
            raise DomainError("dataset has no split tags; call split() first")
        mask = self.split_tags == tag
        return Dataset(
            self.shape,
            self.rows[mask].copy(),
            self.column_names,
            self.category_labels,
        )

    def labels_for_row(self, i: int) -> tuple[str, ...]:
        return tuple(
            self.category_labels[j][code] for j, code in enumerate(self.rows[i])
        )

    def column_index(self, name_or_index) -> int:
        """Resolve a 1-based index or column name to a 1-based index."""
        if isinstance(name_or_index, (int, np.integer)) or (
            isinstance(name_or_index, str) and name_or_index.isdigit()
        ):
            k = int(name_or_index)
            if not 1 <= k <= self.shape.d:
                raise DomainError(f"column index {k} out of range 1..{self.shape.d}")
            return k
        try:
            return self.column_names.index(name_or_index) + 1
        except ValueError:
            raise DomainError(f"unknown column {name_or_index!r}") from None


def load_csv(path, header: bool = True) -> Dataset:
    """Read a rectangular CSV of categorical columns.

    Codes follow first-appearance order per column; ``?`` and empty fields
    map to the missing-value category. A column with fewer than two
    categories cannot define a variable and raises.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ParseError(f"{path}: file is empty")
    names = rows[0] if header else None
    data = rows[1:] if header else rows
    if not data:
        raise ParseError(f"{path}: no data rows")
    width = len(data[0])
    for offset, row in enumerate(data):
        if len(row) != width:
            line_no = offset + 1 + (1 if header else 0)
            raise ParseError(
                f"{path}: line {line_no} has {len(row)} fields, expected {width}"
            )
    if names is None:
        names = [f"x{j + 1}" for j in range(width)]
    elif len(names) != width:
        raise ParseError(f"{path}: header has {len(names)} fields, data has {width}")
    labels: list[list[str]] = [[] for _ in range(width)]
    maps: list[dict[str, int]] = [{} for _ in range(width)]
    codes = np.empty((len(data), width), dtype=np.int64)
    for i, row in enumerate(data):
        for j, raw in enumerate(row):
            value = raw.strip()
            if value == "" or value == MISSING_LABEL:
                value = MISSING_LABEL
            code = maps[j].get(value)
            if code is None:
                code = len(labels[j])
                maps[j][value] = code
                labels[j].append(value)
            codes[i, j] = code
    for j, col_labels in enumerate(labels):
        if len(col_labels) < 2:
            raise DomainError(
                f"{path}: column {names[j]!r} has a single category and cannot define a variable"
            )
    shape = Shape(tuple(len(col) for col in labels))
    return Dataset(shape, codes, list(names), labels)


def split(ds: Dataset, seed: int = 0) -> Dataset:
    """Tag rows: half test, then 70/30 of the remainder into train/val.

    Counts are ``floor(n/2)`` test and ``floor(0.7 * remaining)`` train, the
    rest validation; the assignment is a seeded permutation, identical for
    identical seeds.
    """
    n = ds.n
    if n < 10:
        raise DomainError(f"need at least 10 rows to split, got {n}")
    rng = substream(seed, "split")
    order = rng.permutation(n)
    n_test = n // 2
    remaining = n - n_test
    n_train = int(math.floor(0.7 * remaining))
    tags = np.empty(n, dtype="<U5")
    tags[order[:n_test]] = "test"
    tags[order[n_test:n_test + n_train]] = "train"
    tags[order[n_test + n_train:]] = "val"
    return Dataset(ds.shape, ds.rows.copy(), ds.column_names, ds.category_labels, tags)


def _marginal_counts(rows: np.ndarray, shape: Shape, s: VarSubset) -> np.ndarray:
    cards = shape.restrict(s)
    flat = np.ravel_multi_index(tuple(rows[:, k - 1] for k in s), cards)
    return np.bincount(flat, minlength=math.prod(cards)).reshape(cards).astype(np.float64)


def empirical_marginal(ds: Dataset, s: VarSubset, smoothing: float = 0.0) -> ProbTensor:
    """Smoothed empirical frequency tensor of the dataset's projection onto `s`."""
    if smoothing < 0:
        raise DomainError("smoothing must be non-negative")
    if ds.n == 0:
        raise DomainError("cannot take marginals of an empty dataset")
    if len(s) == 0:
        return ProbTensor(s, np.asarray(1.0))
    counts = _marginal_counts(ds.rows, ds.shape, s)
    denom = ds.n + smoothing * counts.size
    return ProbTensor(s, (counts + smoothing) / denom)


class EmpiricalMarginals:
    """Cached marginal provider over a fixed set of rows (smoothing 0)."""

    def __init__(self, rows: np.ndarray, shape: Shape):
        rows = np.asarray(rows, dtype=np.int64)
        if len(rows) == 0:
            raise DomainError("cannot take marginals of an empty dataset")
        self.rows = rows
        self.shape = shape
        self._cache: dict[VarSubset, ProbTensor] = {}

    def marginal(self, s: VarSubset) -> ProbTensor:
        hit = self._cache.get(s)
        if hit is None:
            if len(s) == 0:
                hit = ProbTensor(s, np.asarray(1.0))
            else:
                hit = ProbTensor(s, _marginal_counts(self.rows, self.shape, s) / len(self.rows))
            self._cache[s] = hit
        return hit


def empirical_eta(ds: Dataset, collection: InteractionCollection,
                  smoothing: float = 0.0) -> dict[VarSubset, np.ndarray]:
    """Training marginals for every non-empty subset of a collection."""
    return {s: empirical_marginal(ds, s, smoothing).values for s in collection.nonempty()}


def entropy_of_rows(rows: np.ndarray) -> float:
    """Plug-in entropy (nats) of the empirical distribution of the rows."""
    rows = np.asarray(rows)
    if len(rows) == 0:
        raise DomainError("cannot take the entropy of an empty dataset")
    _, counts = np.unique(rows, axis=0, return_counts=True)
    freq = counts / len(rows)
    return float(-(freq * np.log(freq)).sum())


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a ground-truth distribution with known interaction structure."""

    shape: Shape
    true_collection: InteractionCollection
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.true_collection.is_hierarchical():
            raise DomainError("the ground-truth collection must be hierarchical")
        if self.sigma < 0:
            raise DomainError("sigma must be non-negative")


def synth_generate(spec: SyntheticSpec, n: int) -> tuple[ProbTensor, Dataset]:
    """Draw a random model on the given structure and sample `n` rows from it.

    Gaussian tensors are drawn per interaction (deterministically ordered),
    centered to the zero-fiber-sum gauge, exponentiated and normalized;
    everything outside the collection stays zero.
    """
    check_enum_cap(spec.shape.n_events(), "synthetic generation")
    if n < 0:
        raise DomainError("sample count must be non-negative")
    rng_theta = substream(spec.seed, "synth-theta")
    params = {}
    for s in sorted(spec.true_collection.nonempty(), key=VarSubset.sort_key):
        draw = rng_theta.normal(0.0, spec.sigma, size=spec.shape.restrict(s))
        params[s] = center_fibers_values(draw)
    model = ThetaModel(spec.shape, spec.true_collection, params)
    truth = model_distribution(model)
    rng_rows = substream(spec.seed, "synth-rows")
    flat = truth.values.reshape(-1)
    picks = rng_rows.choice(flat.size, size=n, p=flat) if n else np.zeros(0, dtype=np.int64)
    codes = np.stack(np.unravel_index(picks, spec.shape.cardinalities), axis=1)
    ds = Dataset(
        spec.shape,
        codes.astype(np.int64),
        [f"x{k}" for k in range(1, spec.shape.d + 1)],
        [[str(v) for v in range(c)] for c in spec.shape],
    )
    return truth, ds


@dataclass
class ClassificationResult:
    target: int
    accuracy: float
    predictions: np.ndarray          # (n,) predicted codes
    probabilities: np.ndarray        # (n, I_target) conditional distributions
    truth: np.ndarray                # (n,) observed codes


def classify(model: ThetaModel, ds: Dataset, target) -> ClassificationResult:
    """Predict one column from all others via the model conditional.

    The conditional softmax needs no partition function. Ties resolve to the
    lowest code.
    """
    k = ds.column_index(target)
    if ds.shape != model.shape:
        raise DomainError("dataset and model shapes differ")
    energies = conditional_energies(model, ds.rows, k)
    energies -= energies.max(axis=1, keepdims=True)
    probs = np.exp(energies)
    probs /= probs.sum(axis=1, keepdims=True)
    preds = np.argmax(probs, axis=1)
    truth = ds.rows[:, k - 1]
    accuracy = float((preds == truth).mean()) if ds.n else 0.0
    return ClassificationResult(
        target=k, accuracy=accuracy, predictions=preds, probabilities=probs, truth=truth
    )
