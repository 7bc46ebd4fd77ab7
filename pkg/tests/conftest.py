"""Shared fixtures: canonical distributions and helpers used across the suite."""

import os

import numpy as np
import pytest

from mahgenta.core import (
    InteractionCollection,
    ProbTensor,
    Shape,
    VarSubset,
    center_fibers_values,
)
from mahgenta.loglinear import ThetaModel


def xor_values() -> np.ndarray:
    """Mass 1/4 on each (a, b, a xor b) triple of three binary variables."""
    vals = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            vals[a, b, a ^ b] = 0.25
    return vals


@pytest.fixture
def xor_dist() -> ProbTensor:
    return ProbTensor(VarSubset.of(1, 2, 3), xor_values())


@pytest.fixture
def correlated_pair() -> ProbTensor:
    """Two perfectly correlated fair bits."""
    return ProbTensor(VarSubset.of(1, 2), np.array([[0.5, 0.0], [0.0, 0.5]]))


def random_distribution(rng: np.random.Generator, cards: tuple[int, ...]) -> ProbTensor:
    n = int(np.prod(cards))
    vals = rng.dirichlet(np.ones(n)).reshape(cards)
    return ProbTensor(VarSubset(tuple(range(1, len(cards) + 1))), vals)


def random_model(
    rng: np.random.Generator,
    shape: Shape,
    collection: InteractionCollection,
    scale: float = 1.0,
) -> ThetaModel:
    params = {
        s: center_fibers_values(rng.normal(0.0, scale, shape.restrict(s)))
        for s in collection.nonempty()
    }
    return ThetaModel(shape, collection, params)


def fork_distribution(noise_b: float = 0.2, noise_c: float = 0.3) -> ProbTensor:
    """A -> B and A -> C: B, C are noisy copies of a fair bit A."""
    p = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            for c in range(2):
                pb = 1 - noise_b if b == a else noise_b
                pc = 1 - noise_c if c == a else noise_c
                p[a, b, c] = 0.5 * pb * pc
    return ProbTensor(VarSubset.of(1, 2, 3), p)


def uci_path(filename: str) -> str | None:
    """Locate a real-data file; None when it is not provided."""
    base = os.environ.get("MAHGENTA_DATA_DIR", os.path.join(os.path.dirname(__file__), "..", "data"))
    candidate = os.path.join(base, filename)
    return candidate if os.path.exists(candidate) else None


def require_uci(filename: str) -> str:
    path = uci_path(filename)
    if path is None:
        pytest.skip(
            f"real-data file {filename!r} not found; place it under ./data or "
            "point MAHGENTA_DATA_DIR at a directory containing it"
        )
    return path
