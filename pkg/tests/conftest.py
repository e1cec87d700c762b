"""Shared builders for randomized test instances."""

import numpy as np
import pytest

from copytag.copy_model import MarginalMatrix
from copytag.corpus import LabeledSequence, Sentence
from copytag.retrieval import NeighborEntry, NeighborSet


def make_neighbor_set(
    rng: np.random.Generator,
    n_neighbors: int = 3,
    max_len: int = 5,
    n_types: int = 4,
    dim: int = 6,
) -> NeighborSet:
    """Random labeled neighbor sentences with random token embeddings."""
    entries = []
    for m in range(n_neighbors):
        length = int(rng.integers(1, max_len + 1))
        tokens = tuple(f"n{m}t{k}" for k in range(length))
        labels = tuple(int(v) for v in rng.integers(0, n_types, size=length))
        embeddings = rng.normal(size=(length, dim))
        entries.append(
            NeighborEntry(LabeledSequence(Sentence(m, tokens), labels), embeddings)
        )
    return NeighborSet.from_entries(entries)


def labels_only_set(label_rows) -> NeighborSet:
    """NeighborSet from bare label sequences; embeddings are placeholders."""
    entries = []
    for m, labels in enumerate(label_rows):
        tokens = tuple(f"t{m}_{k}" for k in range(len(labels)))
        entries.append(
            NeighborEntry(
                LabeledSequence(Sentence(m, tokens), tuple(labels)),
                np.zeros((len(labels), 2)),
            )
        )
    return NeighborSet.from_entries(entries)


def make_marginals(
    rng: np.random.Generator, n_tokens: int, neighbors: NeighborSet
) -> MarginalMatrix:
    """Random strictly positive rows normalized over the present types."""
    type_ids = neighbors.types_present
    raw = rng.uniform(0.05, 1.0, size=(n_tokens, len(type_ids)))
    probs = raw / raw.sum(axis=1, keepdims=True)
    return MarginalMatrix(probs=probs, type_ids=type_ids)


def make_gold(
    rng: np.random.Generator, n_tokens: int, n_types: int
) -> tuple[int, ...]:
    return tuple(int(v) for v in rng.integers(0, n_types, size=n_tokens))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240816)
