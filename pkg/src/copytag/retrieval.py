"""Nearest-neighbor retrieval over sentence vectors.

Sentences are represented by the L2-normalized mean of their token
embeddings; queries are exact cosine scans with deterministic tie-breaking
by ascending sentence id. Retrieved sentences are flattened into a single
database of label tokens for the copy model.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .corpus import Dataset, LabeledSequence
from .embeddings import embed_sentence

ZERO_NORM = 1e-12


@dataclass(frozen=True, eq=False)
class NeighborIndex:
    """One vector per database sentence, unit norm unless flagged zero."""

    ids: tuple[int, ...]
    vectors: np.ndarray
    provider_tag: str
    zero_norm_ids: frozenset[int]

    def __len__(self) -> int:
        return len(self.ids)


def build_index(dataset: Dataset, provider) -> NeighborIndex:
    """Embed and mean-pool every sentence, normalizing to unit length.

    Zero-norm sentence vectors are stored as-is and flagged rather than
    normalized.
    """
    if not dataset.items:
        raise ValueError("cannot build an index over an empty dataset")
    vectors = np.zeros((len(dataset.items), provider.dim))
    zero_ids = []
    for row, item in enumerate(dataset.items):
        matrix = provider.embed(item.sentence)
        if matrix.shape[1] != provider.dim:
            raise ValueError(
                f"provider returned width {matrix.shape[1]}, expected {provider.dim}"
            )
        vec = embed_sentence(matrix)
        norm = float(np.linalg.norm(vec))
        if norm < ZERO_NORM:
            zero_ids.append(item.sentence.uid)
            vectors[row] = vec
        else:
            vectors[row] = vec / norm
    vectors.setflags(write=False)
    return NeighborIndex(
        ids=tuple(item.sentence.uid for item in dataset.items),
        vectors=vectors,
        provider_tag=provider.tag,
        zero_norm_ids=frozenset(zero_ids),
    )


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; zero whenever either vector has negligible norm."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"vectors must share one dimension, got {u.shape} and {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu < ZERO_NORM or nv < ZERO_NORM:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def query(
    index: NeighborIndex,
    query_vec: np.ndarray,
    count: int,
    exclude_ids: Iterable[int] = (),
) -> list[tuple[int, float]]:
    """Top `count` sentences by cosine, ties broken by ascending id.

    The scan is exact and brute force. Excluded ids are removed before the
    cut; fewer than `count` survivors (or an empty index after exclusion)
    yields a shorter, possibly empty, result.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    q = np.asarray(query_vec, dtype=float)
    if q.shape != (index.vectors.shape[1],):
        raise ValueError(
            f"query vector has shape {q.shape}, index dimension is "
            f"{index.vectors.shape[1]}"
        )
    norm = float(np.linalg.norm(q))
    if norm < ZERO_NORM:
        scores = np.zeros(len(index.ids))
    else:
        scores = index.vectors @ (q / norm)
    ids = np.asarray(index.ids, dtype=np.int64)
    order = np.lexsort((ids, -scores))
    excluded = set(exclude_ids)
    out: list[tuple[int, float]] = []
    for row in order:
        sid = int(ids[row])
        if sid in excluded:
            continue
        out.append((sid, float(scores[row])))
        if len(out) == count:
            break
    return out


@dataclass(frozen=True, eq=False)
class NeighborEntry:
    """One retrieved sentence with its labels and token embeddings."""

    sequence: LabeledSequence
    embeddings: np.ndarray


@dataclass(eq=False)
class NeighborSet:
    """Retrieved sentences flattened into one database of label tokens.

    flat position i maps back to (entry m, token k) through `origin`;
    flat_labels[i] and flat_embeddings[i] describe that token.
    """

    entries: tuple[NeighborEntry, ...]
    flat_labels: np.ndarray
    flat_embeddings: np.ndarray
    origin: tuple[tuple[int, int], ...]

    @classmethod
    def from_entries(cls, entries: Sequence[NeighborEntry]) -> "NeighborSet":
        if not entries:
            raise ValueError("neighbor set must contain at least one entry")
        labels: list[int] = []
        origin: list[tuple[int, int]] = []
        for m, entry in enumerate(entries):
            if entry.embeddings.shape[0] != len(entry.sequence):
                raise ValueError(
                    f"entry {m}: {entry.embeddings.shape[0]} embedding rows for "
                    f"{len(entry.sequence)} tokens"
                )
            labels.extend(entry.sequence.labels)
            origin.extend((m, k) for k in range(len(entry.sequence)))
        flat_labels = np.asarray(labels, dtype=np.int64)
        flat_embeddings = np.vstack([e.embeddings for e in entries])
        flat_labels.setflags(write=False)
        flat_embeddings.setflags(write=False)
        return cls(tuple(entries), flat_labels, flat_embeddings, tuple(origin))

    @property
    def n_total(self) -> int:
        return int(self.flat_labels.shape[0])

    @cached_property
    def types_present(self) -> tuple[int, ...]:
        """Distinct label type ids in first-appearance order."""
        return tuple(dict.fromkeys(int(lab) for lab in self.flat_labels))


def assemble_neighbor_set(dataset: Dataset, ids: Sequence[int], provider) -> NeighborSet:
    """Materialize the retrieved sentences, embedding each with `provider`."""
    entries = []
    for sid in ids:
        if not 0 <= sid < len(dataset.items):
            raise ValueError(f"unknown sentence id {sid}")
        item = dataset.items[sid]
        matrix = np.asarray(provider.embed(item.sentence), dtype=float)
        entries.append(NeighborEntry(item, matrix))
    return NeighborSet.from_entries(entries)


INDEX_MAGIC = "#nnindex v1"


def save_index(index: NeighborIndex) -> str:
    """One header line, then one "<id> <v1> ... <vD>" row per sentence."""
    dim = index.vectors.shape[1]
    lines = [f"{INDEX_MAGIC} dim {dim} provider {index.provider_tag}"]
    for sid, row in zip(index.ids, index.vectors):
        lines.append(str(sid) + " " + " ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def load_index(text: str) -> NeighborIndex:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty index file")
    head = lines[0].split()
    if (
        len(head) != 6
        or " ".join(head[:2]) != INDEX_MAGIC
        or head[2] != "dim"
        or head[4] != "provider"
    ):
        raise ValueError(f"bad index header {lines[0]!r}")
    dim = int(head[3])
    tag = head[5]
    ids: list[int] = []
    rows: list[list[float]] = []
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != dim + 1:
            raise ValueError(f"index row has {len(parts) - 1} values, expected {dim}")
        ids.append(int(parts[0]))
        rows.append([float(v) for v in parts[1:]])
    vectors = np.array(rows, dtype=float).reshape(len(ids), dim)
    vectors.setflags(write=False)
    zero = frozenset(
        sid for sid, row in zip(ids, vectors) if float(np.linalg.norm(row)) < ZERO_NORM
    )
    return NeighborIndex(tuple(ids), vectors, tag, zero)
