"""Per-token contextual embeddings.

The trainable provider is a hashed-feature window embedder: every token in
a +/-window neighborhood contributes offset-prefixed string features (word
identity, character n-grams, a word-shape code), each feature is hashed
into one of n_buckets weight columns, and the token embedding is the tanh
of the active-column sum. Columns of the weight matrix are generated on
demand from the seed, so only columns an optimizer actually changed need
to be stored in checkpoints.

A second provider serves externally precomputed embeddings from a plain
text sidecar file keyed by sentence id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Sentence

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF

INIT_STD = 0.1
NGRAM_SIZES = (2, 3, 4)

DEFAULT_DIM = 128
DEFAULT_BUCKETS = 2**18
DEFAULT_WINDOW = 2


class SidecarError(ValueError):
    """Malformed precomputed-embedding sidecar text."""


def fnv1a64(text: str, seed: int = 0) -> int:
    """Seeded 64-bit FNV-1a over the UTF-8 bytes of `text`."""
    h = (FNV_OFFSET ^ seed) & _U64
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _U64
    return h


def word_shape(token: str) -> str:
    """Collapsed character-class code, e.g. "McDonald" -> "XxXx"."""
    out: list[str] = []
    for ch in token:
        if ch.isupper():
            cls = "X"
        elif ch.islower():
            cls = "x"
        elif ch.isdigit():
            cls = "d"
        else:
            cls = "o"
        if not out or out[-1] != cls:
            out.append(cls)
    return "".join(out)


def _surface_features(token: str) -> list[str]:
    # Features of one surface form, before offset prefixing: lowercased
    # identity, boundary-padded character n-grams, and the shape code.
    low = token.lower()
    feats = [f"w|{low}", f"s|{word_shape(token)}"]
    padded = f"^{low}$"
    for n in NGRAM_SIZES:
        for i in range(len(padded) - n + 1):
            feats.append(f"g|{padded[i:i + n]}")
    return feats


@dataclass(frozen=True)
class FeatureSet:
    """Hashed feature bucket ids active for one token position."""

    indices: frozenset[int]

    def sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.indices))


def token_features(
    sentence: Sentence,
    position: int,
    window: int = DEFAULT_WINDOW,
    n_buckets: int = DEFAULT_BUCKETS,
    seed: int = 0,
) -> FeatureSet:
    """Bucket ids for the token at `position`, including window context.

    Each neighboring token within `window` contributes its features with
    the signed offset prefixed before hashing, so the same word at offset
    -1 and offset +1 lands in different buckets.
    """
    if not 0 <= position < len(sentence):
        raise ValueError(f"position {position} outside sentence of length {len(sentence)}")
    if window < 0:
        raise ValueError("window must be non-negative")
    if n_buckets < 1:
        raise ValueError("n_buckets must be positive")
    indices: set[int] = set()
    for offset in range(-window, window + 1):
        j = position + offset
        if not 0 <= j < len(sentence):
            continue
        for feat in _surface_features(sentence.tokens[j]):
            indices.add(fnv1a64(f"{offset}|{feat}", seed) % n_buckets)
    return FeatureSet(frozenset(indices))


class EmbedderParams:
    """Weights of the hashed-window embedder.

    Conceptually a dim x n_buckets matrix; physically only the columns that
    have ever been read or written are materialized, each generated from
    default_rng([seed, column]) as Gaussian(0, INIT_STD) on first touch.
    `modified` records columns an optimizer overwrote, which is exactly the
    set a checkpoint has to carry.
    """

    def __init__(
        self,
        dim: int = DEFAULT_DIM,
        n_buckets: int = DEFAULT_BUCKETS,
        window: int = DEFAULT_WINDOW,
        seed: int = 0,
    ):
        if dim < 1:
            raise ValueError("dim must be positive")
        if n_buckets < 1:
            raise ValueError("n_buckets must be positive")
        if window < 0:
            raise ValueError("window must be non-negative")
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.dim = dim
        self.n_buckets = n_buckets
        self.window = window
        self.seed = seed
        self.modified: set[int] = set()
        self.revision = 0
        self._store = np.zeros((0, dim))
        self._used = 0
        self._slot: dict[int, int] = {}

    def _seeded_column(self, col: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, col])
        return rng.normal(0.0, INIT_STD, self.dim)

    def _ensure_capacity(self, needed: int) -> None:
        if needed <= self._store.shape[0]:
            return
        cap = max(64, 2 * self._store.shape[0], needed)
        grown = np.zeros((cap, self.dim))
        grown[: self._used] = self._store[: self._used]
        self._store = grown

    def _slot_of(self, col: int) -> int:
        slot = self._slot.get(col)
        if slot is None:
            if not 0 <= col < self.n_buckets:
                raise ValueError(f"column {col} outside [0, {self.n_buckets})")
            self._ensure_capacity(self._used + 1)
            slot = self._used
            self._store[slot] = self._seeded_column(col)
            self._slot[col] = slot
            self._used += 1
        return slot

    def slots_for(self, cols: Iterable[int]) -> np.ndarray:
        """Storage rows for the given columns, materializing as needed."""
        slot_of = self._slot_of
        return np.fromiter((slot_of(int(c)) for c in cols), dtype=np.int64)

    def column(self, col: int) -> np.ndarray:
        # resolve the slot first: it may grow and rebind _store
        slot = self._slot_of(col)
        return self._store[slot].copy()

    def set_column(self, col: int, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.dim,):
            raise ValueError(f"column values must have shape ({self.dim},)")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite values for column {col}")
        slot = self._slot_of(col)
        self._store[slot] = values
        self.modified.add(col)
        self.revision += 1

    @property
    def storage(self) -> np.ndarray:
        """Raw materialized rows; index with slots_for results."""
        return self._store

    def copy(self) -> "EmbedderParams":
        dup = EmbedderParams(self.dim, self.n_buckets, self.window, self.seed)
        dup._store = self._store[: self._used].copy()
        dup._used = self._used
        dup._slot = dict(self._slot)
        dup.modified = set(self.modified)
        dup.revision = self.revision
        return dup


def _token_columns(params: EmbedderParams, sentence: Sentence) -> list[np.ndarray]:
    # Sorted bucket ids per token; sorting fixes the summation order so the
    # cached provider path and the plain functional path agree bit for bit.
    return [
        np.fromiter(
            sorted(
                token_features(
                    sentence, t, params.window, params.n_buckets, params.seed
                ).indices
            ),
            dtype=np.int64,
        )
        for t in range(len(sentence))
    ]


def _embed_columns(params: EmbedderParams, per_token_cols: list[np.ndarray]) -> np.ndarray:
    counts = [len(c) for c in per_token_cols]
    all_cols = np.concatenate(per_token_cols)
    slots = params.slots_for(all_cols)  # may grow the store; index afterwards
    rows = params.storage[slots]
    bounds = np.zeros(len(counts), dtype=np.int64)
    np.cumsum(counts[:-1], out=bounds[1:])
    return np.tanh(np.add.reduceat(rows, bounds, axis=0))


def embed_tokens(params: EmbedderParams, sentence: Sentence) -> np.ndarray:
    """T x dim matrix of token embeddings, rows tanh-bounded in (-1, 1)."""
    return _embed_columns(params, _token_columns(params, sentence))


def embed_sentence(token_matrix: np.ndarray) -> np.ndarray:
    """Mean-pool token rows into one sentence vector."""
    matrix = np.asarray(token_matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise ValueError("token matrix must be 2-d with at least one row")
    return matrix.mean(axis=0)


def backprop_embedder(
    params: EmbedderParams,
    sentence: Sentence,
    d_output: np.ndarray,
    per_token_cols: list[np.ndarray] | None = None,
) -> dict[int, np.ndarray]:
    """Columnwise loss gradient given d(loss)/d(token embeddings).

    Each active bucket of token t receives d_output[t] * (1 - x_t^2), the
    tanh backward pass; inactive buckets are absent from the result and
    therefore exactly zero.
    """
    if per_token_cols is None:
        per_token_cols = _token_columns(params, sentence)
    d_output = np.asarray(d_output, dtype=float)
    if d_output.shape != (len(sentence), params.dim):
        raise ValueError(
            f"d_output must have shape ({len(sentence)}, {params.dim}), "
            f"got {d_output.shape}"
        )
    if not np.all(np.isfinite(d_output)):
        raise ValueError("d_output contains non-finite entries")
    x = _embed_columns(params, per_token_cols)
    per_token = d_output * (1.0 - x * x)
    counts = [len(c) for c in per_token_cols]
    all_cols = np.concatenate(per_token_cols)
    spread = np.repeat(per_token, counts, axis=0)
    uniq, inverse = np.unique(all_cols, return_inverse=True)
    grad = np.zeros((uniq.size, params.dim))
    np.add.at(grad, inverse, spread)
    return {int(col): grad[i].copy() for i, col in enumerate(uniq)}


class HashedWindowEmbedder:
    """Trainable embedding provider over EmbedderParams.

    Caches the sorted bucket ids per distinct token tuple; cached ids stay
    valid across parameter updates because hashing does not depend on the
    weights.
    """

    trainable = True

    def __init__(self, params: EmbedderParams | None = None, **kwargs):
        self.params = params if params is not None else EmbedderParams(**kwargs)
        self._column_cache: dict[tuple[str, ...], list[np.ndarray]] = {}

    @property
    def dim(self) -> int:
        return self.params.dim

    @property
    def tag(self) -> str:
        p = self.params
        return f"hashed:d{p.dim}:b{p.n_buckets}:w{p.window}:s{p.seed}:r{p.revision}"

    def token_columns(self, sentence: Sentence) -> list[np.ndarray]:
        cached = self._column_cache.get(sentence.tokens)
        if cached is None:
            cached = _token_columns(self.params, sentence)
            # materialize now so cached slot lookups stay cheap later
            self.params.slots_for(np.concatenate(cached))
            self._column_cache[sentence.tokens] = cached
        return cached

    def embed(self, sentence: Sentence) -> np.ndarray:
        return _embed_columns(self.params, self.token_columns(sentence))

    def backprop(self, sentence: Sentence, d_output: np.ndarray) -> dict[int, np.ndarray]:
        return backprop_embedder(
            self.params, sentence, d_output, per_token_cols=self.token_columns(sentence)
        )


@dataclass(eq=False)
class PrecomputedStore:
    """Embeddings loaded from a sidecar file, keyed by sentence id."""

    dim: int
    blocks: dict[int, tuple[tuple[str, ...], np.ndarray]]

    def __len__(self) -> int:
        return len(self.blocks)


def load_precomputed(text: str) -> PrecomputedStore:
    """Parse sidecar text: "#dim D", then blank-separated "#id" blocks."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#dim "):
        raise SidecarError("sidecar must start with a '#dim <D>' line")
    try:
        dim = int(lines[0][5:])
    except ValueError:
        raise SidecarError(f"bad dimension line {lines[0]!r}") from None
    if dim < 1:
        raise SidecarError("dimension must be positive")

    blocks: dict[int, tuple[tuple[str, ...], np.ndarray]] = {}
    block: list[str] = []

    def flush() -> None:
        if not block:
            return
        header = block[0]
        if not header.startswith("#id "):
            raise SidecarError(f"block must start with '#id', got {header!r}")
        try:
            uid = int(header[4:])
        except ValueError:
            raise SidecarError(f"bad sentence id in {header!r}") from None
        if uid in blocks:
            raise SidecarError(f"duplicate sentence id {uid}")
        if len(block) < 2:
            raise SidecarError(f"sentence {uid} has no token rows")
        tokens: list[str] = []
        rows: list[list[float]] = []
        for line in block[1:]:
            tok, sep, rest = line.partition("\t")
            if not sep:
                raise SidecarError(f"sentence {uid}: row {line!r} lacks a tab")
            values = rest.split()
            if len(values) != dim:
                raise SidecarError(
                    f"sentence {uid}: expected {dim} values, found {len(values)}"
                )
            tokens.append(tok)
            rows.append([float(v) for v in values])
        blocks[uid] = (tuple(tokens), np.array(rows, dtype=float))
        block.clear()

    for line in lines[1:]:
        if line.strip():
            block.append(line)
        else:
            flush()
    flush()
    return PrecomputedStore(dim, blocks)


def save_precomputed(store: PrecomputedStore) -> str:
    """Serialize a store in the format load_precomputed reads back.

    Floats are written with shortest round-trip decimals, so loading the
    output reproduces bit-identical matrices.
    """
    lines = [f"#dim {store.dim}"]
    for uid in sorted(store.blocks):
        tokens, matrix = store.blocks[uid]
        if matrix.shape != (len(tokens), store.dim):
            raise SidecarError(
                f"sentence {uid}: matrix shape {matrix.shape} does not match "
                f"{len(tokens)} tokens x dim {store.dim}"
            )
        lines.append("")
        lines.append(f"#id {uid}")
        for tok, row in zip(tokens, matrix):
            lines.append(tok + "\t" + " ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


class PrecomputedEmbeddings:
    """Read-only provider backed by a PrecomputedStore."""

    trainable = False

    def __init__(self, store: PrecomputedStore):
        self.store = store

    @property
    def dim(self) -> int:
        return self.store.dim

    @property
    def tag(self) -> str:
        return f"precomputed:d{self.store.dim}:n{len(self.store)}"

    def embed(self, sentence: Sentence) -> np.ndarray:
        entry = self.store.blocks.get(sentence.uid)
        if entry is None:
            raise SidecarError(f"no precomputed embeddings for sentence {sentence.uid}")
        tokens, matrix = entry
        if len(tokens) != len(sentence):
            raise SidecarError(
                f"sentence {sentence.uid}: store has {len(tokens)} rows, "
                f"sentence has {len(sentence)} tokens"
            )
        if tokens != sentence.tokens:
            raise SidecarError(
                f"sentence {sentence.uid}: stored tokens differ from sentence tokens"
            )
        return matrix
