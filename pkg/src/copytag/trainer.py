"""Fine-tuning of the hashed-window embedder.

Each training sentence retrieves neighbors from an index built once with
the initial parameters; the loss is the negative log of the copy posterior
mass on gold-typed neighbor tokens. Gradients flow only into the input
sentence's embeddings (neighbor embeddings are recomputed from the current
parameters but treated as constants) and reach the weights through the
sparse tanh backward pass. Updates use bias-corrected Adam on exactly the
columns with nonzero gradient.

Checkpoints are line-oriented text: config as key=value pairs, then one
line per modified weight column; unmodified columns are regenerated from
the seed at load time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .copy_model import copy_logits, copy_posterior, grad_wrt_input, nll
from .corpus import Dataset
from .embeddings import EmbedderParams, HashedWindowEmbedder, _embed_columns
from .evaluation import token_accuracy
from .retrieval import assemble_neighbor_set, build_index, query
from .tagging import Tagger, predictions_dataset

REFRESH_PER_BATCH = "per-batch"
REFRESH_PER_EPOCH = "per-epoch"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = "#copytag-ckpt v1"


class CheckpointError(ValueError):
    """Unreadable or truncated checkpoint text."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-3
    batch_size: int = 16
    epochs: int = 5
    train_neighbors: int = 50
    test_neighbors: int = 100
    seed: int = 0
    refresh: str = REFRESH_PER_BATCH
    exclude_self: bool = True

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.train_neighbors < 1 or self.test_neighbors < 1:
            raise ValueError("neighbor counts must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.refresh not in (REFRESH_PER_BATCH, REFRESH_PER_EPOCH):
            raise ValueError(f"unknown refresh policy {self.refresh!r}")


@dataclass(eq=False)
class AdamState:
    """First/second moment vectors per touched column and one step counter."""

    step: int = 0

    def __post_init__(self) -> None:
        self.mean: dict[int, np.ndarray] = {}
        self.var: dict[int, np.ndarray] = {}


def adam_update(
    params: EmbedderParams,
    grads: dict[int, np.ndarray],
    state: AdamState,
    learning_rate: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> None:
    """One bias-corrected Adam step over the columns with nonzero gradient.

    The step counter advances exactly once per call, also when every
    gradient is zero and nothing moves.
    """
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for col in sorted(grads):
        grad = np.asarray(grads[col], dtype=float)
        if not np.all(np.isfinite(grad)):
            raise ValueError(f"non-finite gradient for column {col}")
        if not grad.any():
            continue
        mean = state.mean.get(col)
        if mean is None:
            mean = np.zeros(params.dim)
            var = np.zeros(params.dim)
        else:
            var = state.var[col]
        mean = beta1 * mean + (1.0 - beta1) * grad
        var = beta2 * var + (1.0 - beta2) * grad * grad
        state.mean[col] = mean
        state.var[col] = var
        step = learning_rate * (mean / correction1) / (
            np.sqrt(var / correction2) + eps
        )
        params.set_column(col, params.column(col) - step)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_nll: float
    skipped_tokens: int
    dev_accuracy: float | None


@dataclass(eq=False)
class Checkpoint:
    """A parameter snapshot with the config and per-epoch training log."""

    params: EmbedderParams
    config: TrainConfig
    log: tuple[EpochStats, ...]

    def provider(self) -> HashedWindowEmbedder:
        return HashedWindowEmbedder(self.params)


def _batches(order: np.ndarray, batch_size: int) -> Iterable[list[int]]:
    for lo in range(0, len(order), batch_size):
        yield [int(i) for i in order[lo : lo + batch_size]]


def _cached_neighbor_set(dataset, ids, provider, cache):
    # Neighbor token embeddings are recomputed under the current parameters,
    # once per refresh window; they never receive gradient.
    entries = []
    from .retrieval import NeighborEntry, NeighborSet

    for sid in ids:
        matrix = cache.get(sid)
        if matrix is None:
            matrix = provider.embed(dataset.items[sid].sentence)
            cache[sid] = matrix
        entries.append(NeighborEntry(dataset.items[sid], matrix))
    return NeighborSet.from_entries(entries)


def _dev_accuracy(provider, train: Dataset, dev: Dataset, config: TrainConfig) -> float:
    tagger = Tagger(provider, train, config.test_neighbors)
    tagged = [tagger.tag(item.sentence) for item in dev.items]
    return token_accuracy(predictions_dataset(tagged), dev)


def fine_tune(
    config: TrainConfig,
    train: Dataset,
    dev: Dataset | None = None,
    provider: HashedWindowEmbedder | None = None,
) -> Checkpoint:
    """Fine-tune the provider's parameters on `train`.

    The retrieval index is built once from the initial parameters, so the
    neighbor lists are fixed for the whole run; with exclude_self a
    sentence never retrieves itself. Shuffling is seeded, gradients within
    a batch accumulate in ascending sentence order, and one optimizer step
    is applied per batch. With epochs=0 the returned checkpoint holds the
    initial parameters and an empty log.
    """
    if provider is None:
        provider = HashedWindowEmbedder()
    if not getattr(provider, "trainable", False):
        raise ValueError("provider is not trainable")
    if len(train.vocab) == 0 or not train.items:
        raise ValueError("training data is empty")
    params = provider.params

    index = build_index(train, provider)
    neighbor_ids: dict[int, tuple[int, ...]] = {}
    for row, sid in enumerate(index.ids):
        exclude = (sid,) if config.exclude_self else ()
        ranked = query(index, index.vectors[row], config.train_neighbors, exclude)
        if not ranked:
            raise ValueError(
                "retrieval found no training neighbors; the dataset is too small "
                "for exclude_self"
            )
        neighbor_ids[sid] = tuple(sid2 for sid2, _ in ranked)

    rng = np.random.default_rng(config.seed)
    state = AdamState()
    log: list[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train.items))
        epoch_cache: dict[int, np.ndarray] = {}
        total_nll = 0.0
        total_skipped = 0
        for batch in _batches(order, config.batch_size):
            cache = epoch_cache if config.refresh == REFRESH_PER_EPOCH else {}
            grads: dict[int, np.ndarray] = {}
            for sid in sorted(batch):
                item = train.items[sid]
                neighbors = _cached_neighbor_set(
                    train, neighbor_ids[sid], provider, cache
                )
                cols = provider.token_columns(item.sentence)
                embeddings = _embed_columns(params, cols)
                posterior = copy_posterior(copy_logits(embeddings, neighbors))
                report = nll(posterior, neighbors, item.labels)
                total_nll += report.nll
                total_skipped += report.skipped
                d_input = grad_wrt_input(posterior, neighbors, item.labels)
                for col, vec in provider.backprop(item.sentence, d_input).items():
                    acc = grads.get(col)
                    if acc is None:
                        grads[col] = vec
                    else:
                        acc += vec
            adam_update(params, grads, state, config.learning_rate)
        dev_acc = _dev_accuracy(provider, train, dev, config) if dev is not None else None
        log.append(
            EpochStats(
                epoch=epoch,
                train_nll=total_nll / len(train.items),
                skipped_tokens=total_skipped,
                dev_accuracy=dev_acc,
            )
        )
    return Checkpoint(params.copy(), config, tuple(log))


def _format_float(value: float) -> str:
    return repr(float(value))


def save_checkpoint(checkpoint: Checkpoint) -> str:
    """Serialize to the line format load_checkpoint reads back.

    Column values use shortest round-trip decimals, so a save/load cycle
    reproduces the parameters bit for bit.
    """
    params = checkpoint.params
    cfg = checkpoint.config
    lines = [
        CHECKPOINT_MAGIC,
        f"dim={params.dim}",
        f"buckets={params.n_buckets}",
        f"window={params.window}",
        f"embed_seed={params.seed}",
        f"learning_rate={_format_float(cfg.learning_rate)}",
        f"batch_size={cfg.batch_size}",
        f"epochs={cfg.epochs}",
        f"train_neighbors={cfg.train_neighbors}",
        f"test_neighbors={cfg.test_neighbors}",
        f"seed={cfg.seed}",
        f"refresh={cfg.refresh}",
        f"exclude_self={'true' if cfg.exclude_self else 'false'}",
    ]
    for entry in checkpoint.log:
        prefix = f"log.{entry.epoch}"
        lines.append(f"{prefix}.train_nll={_format_float(entry.train_nll)}")
        lines.append(f"{prefix}.skipped={entry.skipped_tokens}")
        if entry.dev_accuracy is not None:
            lines.append(f"{prefix}.dev_accuracy={_format_float(entry.dev_accuracy)}")
    lines.append(f"#params {params.dim} {params.n_buckets}")
    for col in sorted(params.modified):
        values = " ".join(_format_float(v) for v in params.column(col))
        lines.append(f"col {col} {values}")
    return "\n".join(lines) + "\n"


def load_checkpoint(text: str) -> Checkpoint:
    lines = text.splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(
            f"expected checkpoint magic {CHECKPOINT_MAGIC!r}, "
            f"got {lines[0]!r}" if lines else "empty checkpoint"
        )
    pairs: dict[str, str] = {}
    cursor = 1
    while cursor < len(lines) and not lines[cursor].startswith("#params"):
        line = lines[cursor]
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"bad config line {line!r}")
        pairs[key] = value
        cursor += 1
    if cursor == len(lines):
        raise CheckpointError("truncated checkpoint: missing #params section")
    header = lines[cursor].split()
    if len(header) != 3:
        raise CheckpointError(f"bad #params line {lines[cursor]!r}")

    try:
        params = EmbedderParams(
            dim=int(pairs["dim"]),
            n_buckets=int(pairs["buckets"]),
            window=int(pairs["window"]),
            seed=int(pairs["embed_seed"]),
        )
        config = TrainConfig(
            learning_rate=float(pairs["learning_rate"]),
            batch_size=int(pairs["batch_size"]),
            epochs=int(pairs["epochs"]),
            train_neighbors=int(pairs["train_neighbors"]),
            test_neighbors=int(pairs["test_neighbors"]),
            seed=int(pairs["seed"]),
            refresh=pairs["refresh"],
            exclude_self=pairs["exclude_self"] == "true",
        )
    except KeyError as exc:
        raise CheckpointError(f"missing config key {exc.args[0]}") from None
    if int(header[1]) != params.dim or int(header[2]) != params.n_buckets:
        raise CheckpointError("#params line disagrees with the config lines")

    stats: dict[int, dict[str, str]] = {}
    for key, value in pairs.items():
        if not key.startswith("log."):
            continue
        _, epoch_str, field = key.split(".", 2)
        stats.setdefault(int(epoch_str), {})[field] = value
    log = tuple(
        EpochStats(
            epoch=epoch,
            train_nll=float(fields["train_nll"]),
            skipped_tokens=int(fields["skipped"]),
            dev_accuracy=(
                float(fields["dev_accuracy"]) if "dev_accuracy" in fields else None
            ),
        )
        for epoch, fields in sorted(stats.items())
    )

    for line in lines[cursor + 1 :]:
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] != "col":
            raise CheckpointError(f"unexpected line in parameter section: {line!r}")
        if len(parts) != params.dim + 2:
            raise CheckpointError(
                f"column line has {len(parts) - 2} values, expected {params.dim}"
            )
        params.set_column(int(parts[1]), np.array([float(v) for v in parts[2:]]))
    return Checkpoint(params, config, log)


def with_neighbors(config: TrainConfig, n_neighbors: int) -> TrainConfig:
    """Convenience: the same config with both neighbor counts replaced."""
    return replace(config, train_neighbors=n_neighbors, test_neighbors=n_neighbors)
