"""Sequence labeling by retrieving similar sentences and copying their labels.

A sentence is embedded with a trainable hashed window embedder, its nearest
labeled neighbors are fetched from a database, and a copy distribution over
every neighbor token yields per-token label marginals. Prediction is either
the marginal argmax or an exact dynamic program that charges a fixed cost
per copied segment.
"""

__version__ = "0.1.0"

from .copy_model import (
    CopyPosterior,
    LossReport,
    MarginalMatrix,
    copy_logits,
    copy_posterior,
    grad_wrt_input,
    marginal_over_types,
    nll,
)
from .corpus import (
    CorpusError,
    Dataset,
    LabeledSequence,
    LabelVocab,
    Sentence,
    Span,
    bio_from_spans,
    build_dataset,
    parse_conll,
    relabel,
    spans_from_bio,
    write_conll,
)
from .decoder import (
    DecodeResult,
    DPConfig,
    Segment,
    SegmentDict,
    brute_force_decode,
    build_segment_dict,
    dp_decode_expected,
    dp_reconstruct,
    greedy_reconstruct,
    predict_marginal,
    provenance_lines,
)
from .embeddings import (
    EmbedderParams,
    HashedWindowEmbedder,
    PrecomputedEmbeddings,
    PrecomputedStore,
    SidecarError,
    embed_sentence,
    embed_tokens,
    load_precomputed,
    save_precomputed,
)
from .evaluation import (
    EvalReport,
    SweepRow,
    span_f1,
    sweep_c,
    sweep_csv,
    token_accuracy,
    zero_shot_eval,
)
from .retrieval import (
    NeighborIndex,
    NeighborSet,
    assemble_neighbor_set,
    build_index,
    cosine,
    load_index,
    query,
    save_index,
)
from .synthetic import coarse_view, suffix_corpus, toy_ner_corpus
from .tagging import TaggedSentence, Tagger, predictions_dataset, tag_dataset
from .trainer import (
    AdamState,
    Checkpoint,
    CheckpointError,
    EpochStats,
    TrainConfig,
    adam_update,
    fine_tune,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "__version__",
    "AdamState",
    "Checkpoint",
    "CheckpointError",
    "CopyPosterior",
    "CorpusError",
    "Dataset",
    "DecodeResult",
    "DPConfig",
    "EmbedderParams",
    "EpochStats",
    "EvalReport",
    "HashedWindowEmbedder",
    "LabelVocab",
    "LabeledSequence",
    "LossReport",
    "MarginalMatrix",
    "NeighborIndex",
    "NeighborSet",
    "PrecomputedEmbeddings",
    "PrecomputedStore",
    "Segment",
    "SegmentDict",
    "Sentence",
    "SidecarError",
    "Span",
    "SweepRow",
    "TaggedSentence",
    "Tagger",
    "TrainConfig",
    "adam_update",
    "assemble_neighbor_set",
    "bio_from_spans",
    "brute_force_decode",
    "build_dataset",
    "build_index",
    "build_segment_dict",
    "coarse_view",
    "copy_logits",
    "copy_posterior",
    "cosine",
    "dp_decode_expected",
    "dp_reconstruct",
    "embed_sentence",
    "embed_tokens",
    "fine_tune",
    "grad_wrt_input",
    "greedy_reconstruct",
    "load_checkpoint",
    "load_index",
    "load_precomputed",
    "marginal_over_types",
    "nll",
    "parse_conll",
    "predict_marginal",
    "predictions_dataset",
    "provenance_lines",
    "query",
    "relabel",
    "save_checkpoint",
    "save_index",
    "save_precomputed",
    "span_f1",
    "spans_from_bio",
    "suffix_corpus",
    "sweep_c",
    "sweep_csv",
    "tag_dataset",
    "toy_ner_corpus",
    "token_accuracy",
    "write_conll",
    "zero_shot_eval",
]
