"""End-to-end tagging of input sentences against a labeled database.

A Tagger owns the retrieval index over the database; per sentence it
retrieves neighbors, forms the copy posterior and type marginals, and
decodes either by per-token marginal argmax or by the segment dynamic
program. Swapping the database swaps the output label inventory with it,
which is all zero-shot transfer requires.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .copy_model import (
    CopyPosterior,
    MarginalMatrix,
    copy_logits,
    copy_posterior,
    marginal_over_types,
)
from .corpus import Dataset, Sentence, build_dataset
from .decoder import (
    DEFAULT_MAX_SEGMENT_LEN,
    DecodeResult,
    DPConfig,
    SegmentDict,
    build_segment_dict,
    dp_decode_expected,
    predict_marginal,
)
from .embeddings import embed_sentence
from .retrieval import NeighborSet, assemble_neighbor_set, build_index, query

DECODE_MARGINAL = "marginal"
DECODE_DP = "dp"


@dataclass(eq=False)
class SentenceAnalysis:
    """Everything derived for one input sentence before decoding."""

    sentence: Sentence
    neighbors: NeighborSet
    posterior: CopyPosterior
    marginals: MarginalMatrix


@dataclass(eq=False)
class TaggedSentence:
    sentence: Sentence
    label_names: tuple[str, ...]
    label_ids: tuple[int, ...]
    decode: DecodeResult | None
    analysis: SentenceAnalysis


class Tagger:
    """Retrieval plus decoding against a fixed labeled database."""

    def __init__(self, provider, db: Dataset, n_neighbors: int):
        if n_neighbors < 1:
            raise ValueError("n_neighbors must be at least 1")
        self.provider = provider
        self.db = db
        self.n_neighbors = n_neighbors
        self.index = build_index(db, provider)

    def analyze(self, sentence: Sentence, exclude_id: int | None = None) -> SentenceAnalysis:
        embeddings = self.provider.embed(sentence)
        ranked = query(
            self.index,
            embed_sentence(embeddings),
            self.n_neighbors,
            exclude_ids=() if exclude_id is None else (exclude_id,),
        )
        if not ranked:
            raise ValueError("retrieval returned no neighbors")
        neighbors = assemble_neighbor_set(
            self.db, [sid for sid, _ in ranked], self.provider
        )
        posterior = copy_posterior(copy_logits(embeddings, neighbors))
        marginals = marginal_over_types(posterior, neighbors)
        return SentenceAnalysis(sentence, neighbors, posterior, marginals)

    def segment_dict(self, analysis: SentenceAnalysis, max_len: int) -> SegmentDict:
        return build_segment_dict(analysis.neighbors, max_len)

    def tag(
        self,
        sentence: Sentence,
        decode: str = DECODE_MARGINAL,
        segment_cost: float = 0.4,
        max_len: int = DEFAULT_MAX_SEGMENT_LEN,
        exclude_id: int | None = None,
    ) -> TaggedSentence:
        analysis = self.analyze(sentence, exclude_id=exclude_id)
        if decode == DECODE_MARGINAL:
            label_ids = predict_marginal(analysis.marginals)
            result = None
        elif decode == DECODE_DP:
            seg_dict = self.segment_dict(analysis, max_len)
            cfg = DPConfig(segment_cost=segment_cost, max_len=max_len)
            result = dp_decode_expected(analysis.marginals, seg_dict, cfg)
            label_ids = result.labels
        else:
            raise ValueError(f"unknown decode mode {decode!r}")
        names = tuple(self.db.vocab.types[lab] for lab in label_ids)
        return TaggedSentence(sentence, names, label_ids, result, analysis)


def tag_dataset(
    provider,
    db: Dataset,
    inputs: Dataset,
    n_neighbors: int,
    decode: str = DECODE_MARGINAL,
    segment_cost: float = 0.4,
    max_len: int = DEFAULT_MAX_SEGMENT_LEN,
) -> list[TaggedSentence]:
    """Tag every sentence of `inputs` against `db`; gold labels are ignored."""
    tagger = Tagger(provider, db, n_neighbors)
    return [
        tagger.tag(item.sentence, decode=decode, segment_cost=segment_cost, max_len=max_len)
        for item in inputs.items
    ]


def predictions_dataset(tagged: Sequence[TaggedSentence]) -> Dataset:
    """Collect tagged sentences into a Dataset with a fresh vocabulary."""
    return build_dataset((t.sentence.tokens, t.label_names) for t in tagged)
