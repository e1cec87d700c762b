"""Scoring and evaluation protocols.

Token accuracy over aligned datasets, micro-averaged span F1 with the BIO
repair applied before span extraction, sweeps of the segment cost with
per-sentence work shared across grid points, and zero-shot evaluation
against a swapped database.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import Dataset, build_dataset, spans_from_bio
from .decoder import DEFAULT_MAX_SEGMENT_LEN, DPConfig, dp_decode_expected
from .tagging import (
    DECODE_DP,
    DECODE_MARGINAL,
    Tagger,
    predictions_dataset,
    tag_dataset,
)

SWEEP_HEADER = "c,precision,recall,f1,token_accuracy,avg_segments"


@dataclass(frozen=True)
class EvalReport:
    """Scores of one prediction run; span metrics are None when not requested."""

    token_accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None
    avg_segments: float | None
    skipped_tokens: int


@dataclass(frozen=True)
class SweepRow:
    segment_cost: float
    precision: float
    recall: float
    f1: float
    token_accuracy: float
    avg_segments: float


def _check_aligned(pred: Dataset, gold: Dataset) -> None:
    if len(pred.items) != len(gold.items):
        raise ValueError(
            f"prediction has {len(pred.items)} sentences, gold has {len(gold.items)}"
        )
    for p, g in zip(pred.items, gold.items):
        if p.sentence.uid != g.sentence.uid:
            raise ValueError(
                f"sentence id mismatch: {p.sentence.uid} vs {g.sentence.uid}"
            )
        if len(p) != len(g):
            raise ValueError(
                f"sentence {g.sentence.uid}: prediction has {len(p)} tokens, "
                f"gold has {len(g)}"
            )


def token_accuracy(pred: Dataset, gold: Dataset) -> float:
    """Fraction of positions whose label strings agree."""
    _check_aligned(pred, gold)
    matched = 0
    total = 0
    for p, g in zip(pred.items, gold.items):
        for pn, gn in zip(pred.label_names(p), gold.label_names(g)):
            matched += pn == gn
            total += 1
    if total == 0:
        raise ValueError("cannot score empty datasets")
    return matched / total


def span_f1(pred: Dataset, gold: Dataset) -> tuple[float, float, float]:
    """Micro-averaged precision, recall, and F1 over exact span matches.

    Spans are extracted with the BIO repair, so stray I- tags in the
    predictions are scored the way conlleval would score them.
    """
    _check_aligned(pred, gold)
    tp = fp = fn = 0
    for p, g in zip(pred.items, gold.items):
        pred_spans = set(spans_from_bio(pred.label_names(p)))
        gold_spans = set(spans_from_bio(gold.label_names(g)))
        tp += len(pred_spans & gold_spans)
        fp += len(pred_spans - gold_spans)
        fn += len(gold_spans - pred_spans)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _count_unreachable(db: Dataset, gold: Dataset) -> int:
    reachable = set(db.vocab.types)
    return sum(
        name not in reachable
        for item in gold.items
        for name in gold.label_names(item)
    )


def sweep_c(
    c_values: Sequence[float],
    provider,
    db: Dataset,
    data: Dataset,
    n_neighbors: int,
    max_len: int = DEFAULT_MAX_SEGMENT_LEN,
) -> list[SweepRow]:
    """Decode `data` against `db` at every segment cost in `c_values`.

    Retrieval, marginals, and the segment dictionary are computed once per
    sentence and shared across the grid.
    """
    if not c_values:
        raise ValueError("the c grid must be non-empty")
    if any(b <= a for a, b in zip(c_values, c_values[1:])):
        raise ValueError("the c grid must be strictly ascending")
    tagger = Tagger(provider, db, n_neighbors)
    prepared = []
    for item in data.items:
        analysis = tagger.analyze(item.sentence)
        prepared.append((analysis, tagger.segment_dict(analysis, max_len)))

    rows = []
    for c in c_values:
        cfg = DPConfig(segment_cost=float(c), max_len=max_len)
        tagged_rows = []
        n_segments = 0
        for analysis, seg_dict in prepared:
            result = dp_decode_expected(analysis.marginals, seg_dict, cfg)
            names = tuple(db.vocab.types[lab] for lab in result.labels)
            tagged_rows.append((analysis.sentence.tokens, names))
            n_segments += len(result.segments)
        pred = build_dataset(tagged_rows)
        precision, recall, f1 = span_f1(pred, data)
        rows.append(
            SweepRow(
                segment_cost=float(c),
                precision=precision,
                recall=recall,
                f1=f1,
                token_accuracy=token_accuracy(pred, data),
                avg_segments=n_segments / len(data.items),
            )
        )
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    lines = [SWEEP_HEADER]
    for row in rows:
        lines.append(
            f"{row.segment_cost:.4f},{row.precision:.4f},{row.recall:.4f},"
            f"{row.f1:.4f},{row.token_accuracy:.4f},{row.avg_segments:.4f}"
        )
    return "\n".join(lines) + "\n"


def zero_shot_eval(
    checkpoint_or_provider,
    new_db: Dataset,
    eval_data: Dataset,
    n_neighbors: int,
    spans: bool = False,
    decode: str = DECODE_MARGINAL,
    segment_cost: float = 0.4,
    max_len: int = DEFAULT_MAX_SEGMENT_LEN,
) -> EvalReport:
    """Tag `eval_data` against a database it was never trained on.

    No parameters are updated; the label inventory comes entirely from
    `new_db`. Accepts either a trained checkpoint or a bare provider.
    """
    provider = checkpoint_or_provider
    if hasattr(provider, "provider"):
        provider = provider.provider()
    if not new_db.items:
        raise ValueError("the new database is empty")
    tagged = tag_dataset(
        provider,
        new_db,
        eval_data,
        n_neighbors,
        decode=decode,
        segment_cost=segment_cost,
        max_len=max_len,
    )
    pred = predictions_dataset(tagged)
    accuracy = token_accuracy(pred, eval_data)
    precision = recall = f1 = None
    if spans:
        precision, recall, f1 = span_f1(pred, eval_data)
    avg_segments = None
    if decode == DECODE_DP:
        avg_segments = sum(len(t.decode.segments) for t in tagged) / len(tagged)
    return EvalReport(
        token_accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        avg_segments=avg_segments,
        skipped_tokens=_count_unreachable(new_db, eval_data),
    )
