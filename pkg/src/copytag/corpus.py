"""CoNLL-style corpus handling.

Parsing and serialization of whitespace-columned token/tag files, label
vocabularies with first-appearance ids, and conversion between BIO tag
sequences and typed spans (including the usual repair of stray I- tags).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

DOCSTART = "-DOCSTART-"
PAD_COLUMN = "_"


class CorpusError(ValueError):
    """Malformed corpus input: bad column counts, bad BIO tags, and so on."""


@dataclass(frozen=True)
class Sentence:
    """A tokenized sentence with a dataset-unique integer id."""

    uid: int
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.uid < 0:
            raise CorpusError(f"sentence id must be non-negative, got {self.uid}")
        if not self.tokens:
            raise CorpusError("a sentence must contain at least one token")
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise CorpusError(f"token {tok!r} is empty or contains whitespace")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class LabelVocab:
    """Distinct label-type strings; the tuple position is the type id."""

    types: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.types)) != len(self.types):
            raise CorpusError("label types must be distinct")

    @cached_property
    def _index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.types)}

    def __len__(self) -> int:
        return len(self.types)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def id_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise CorpusError(f"unknown label type {name!r}") from None

    def name_of(self, type_id: int) -> str:
        if not 0 <= type_id < len(self.types):
            raise CorpusError(f"label id {type_id} out of range")
        return self.types[type_id]

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelVocab":
        """Vocabulary over `labels` with ids in first-appearance order."""
        return cls(tuple(dict.fromkeys(labels)))


@dataclass(frozen=True)
class LabeledSequence:
    """A sentence paired with one label id per token."""

    sentence: Sentence
    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.sentence.tokens):
            raise CorpusError(
                f"sentence {self.sentence.uid}: {len(self.sentence.tokens)} tokens "
                f"but {len(self.labels)} labels"
            )
        if any(lab < 0 for lab in self.labels):
            raise CorpusError("label ids must be non-negative")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of labeled sentences sharing one vocabulary.

    Sentence ids are dense: item k has uid k.
    """

    items: tuple[LabeledSequence, ...]
    vocab: LabelVocab

    def __post_init__(self) -> None:
        for pos, item in enumerate(self.items):
            if item.sentence.uid != pos:
                raise CorpusError(
                    f"sentence ids must be dense, expected {pos} "
                    f"got {item.sentence.uid}"
                )
            for lab in item.labels:
                if lab >= len(self.vocab):
                    raise CorpusError(
                        f"sentence {pos}: label id {lab} outside vocabulary "
                        f"of size {len(self.vocab)}"
                    )

    def __len__(self) -> int:
        return len(self.items)

    def label_names(self, item: LabeledSequence) -> tuple[str, ...]:
        return tuple(self.vocab.types[lab] for lab in item.labels)


@dataclass(frozen=True, order=True)
class Span:
    """A typed span over token positions, end-exclusive."""

    start: int
    end: int
    label: str

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise CorpusError(f"bad span bounds [{self.start}, {self.end})")


def build_dataset(rows: Iterable[tuple[Sequence[str], Sequence[str]]]) -> Dataset:
    """Assemble a Dataset from (tokens, tag strings) pairs.

    The vocabulary is built in first-appearance order over all tags.
    """
    rows = list(rows)
    vocab = LabelVocab.from_labels(tag for _, tags in rows for tag in tags)
    items = []
    for uid, (tokens, tags) in enumerate(rows):
        if len(tokens) != len(tags):
            raise CorpusError(f"row {uid}: {len(tokens)} tokens, {len(tags)} tags")
        sent = Sentence(uid, tuple(tokens))
        items.append(LabeledSequence(sent, tuple(vocab.id_of(t) for t in tags)))
    return Dataset(tuple(items), vocab)


def parse_conll(text: str, token_col: int = 0, tag_col: int = -1) -> Dataset:
    """Parse CoNLL-style text into a Dataset.

    Sentences are separated by blank lines; columns by runs of whitespace.
    Lines whose first column is -DOCSTART- are dropped. tag_col -1 selects
    the last column of each line.
    """
    if token_col < 0:
        raise ValueError("token_col must be non-negative")
    if tag_col < -1:
        raise ValueError("tag_col must be -1 or non-negative")
    # tag_col -1 needs one column after the token, so the last column is a tag
    required = token_col + 2 if tag_col == -1 else max(token_col, tag_col) + 1

    rows: list[tuple[list[str], list[str]]] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush() -> None:
        if tokens:
            rows.append((tokens.copy(), tags.copy()))
            tokens.clear()
            tags.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        cols = line.split()
        if not cols:
            flush()
            continue
        if cols[0] == DOCSTART:
            continue
        if len(cols) < required:
            raise CorpusError(
                f"line {lineno}: expected at least {required} columns, "
                f"found {len(cols)}"
            )
        tokens.append(cols[token_col])
        tags.append(cols[tag_col])
    flush()
    if not rows:
        raise CorpusError("no sentences found")
    return build_dataset(rows)


def write_conll(dataset: Dataset, token_col: int = 0, tag_col: int = -1) -> str:
    """Serialize a Dataset in the layout parse_conll reads back.

    Columns are separated by exactly one space, unused columns hold "_",
    and every sentence (including the last) is followed by a blank line.
    """
    if token_col < 0:
        raise ValueError("token_col must be non-negative")
    tag_pos = token_col + 1 if tag_col == -1 else tag_col
    if tag_pos == token_col:
        raise ValueError("token and tag columns must differ")
    width = max(token_col, tag_pos) + 1

    lines: list[str] = []
    for item in dataset.items:
        for tok, name in zip(item.sentence.tokens, dataset.label_names(item)):
            if not name or any(ch.isspace() for ch in name):
                raise CorpusError(f"label {name!r} cannot be serialized")
            cols = [PAD_COLUMN] * width
            cols[token_col] = tok
            cols[tag_pos] = name
            lines.append(" ".join(cols))
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def spans_from_bio(labels: Sequence[str]) -> tuple[Span, ...]:
    """Extract typed spans from a BIO tag sequence.

    A stray I-X (after O, at the start, or after a different type) opens a
    new span, the same repair conlleval applies before scoring.
    """
    spans: list[Span] = []
    open_start: int | None = None
    open_label = ""

    def close(end: int) -> None:
        nonlocal open_start
        if open_start is not None:
            spans.append(Span(open_start, end, open_label))
            open_start = None

    for i, tag in enumerate(labels):
        if tag == "O":
            close(i)
            continue
        if len(tag) < 2 or tag[0] not in "BI" or tag[1] != "-":
            raise CorpusError(f"malformed BIO label {tag!r} at position {i}")
        label = tag[2:]
        if tag[0] == "B" or open_start is None or label != open_label:
            close(i)
            open_start = i
            open_label = label
    close(len(labels))
    return tuple(spans)


def bio_from_spans(spans: Iterable[Span], length: int) -> tuple[str, ...]:
    """Render spans as a BIO tag sequence of the given length.

    Spans must lie within bounds and must not overlap; uncovered positions
    become O.
    """
    if length < 0:
        raise ValueError("length must be non-negative")
    ordered = sorted(spans)
    prev_end = 0
    for span in ordered:
        if span.end > length:
            raise CorpusError(f"span {span} exceeds sequence length {length}")
        if span.start < prev_end:
            raise CorpusError(f"span {span} overlaps a previous span")
        prev_end = span.end
    tags = ["O"] * length
    for span in ordered:
        tags[span.start] = f"B-{span.label}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.label}"
    return tuple(tags)


def relabel(dataset: Dataset, mapping: Mapping[str, str]) -> Dataset:
    """Rename label types through a bijection; ids and items are unchanged."""
    missing = [t for t in dataset.vocab.types if t not in mapping]
    if missing:
        raise CorpusError(f"mapping does not cover label types {missing}")
    renamed = tuple(mapping[t] for t in dataset.vocab.types)
    if len(set(renamed)) != len(renamed):
        raise CorpusError("mapping must be a bijection on label types")
    return Dataset(dataset.items, LabelVocab(renamed))
