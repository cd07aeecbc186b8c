"""Document model, candidate-pair enumeration and pair shards.

A corpus file is UTF-8 JSON Lines, one document per line::

    {"doc_id": "doc-0",
     "sentences": [["President", "Obama", "spoke", "."], ...],
     "speakers": ["speaker1", ...],
     "mentions": [{"sentence": 0, "start": 0, "end": 1, "head": 1,
                   "kind": "named", "entity": "e4"}, ...]}

Spans are inclusive token-index ranges within a single sentence, ``head``
is an absolute token index inside the span, ``speakers`` carries one
string per sentence, and ``entity`` is null for singleton mentions.
A golden example lives at ``tests/data/corpus_golden.jsonl``.

Pair shards are JSON Lines as well, one candidate pair per line with
fields ``doc_id``, ``ant``, ``ana`` (mention ids), ``label`` and ``dist``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

MENTION_KINDS = ("named", "pronominal", "nominal")
HEAD_MATCH_MODES = ("exact", "relaxed")


@dataclass(frozen=True)
class Token:
    """One token with its position inside the owning document."""

    text: str
    sentence_index: int
    token_index: int


@dataclass(frozen=True)
class Mention:
    """An annotated span referring to an entity; ``entity_id`` is None for singletons."""

    mention_id: str
    sentence_index: int
    start: int
    end: int
    head: int
    kind: str
    entity_id: str | None = None


@dataclass
class Document:
    doc_id: str
    sentences: list[list[str]]
    speakers: list[str]
    mentions: list[Mention] = field(default_factory=list)

    def token(self, sentence_index: int, token_index: int) -> Token:
        return Token(self.sentences[sentence_index][token_index], sentence_index, token_index)

    def mention_tokens(self, m: Mention) -> list[str]:
        return self.sentences[m.sentence_index][m.start : m.end + 1]

    def mention_text(self, m: Mention) -> str:
        return " ".join(self.mention_tokens(m))

    def head_text(self, m: Mention) -> str:
        return self.sentences[m.sentence_index][m.head]

    def mentions_by_id(self) -> dict[str, Mention]:
        return {m.mention_id: m for m in self.mentions}


@dataclass(frozen=True)
class MentionPair:
    """An ordered candidate pair; the antecedent precedes the anaphor."""

    doc_id: str
    antecedent: Mention
    anaphor: Mention
    label: bool
    sentence_distance: int

    @property
    def pair_id(self) -> str:
        return f"{self.doc_id}|{self.antecedent.mention_id}|{self.anaphor.mention_id}"


@dataclass(frozen=True)
class PairFilterConfig:
    """Subset selection for candidate pairs.

    Defaults keep only pairs whose anaphor is nominal and whose mentions
    share no (relaxed) head match.
    """

    require_nominal_anaphor: bool = True
    exclude_head_match: bool = True
    head_match_mode: str = "relaxed"

    @classmethod
    def disabled(cls) -> "PairFilterConfig":
        return cls(require_nominal_anaphor=False, exclude_head_match=False)


def validate_document(doc: Document) -> None:
    """Raise ValidationError if any structural invariant fails."""
    if len(doc.speakers) != len(doc.sentences):
        raise ValidationError(
            f"doc {doc.doc_id!r}: {len(doc.speakers)} speakers for {len(doc.sentences)} sentences"
        )
    for sent in doc.sentences:
        for tok in sent:
            if not tok:
                raise ValidationError(f"doc {doc.doc_id!r}: empty token")
    for m in doc.mentions:
        where = f"doc {doc.doc_id!r} mention {m.mention_id!r}"
        if m.kind not in MENTION_KINDS:
            raise ValidationError(f"{where}: unknown kind {m.kind!r}")
        if not 0 <= m.sentence_index < len(doc.sentences):
            raise ValidationError(f"{where}: sentence index {m.sentence_index} out of range")
        sent_len = len(doc.sentences[m.sentence_index])
        if not 0 <= m.start <= m.end < sent_len:
            raise ValidationError(
                f"{where}: span [{m.start}, {m.end}] outside sentence of length {sent_len}"
            )
        if not m.start <= m.head <= m.end:
            raise ValidationError(f"{where}: head {m.head} outside span [{m.start}, {m.end}]")


def _parse_mention(raw: dict, index: int) -> Mention:
    return Mention(
        mention_id=f"m{index}",
        sentence_index=int(raw["sentence"]),
        start=int(raw["start"]),
        end=int(raw["end"]),
        head=int(raw["head"]),
        kind=str(raw["kind"]),
        entity_id=None if raw.get("entity") is None else str(raw["entity"]),
    )


def load_corpus(path) -> list[Document]:
    """Parse a JSONL corpus file, validating every document."""
    docs: list[Document] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            try:
                doc = Document(
                    doc_id=str(raw["doc_id"]),
                    sentences=[[str(t) for t in sent] for sent in raw["sentences"]],
                    speakers=[str(s) for s in raw["speakers"]],
                    mentions=[_parse_mention(m, i) for i, m in enumerate(raw["mentions"])],
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, line_no, f"malformed document record: {exc!r}") from exc
            validate_document(doc)
            docs.append(doc)
    return docs


def write_corpus(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            record = {
                "doc_id": doc.doc_id,
                "sentences": doc.sentences,
                "speakers": doc.speakers,
                "mentions": [
                    {
                        "sentence": m.sentence_index,
                        "start": m.start,
                        "end": m.end,
                        "head": m.head,
                        "kind": m.kind,
                        "entity": m.entity_id,
                    }
                    for m in doc.mentions
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def head_match(a: Mention, b: Mention, doc: Document, mode: str = "relaxed") -> bool:
    """Case-insensitive head comparison between two mentions of one document.

    ``exact`` compares the two head token texts; ``relaxed`` also accepts
    either head occurring anywhere inside the other mention's span.
    """
    if mode not in HEAD_MATCH_MODES:
        raise ValueError(f"unknown head match mode {mode!r}")
    head_a = doc.head_text(a).casefold()
    head_b = doc.head_text(b).casefold()
    if mode == "exact":
        return head_a == head_b
    span_a = [t.casefold() for t in doc.mention_tokens(a)]
    span_b = [t.casefold() for t in doc.mention_tokens(b)]
    return head_a in span_b or head_b in span_a


def _document_order(mentions: Sequence[Mention]) -> list[Mention]:
    order = sorted(
        range(len(mentions)),
        key=lambda i: (mentions[i].sentence_index, mentions[i].start, mentions[i].end, i),
    )
    return [mentions[i] for i in order]


def enumerate_pairs(doc: Document, pair_filter: PairFilterConfig | None = None) -> list[MentionPair]:
    """All (earlier, later) mention combinations of ``doc`` passing the filter.

    With filtering disabled this yields exactly N*(N-1)/2 pairs for N
    mentions, in deterministic document order.
    """
    cfg = pair_filter if pair_filter is not None else PairFilterConfig()
    ordered = _document_order(doc.mentions)
    pairs: list[MentionPair] = []
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            ant, ana = ordered[i], ordered[j]
            if cfg.require_nominal_anaphor and ana.kind != "nominal":
                continue
            if cfg.exclude_head_match and head_match(ant, ana, doc, cfg.head_match_mode):
                continue
            label = ant.entity_id is not None and ant.entity_id == ana.entity_id
            pairs.append(
                MentionPair(
                    doc_id=doc.doc_id,
                    antecedent=ant,
                    anaphor=ana,
                    label=label,
                    sentence_distance=ana.sentence_index - ant.sentence_index,
                )
            )
    return pairs


def downsample(pairs: Sequence[MentionPair], negative_rate: float, seed: int) -> list[MentionPair]:
    """Keep every positive pair and each negative independently with ``negative_rate``.

    Order-preserving and reproducible: identical (input, rate, seed)
    yields the identical subsequence.
    """
    if not 0.0 < negative_rate <= 1.0:
        raise ValueError(f"negative_rate must be in (0, 1], got {negative_rate}")
    rng = np.random.default_rng(seed)
    return [p for p in pairs if p.label or rng.random() < negative_rate]


def downsampled_positive_rate(n_positive: int, n_negative: int, negative_rate: float) -> float:
    """Expected positive share after keeping negatives at ``negative_rate``."""
    return n_positive / (n_positive + negative_rate * n_negative)


def write_pair_shard(path, pairs: Iterable[MentionPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            record = {
                "doc_id": p.doc_id,
                "ant": p.antecedent.mention_id,
                "ana": p.anaphor.mention_id,
                "label": p.label,
                "dist": p.sentence_distance,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def shard_pairs(pairs: Sequence[MentionPair], k: int, out_dir, stem: str = "train") -> list[Path]:
    """Split pairs round-robin into k files named ``<stem>.<i>-of-<k>.pairs``."""
    if k < 1:
        raise ValueError(f"shard count must be >= 1, got {k}")
    out_dir = Path(out_dir)
    paths = []
    for i in range(k):
        path = out_dir / f"{stem}.{i}-of-{k}.pairs"
        write_pair_shard(path, pairs[i::k])
        paths.append(path)
    return paths


def build_doc_index(docs: Iterable[Document]) -> dict[str, Document]:
    index: dict[str, Document] = {}
    for doc in docs:
        if doc.doc_id in index:
            raise ValidationError(f"duplicate doc_id {doc.doc_id!r}")
        index[doc.doc_id] = doc
    return index


def read_pair_shard(path, docs_by_id: dict[str, Document]) -> list[MentionPair]:
    """Resolve a pair shard against loaded documents."""
    pairs: list[MentionPair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                doc_id, ant_id, ana_id = raw["doc_id"], raw["ant"], raw["ana"]
                label, dist = bool(raw["label"]), int(raw["dist"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, line_no, f"malformed pair record: {exc!r}") from exc
            doc = docs_by_id.get(doc_id)
            if doc is None:
                raise ValidationError(f"{path}:{line_no}: unknown doc_id {doc_id!r}")
            by_id = doc.mentions_by_id()
            try:
                ant, ana = by_id[ant_id], by_id[ana_id]
            except KeyError as exc:
                raise ValidationError(
                    f"{path}:{line_no}: unknown mention {exc.args[0]!r} in doc {doc_id!r}"
                ) from exc
            pairs.append(MentionPair(doc_id, ant, ana, label, dist))
    return pairs
