"""Dense feature vectors for mention pairs.

Layout (embedding dim d, 50 by default):

    ant_words   5*d   first/head/last/previous/next word vectors, antecedent
    ana_words   5*d   same five slots for the anaphor
    distance    6     one-hot indicators for sentence distance 0..4,
                      then min(d, 50)/50 as the scaled actual distance
    pair_flags  3     exact span match, relaxed head match, same speaker
    similarity  4     cosine of (head, first, last, span-average) vectors

Tower vectors for the dual-encoder model keep one mention's own word
block plus the distance block and nothing about the other mention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Document, Mention, MentionPair, head_match
from .embeddings import EmbeddingTable, lookup
from .errors import ConfigError

WORD_SLOTS = ("first", "head", "last", "previous", "next")
SIMILARITY_SLOTS = ("head", "first", "last", "average")
DISTANCE_INDICATORS = 5
DISTANCE_CLIP = 50
PAIR_FLAG_COUNT = 3
SIMILARITY_COUNT = 4


@dataclass(frozen=True)
class FeatureSchema:
    """Named sections of the pair feature vector, derived from the embedding dim."""

    embedding_dim: int = 50

    @property
    def words_block(self) -> int:
        return len(WORD_SLOTS) * self.embedding_dim

    @property
    def distance_block_len(self) -> int:
        return DISTANCE_INDICATORS + 1

    @property
    def sections(self) -> dict[str, slice]:
        w, d = self.words_block, self.distance_block_len
        return {
            "ant_words": slice(0, w),
            "ana_words": slice(w, 2 * w),
            "distance": slice(2 * w, 2 * w + d),
            "pair_flags": slice(2 * w + d, 2 * w + d + PAIR_FLAG_COUNT),
            "similarity": slice(
                2 * w + d + PAIR_FLAG_COUNT, 2 * w + d + PAIR_FLAG_COUNT + SIMILARITY_COUNT
            ),
        }

    @property
    def total_dim(self) -> int:
        return 2 * self.words_block + self.distance_block_len + PAIR_FLAG_COUNT + SIMILARITY_COUNT

    @property
    def tower_dim(self) -> int:
        return self.words_block + self.distance_block_len

    @property
    def version(self) -> str:
        return f"pairfeat-v1:d{self.embedding_dim}"

    def tower_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Index arrays selecting each mention's tower input from the pair vector."""
        sec = self.sections
        dist = np.arange(sec["distance"].start, sec["distance"].stop)
        ant = np.concatenate([np.arange(sec["ant_words"].start, sec["ant_words"].stop), dist])
        ana = np.concatenate([np.arange(sec["ana_words"].start, sec["ana_words"].stop), dist])
        return ant.astype(np.int64), ana.astype(np.int64)

    @classmethod
    def from_total_dim(cls, total_dim: int) -> "FeatureSchema":
        fixed = DISTANCE_INDICATORS + 1 + PAIR_FLAG_COUNT + SIMILARITY_COUNT
        d, rem = divmod(total_dim - fixed, 2 * len(WORD_SLOTS))
        if rem != 0 or d < 1:
            raise ConfigError(f"total dim {total_dim} does not match the pair feature layout")
        return cls(embedding_dim=d)

    @classmethod
    def from_version(cls, version: str) -> "FeatureSchema":
        prefix = "pairfeat-v1:d"
        if not version.startswith(prefix):
            raise ConfigError(f"unknown feature schema version {version!r}")
        return cls(embedding_dim=int(version[len(prefix) :]))


@dataclass
class FeatureVector:
    """One featurized pair: values computed in float32, stored half-precision."""

    values: np.ndarray
    pair_id: str
    label: bool


def word_slots(m: Mention, doc: Document) -> tuple[str | None, ...]:
    """(first, head, last, previous, next); neighbors are None at sentence boundaries."""
    sent = doc.sentences[m.sentence_index]
    previous = sent[m.start - 1] if m.start > 0 else None
    nxt = sent[m.end + 1] if m.end + 1 < len(sent) else None
    return (sent[m.start], sent[m.head], sent[m.end], previous, nxt)


def distance_block(d: int) -> np.ndarray:
    """Five one-hot indicators for d in 0..4 plus min(d, 50)/50."""
    if d < 0:
        raise ValueError(f"sentence distance must be >= 0, got {d}")
    out = np.zeros(DISTANCE_INDICATORS + 1, dtype=np.float32)
    if d < DISTANCE_INDICATORS:
        out[d] = 1.0
    out[DISTANCE_INDICATORS] = min(d, DISTANCE_CLIP) / DISTANCE_CLIP
    return out


def pair_flags(a: Mention, b: Mention, doc: Document) -> np.ndarray:
    """(exact span match, relaxed head match, same speaker) as 0/1 values."""
    exact = doc.mention_text(a).casefold() == doc.mention_text(b).casefold()
    relaxed = head_match(a, b, doc, mode="relaxed")
    same_speaker = doc.speakers[a.sentence_index] == doc.speakers[b.sentence_index]
    return np.array([exact, relaxed, same_speaker], dtype=np.float32)


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.dot(u, u))
    nv = float(np.dot(v, v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    c = float(np.dot(u, v)) / float(np.sqrt(nu) * np.sqrt(nv))
    return min(1.0, max(-1.0, c))


def span_average(m: Mention, doc: Document, table: EmbeddingTable) -> np.ndarray:
    vecs = [lookup(table, t) for t in doc.mention_tokens(m)]
    return np.mean(vecs, axis=0, dtype=np.float32)


def similarity_features(
    a: Mention, b: Mention, doc: Document, table: EmbeddingTable
) -> np.ndarray:
    """Cosine similarities for (head, first, last, span-average); zero vectors give 0."""
    fa, ha, la, _, _ = word_slots(a, doc)
    fb, hb, lb, _, _ = word_slots(b, doc)
    sims = [
        _cosine(lookup(table, ha), lookup(table, hb)),
        _cosine(lookup(table, fa), lookup(table, fb)),
        _cosine(lookup(table, la), lookup(table, lb)),
        _cosine(span_average(a, doc, table), span_average(b, doc, table)),
    ]
    return np.array(sims, dtype=np.float32)


def _word_block(m: Mention, doc: Document, table: EmbeddingTable) -> np.ndarray:
    return np.concatenate([lookup(table, w) for w in word_slots(m, doc)]).astype(np.float32)


def featurize_pair(
    pair: MentionPair, doc: Document, table: EmbeddingTable, schema: FeatureSchema
) -> FeatureVector:
    """Assemble the full pair feature vector per the schema layout."""
    if table.dim != schema.embedding_dim:
        raise ConfigError(
            f"embedding dim {table.dim} does not match schema dim {schema.embedding_dim}"
        )
    sec = schema.sections
    x = np.zeros(schema.total_dim, dtype=np.float32)
    x[sec["ant_words"]] = _word_block(pair.antecedent, doc, table)
    x[sec["ana_words"]] = _word_block(pair.anaphor, doc, table)
    x[sec["distance"]] = distance_block(pair.sentence_distance)
    x[sec["pair_flags"]] = pair_flags(pair.antecedent, pair.anaphor, doc)
    x[sec["similarity"]] = similarity_features(pair.antecedent, pair.anaphor, doc, table)
    return FeatureVector(values=x, pair_id=pair.pair_id, label=pair.label)


def featurize_tower(
    m: Mention, distance: int, doc: Document, table: EmbeddingTable
) -> np.ndarray:
    """One mention's own words plus the distance block; nothing about the partner."""
    return np.concatenate([_word_block(m, doc, table), distance_block(distance)])


def featurize_pairs(
    pairs: Sequence[MentionPair],
    docs_by_id: dict[str, Document],
    table: EmbeddingTable,
    schema: FeatureSchema,
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Featurize a batch of pairs into (pair_ids, X, labels)."""
    ids: list[str] = []
    X = np.zeros((len(pairs), schema.total_dim), dtype=np.float32)
    y = np.zeros(len(pairs), dtype=bool)
    for i, p in enumerate(pairs):
        doc = docs_by_id.get(p.doc_id)
        if doc is None:
            raise ConfigError(f"pair {p.pair_id!r} references unknown doc {p.doc_id!r}")
        fv = featurize_pair(p, doc, table, schema)
        X[i] = fv.values
        y[i] = fv.label
        ids.append(fv.pair_id)
    return ids, X, y
