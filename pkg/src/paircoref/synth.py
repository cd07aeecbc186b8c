"""Synthetic corpora whose coreference signal lives in head-word embeddings.

The vocabulary is organized into synonym groups: words of one group get
nearby embedding vectors, words of different groups are near-orthogonal.
Each entity draws its mention head words from a single group (without
repeating a word, so no pair has a head match), which makes gold
clusters detectable from embedding similarity.  Noise knobs degrade the
signal: ``head_noise_rate`` swaps a mention's head into a random other
group, and ``confusable_rate`` gives singleton mentions heads from a
group some entity already uses, creating high-similarity negatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document, Mention
from .embeddings import EmbeddingTable
from .errors import ConfigError

DETERMINER = "the"
SPEAKERS = ("spkA", "spkB")


@dataclass(frozen=True)
class SynthSpec:
    n_documents: int = 60
    sentences_per_doc: int = 12
    tokens_per_sentence: int = 10
    entities_per_doc: int = 8
    mentions_per_entity: tuple[int, int] = (2, 3)
    singletons_per_doc: int = 8
    n_groups: int = 40
    words_per_group: int = 6
    n_filler_words: int = 300
    embedding_dim: int = 50
    group_noise: float = 0.35
    head_noise_rate: float = 0.0
    confusable_rate: float = 0.0

    def validate(self) -> None:
        if min(self.n_documents, self.sentences_per_doc, self.tokens_per_sentence) < 0:
            raise ConfigError("sizes must be non-negative")
        if self.tokens_per_sentence < 2:
            raise ConfigError("sentences need room for two-token mentions")
        if self.entities_per_doc > self.n_groups:
            raise ConfigError("more entities per doc than synonym groups")
        if self.mentions_per_entity[1] > self.words_per_group:
            raise ConfigError("an entity cannot use more mentions than its group has words")
        slots = self.sentences_per_doc * (self.tokens_per_sentence // 2)
        needed = self.entities_per_doc * self.mentions_per_entity[1] + self.singletons_per_doc
        if needed > slots:
            raise ConfigError(f"need {needed} mention slots but only {slots} fit")


def group_word(group: int, index: int) -> str:
    return f"g{group}w{index}"


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def synth_embeddings(spec: SynthSpec, seed: int) -> EmbeddingTable:
    """Embedding table for the synthetic vocabulary; deterministic per seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    table = EmbeddingTable(dim=spec.embedding_dim)
    for g in range(spec.n_groups):
        center = _unit(rng, spec.embedding_dim)
        for w in range(spec.words_per_group):
            v = center + spec.group_noise * _unit(rng, spec.embedding_dim)
            table.entries[group_word(g, w)] = (v / np.linalg.norm(v)).astype(np.float32)
    for i in range(spec.n_filler_words):
        table.entries[f"f{i}"] = _unit(rng, spec.embedding_dim)
    table.entries[DETERMINER] = _unit(rng, spec.embedding_dim)
    return table


def _place_mention(
    doc: Document, slot: tuple[int, int], word: str, mention_id: str, entity_id: str | None
) -> Mention:
    si, start = slot
    doc.sentences[si][start] = DETERMINER
    doc.sentences[si][start + 1] = word
    return Mention(
        mention_id=mention_id,
        sentence_index=si,
        start=start,
        end=start + 1,
        head=start + 1,
        kind="nominal",
        entity_id=entity_id,
    )


def synth_corpus(spec: SynthSpec, seed: int) -> list[Document]:
    """Generate documents with group-structured gold clusters; deterministic per seed."""
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    docs: list[Document] = []
    for d in range(spec.n_documents):
        sentences = [
            [f"f{rng.integers(spec.n_filler_words)}" for _ in range(spec.tokens_per_sentence)]
            for _ in range(spec.sentences_per_doc)
        ]
        speakers = [SPEAKERS[rng.integers(len(SPEAKERS))] for _ in range(spec.sentences_per_doc)]
        doc = Document(doc_id=f"synth-{d}", sentences=sentences, speakers=speakers)

        slots = [
            (si, start)
            for si in range(spec.sentences_per_doc)
            for start in range(0, spec.tokens_per_sentence - 1, 2)
        ]
        rng.shuffle(slots)
        slot_iter = iter(slots)

        groups = rng.choice(spec.n_groups, size=spec.entities_per_doc, replace=False)
        used_groups = set(int(g) for g in groups)
        mention_counter = 0
        low, high = spec.mentions_per_entity
        for e, group in enumerate(groups):
            k = int(rng.integers(low, high + 1))
            word_ids = rng.choice(spec.words_per_group, size=k, replace=False)
            for w in word_ids:
                word = group_word(int(group), int(w))
                if spec.head_noise_rate > 0 and rng.random() < spec.head_noise_rate:
                    other = int(rng.integers(spec.n_groups - 1))
                    if other >= group:
                        other += 1
                    word = group_word(other, int(rng.integers(spec.words_per_group)))
                doc.mentions.append(
                    _place_mention(doc, next(slot_iter), word, f"m{mention_counter}", f"e{e}")
                )
                mention_counter += 1

        unused = [g for g in range(spec.n_groups) if g not in used_groups]
        for _ in range(spec.singletons_per_doc):
            if unused and not (spec.confusable_rate > 0 and rng.random() < spec.confusable_rate):
                group = int(unused[rng.integers(len(unused))])
            else:
                group = int(groups[rng.integers(len(groups))])
            word = group_word(group, int(rng.integers(spec.words_per_group)))
            doc.mentions.append(
                _place_mention(doc, next(slot_iter), word, f"m{mention_counter}", None)
            )
            mention_counter += 1
        docs.append(doc)
    return docs
