"""Word-embedding table in word2vec text format.

The file format is an optional header line ``<count> <dim>`` followed by
one ``<word> <v1> ... <v_dim>`` line per word, space separated.  Lookups
never fail: a case-sensitive hit wins, then a lowercased retry, then the
all-zeros vector (also used for absent words such as the previous-word
slot of a sentence-initial mention).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError

logger = logging.getLogger(__name__)

DEFAULT_DIM = 50


@dataclass
class EmbeddingTable:
    """Immutable-after-load mapping from word to vector; OOV resolves to zeros."""

    dim: int = DEFAULT_DIM
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries


def lookup(table: EmbeddingTable, word: str | None) -> np.ndarray:
    """Resolve a word (or an absent slot) to a vector of length ``table.dim``."""
    if word is not None:
        vec = table.entries.get(word)
        if vec is not None:
            return vec
        vec = table.entries.get(word.lower())
        if vec is not None:
            return vec
    return np.zeros(table.dim, dtype=np.float32)


def _is_header(parts: list[str]) -> bool:
    if len(parts) != 2:
        return False
    try:
        int(parts[0]), int(parts[1])
    except ValueError:
        return False
    return True


def load_embeddings(path, expected_dim: int = DEFAULT_DIM) -> EmbeddingTable:
    table = EmbeddingTable(dim=expected_dim)
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if line_no == 1 and _is_header(parts):
                header_dim = int(parts[1])
                if header_dim != expected_dim:
                    raise ParseError(
                        path, line_no, f"header dimension {header_dim} != expected {expected_dim}"
                    )
                continue
            word, comps = parts[0], parts[1:]
            if len(comps) != expected_dim:
                raise ParseError(
                    path, line_no, f"{len(comps)} components for {word!r}, expected {expected_dim}"
                )
            try:
                vec = np.array(comps, dtype=np.float32)
            except ValueError as exc:
                raise ParseError(path, line_no, f"non-numeric component: {exc}") from exc
            if not np.all(np.isfinite(vec)):
                raise ParseError(path, line_no, f"non-finite component for {word!r}")
            if word in table.entries:
                logger.warning("duplicate embedding for %r at %s:%d, last wins", word, path, line_no)
            table.entries[word] = vec
    return table


def write_embeddings(table: EmbeddingTable, path, header: bool = True) -> None:
    """Write in word2vec text format; %.9g round-trips float32 exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"{len(table.entries)} {table.dim}\n")
        for word, vec in table.entries.items():
            comps = " ".join(f"{float(v):.9g}" for v in vec)
            fh.write(f"{word} {comps}\n")
