"""Word-level tokenization, vocabulary construction, and one-hot coding.

Source sentences are lowercased (accents kept) and split on whitespace, with
the four Spanish sentence marks kept as standalone tokens; commas, periods and
ellipses carry no gloss content and are dropped. Target glosses are never
re-tokenized here: they enter the vocabulary exactly as written in the corpus.

The vocabulary reserves the lowest indices for special tokens: PAD, SOS, EOS,
UNK and the four punctuation marks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ParallelCorpus
from .io_utils import atomic_write_text

PAD = "<pad>"
SOS = "<sos>"
EOS = "<eos>"
UNK = "<unk>"
PUNCTUATION_TOKENS = ("¿", "?", "¡", "!")
SPECIAL_TOKENS = (PAD, SOS, EOS, UNK) + PUNCTUATION_TOKENS

_DROPPED = {",", ".", "…"}


def tokenize(text: str) -> list[str]:
    """Split a sentence into lowercase word tokens plus standalone ¿ ? ¡ ! marks."""
    text = text.lower().replace("…", " ")
    for mark in PUNCTUATION_TOKENS + (",", "."):
        text = text.replace(mark, f" {mark} ")
    return [tok for tok in text.split() if tok not in _DROPPED]


@dataclass(frozen=True)
class Vocabulary:
    """Dense bidirectional token<->index map; specials occupy indices 0..7."""

    tokens: tuple[str, ...]
    index: dict[str, int] = field(compare=False)

    @classmethod
    def from_tokens(cls, tokens) -> "Vocabulary":
        """Build a vocabulary from tokens in first-occurrence order, specials first."""
        ordered = list(SPECIAL_TOKENS)
        known = set(ordered)
        for tok in tokens:
            if tok not in known:
                ordered.append(tok)
                known.add(tok)
        return cls(tuple(ordered), {tok: i for i, tok in enumerate(ordered)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def lookup(self, token: str) -> int:
        """Index of a token, falling back to UNK for unseen words."""
        return self.index.get(token, self.index[UNK])

    def token(self, i: int) -> str:
        if not 0 <= i < len(self.tokens):
            raise IndexError(f"token index {i} out of range for vocabulary of size {len(self)}")
        return self.tokens[i]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def save(self, path: str | Path) -> None:
        """One token per line; the line number (from zero) is the index."""
        atomic_write_text(Path(path), "\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        tokens = tuple(Path(path).read_text(encoding="utf-8").splitlines())
        if tokens[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary file {path} does not start with the reserved specials")
        return cls(tokens, {tok: i for i, tok in enumerate(tokens)})


def build_vocab(corpus: ParallelCorpus, side: str) -> Vocabulary:
    """Vocabulary over one corpus side; source text goes through tokenize()."""
    if side == "source":
        stream = (tok for pair in corpus for tok in tokenize(pair.source))
    elif side == "target":
        stream = (tok for pair in corpus for tok in pair.target)
    else:
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")
    return Vocabulary.from_tokens(stream)


def encode_one_hot(indices: list[int], vocab: Vocabulary) -> np.ndarray:
    """(T, V) float64 matrix with row t hot at indices[t]."""
    v = len(vocab)
    out = np.zeros((len(indices), v))
    for t, idx in enumerate(indices):
        if not 0 <= idx < v:
            raise IndexError(f"token index {idx} out of range for vocabulary of size {v}")
        out[t, idx] = 1.0
    return out


def decode(indices: list[int], vocab: Vocabulary) -> list[str]:
    """Map indices back to surface tokens, dropping non-punctuation specials."""
    hidden = {PAD, SOS, EOS, UNK}
    out = []
    for idx in indices:
        tok = vocab.token(idx)
        if tok not in hidden:
            out.append(tok)
    return out
