"""Parallel Spanish/LSE corpus: loading, saving, and train/validation splitting.

The corpus file format is UTF-8 text, one pair per line, `source<TAB>target`,
where the target side is a space separated list of gloss tokens. Lines starting
with `#` and blank lines are ignored. The package ships a default corpus at
``text2sign/data/lse_corpus.tsv``.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorpusFormatError
from .io_utils import atomic_write_text


@dataclass(frozen=True)
class CorpusPair:
    """One training example: a Spanish sentence and its gloss sequence."""

    source: str
    target: tuple[str, ...]

    def __post_init__(self):
        if not self.source.strip():
            raise ValueError("source sentence is empty")
        if not self.target:
            raise ValueError("target gloss list is empty")
        for tok in self.target:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"bad gloss token {tok!r}: empty or contains whitespace")


@dataclass(frozen=True)
class ParallelCorpus:
    pairs: tuple[CorpusPair, ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i: int) -> CorpusPair:
        return self.pairs[i]


def default_corpus_path() -> Path:
    """Path of the corpus file shipped with the package."""
    return Path(importlib.resources.files("text2sign").joinpath("data/lse_corpus.tsv"))


def load_corpus(path: str | Path) -> ParallelCorpus:
    """Read a tab separated corpus file.

    Raises CorpusFormatError naming the offending line for malformed input,
    and for duplicate (source, target) pairs or an empty corpus.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError(f"corpus file not found: {path}")
    pairs: list[CorpusPair] = []
    seen: set[tuple[str, tuple[str, ...]]] = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" not in raw:
            raise CorpusFormatError(f"{path}:{lineno}: missing tab separator")
        source, _, target_part = raw.partition("\t")
        source = source.strip()
        target = tuple(target_part.split())
        if not source:
            raise CorpusFormatError(f"{path}:{lineno}: empty source side")
        if not target:
            raise CorpusFormatError(f"{path}:{lineno}: empty target side")
        key = (source, target)
        if key in seen:
            raise CorpusFormatError(f"{path}:{lineno}: duplicate pair {source!r}")
        seen.add(key)
        pairs.append(CorpusPair(source, target))
    if not pairs:
        raise CorpusFormatError(f"{path}: empty corpus")
    return ParallelCorpus(tuple(pairs))


def save_corpus(corpus: ParallelCorpus, path: str | Path) -> None:
    lines = [f"{p.source}\t{' '.join(p.target)}" for p in corpus]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def split_train_val(
    corpus: ParallelCorpus, val_fraction: float, seed: int
) -> tuple[ParallelCorpus, ParallelCorpus]:
    """Deterministically split the corpus into train and validation parts.

    The validation set takes round(val_fraction * n) pairs, chosen as the
    first entries of a seeded random permutation (numpy PCG64); both halves
    keep the original corpus order. A fraction of 0 returns the whole corpus
    as training data and an empty validation set.
    """
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in [0, 1), got {val_fraction}")
    n = len(corpus)
    if val_fraction > 0.0 and n < 2:
        raise ValueError("need at least 2 pairs to split off a validation set")
    n_val = int(np.floor(val_fraction * n + 0.5))
    if n_val >= n and val_fraction > 0.0:
        raise ValueError(
            f"val_fraction={val_fraction} would leave an empty training set ({n} pairs)"
        )
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = set(int(i) for i in perm[:n_val])
    train = tuple(corpus[i] for i in range(n) if i not in val_idx)
    val = tuple(corpus[i] for i in range(n) if i in val_idx)
    return ParallelCorpus(train), ParallelCorpus(val)
