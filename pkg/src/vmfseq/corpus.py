"""Parallel-corpus ingestion, vocabularies, batching, unk replacement.

Corpora are UTF-8, whitespace-pre-tokenized, one sentence per line;
parallel files are line-aligned.  Vocabularies keep the `cap` most frequent
types (ties broken by first occurrence) on top of the four reserved tokens
<s>=0, </s>=1, <unk>=2, <pad>=3.  Ingest/skip reports go to stderr as
single-line JSON objects.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field

import numpy as np

from .embed import BOS_ID, EOS_ID, PAD_ID, RESERVED_TOKENS, UNK_ID

__all__ = [
    "Vocabulary",
    "build_vocab",
    "read_parallel",
    "Batch",
    "make_batches",
    "load_dictionary",
    "replace_unks",
]


def _report(**kv) -> None:
    print(json.dumps(kv, sort_keys=True), file=sys.stderr)


@dataclass
class Vocabulary:
    """Bijective word <-> id map with training-corpus frequencies."""

    words: list[str]
    freq: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.words[:4]) != RESERVED_TOKENS:
            raise ValueError(f"first four words must be {RESERVED_TOKENS}")
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate words in vocabulary")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id_of(self, word: str) -> int:
        return self.index.get(word, UNK_ID)

    def word_of(self, idx: int) -> str:
        return self.words[idx]

    def encode(self, tokens, add_sentinels: bool = False) -> list[int]:
        ids = [self.id_of(t) for t in tokens]
        return [BOS_ID] + ids + [EOS_ID] if add_sentinels else ids

    def decode(self, ids) -> list[str]:
        return [self.words[i] for i in ids]


def build_vocab(path, cap: int = 50000) -> Vocabulary:
    """Count types in a corpus file and keep the `cap` most frequent.

    Frequency ties break by order of first occurrence.  All other words map
    to <unk> at encode time.
    """
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    n_tokens = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            for tok in line.split():
                n_tokens += 1
                if tok not in counts:
                    first_seen[tok] = len(first_seen)
                    counts[tok] = 0
                counts[tok] += 1
    ranked = sorted(counts, key=lambda w: (-counts[w], first_seen[w]))[:cap]
    words = list(RESERVED_TOKENS) + ranked
    freq = {w: counts[w] for w in ranked}
    _report(event="build_vocab", path=str(path), tokens=n_tokens,
            types=len(counts), kept=len(ranked), cap=cap)
    return Vocabulary(words=words, freq=freq)


def read_parallel(src_path, tgt_path) -> list[tuple[list[str], list[str]]]:
    """Read line-aligned parallel files into token-list pairs."""
    with open(src_path, "r", encoding="utf-8") as fh:
        src_lines = fh.read().splitlines()
    with open(tgt_path, "r", encoding="utf-8") as fh:
        tgt_lines = fh.read().splitlines()
    if len(src_lines) != len(tgt_lines):
        raise ValueError(
            f"parallel files differ in length: {len(src_lines)} vs {len(tgt_lines)}"
        )
    return [(s.split(), t.split()) for s, t in zip(src_lines, tgt_lines)]


@dataclass
class Batch:
    """Padded id tensors plus masks.

    src (B, S) with src_mask; tgt_in is <s>-prefixed, tgt_out is
    </s>-suffixed, both (B, T) with tgt_mask marking real positions.
    """

    src: np.ndarray
    src_mask: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.src.shape[0]


def _pad(rows: list[list[int]], width: int) -> tuple[np.ndarray, np.ndarray]:
    out = np.full((len(rows), width), PAD_ID, dtype=np.intp)
    mask = np.zeros((len(rows), width))
    for i, row in enumerate(rows):
        out[i, : len(row)] = row
        mask[i, : len(row)] = 1.0
    return out, mask


def make_batches(pairs, batch_size: int, max_len: int = 100, seed: int = 0,
                 pool_factor: int = 8):
    """Yield padded batches from encoded (src_ids, tgt_ids) pairs.

    Pairs exceeding max_len on either side are dropped (counted in a skip
    report on stderr).  The pair order is shuffled from the seed, then
    sorted by source length inside pools of pool_factor * batch_size for
    padding efficiency; iteration is deterministic for a fixed seed.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    pairs = list(pairs)
    kept = [(s, t) for s, t in pairs if len(s) <= max_len and len(t) <= max_len]
    dropped = len(pairs) - len(kept)
    _report(event="make_batches", pairs=len(pairs), dropped_over_max_len=dropped,
            kept=len(kept), max_len=max_len, batch_size=batch_size, seed=seed)
    if not kept:
        raise ValueError("no pairs left after length filtering")

    def generate():
        rng = np.random.Generator(np.random.PCG64(seed))
        order = rng.permutation(len(kept))
        pool = max(1, pool_factor) * batch_size
        for start in range(0, len(order), pool):
            # stable sort: equal lengths keep their shuffled order
            chunk = sorted(order[start : start + pool], key=lambda i: len(kept[i][0]))
            for b in range(0, len(chunk), batch_size):
                group = [kept[i] for i in chunk[b : b + batch_size]]
                src_rows = [s for s, _ in group]
                tgt_in_rows = [[BOS_ID] + t for _, t in group]
                tgt_out_rows = [t + [EOS_ID] for _, t in group]
                s_width = max(len(r) for r in src_rows)
                t_width = max(len(r) for r in tgt_in_rows)
                src, src_mask = _pad(src_rows, s_width)
                tgt_in, _ = _pad(tgt_in_rows, t_width)
                tgt_out, tgt_mask = _pad(tgt_out_rows, t_width)
                yield Batch(src=src, src_mask=src_mask, tgt_in=tgt_in,
                            tgt_out=tgt_out, tgt_mask=tgt_mask)

    return generate()


def load_dictionary(path) -> dict[str, str]:
    """TSV "source<TAB>target"; first entry wins on duplicate keys.

    Malformed lines are skipped and reported with their line numbers.
    """
    table: dict[str, str] = {}
    bad: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                bad.append(lineno)
                continue
            src, tgt = parts
            if src not in table:
                table[src] = tgt
    _report(event="load_dictionary", path=str(path), entries=len(table),
            malformed_lines=bad)
    return table


def replace_unks(hyp, src, attention: np.ndarray, dictionary: dict[str, str]) -> list[str]:
    """Replace each <unk> in hyp using the source word with the highest
    attention weight: dictionary translation if present, else the source
    word itself.  Attention ties break to the lowest source index."""
    hyp = list(hyp)
    src = list(src)
    attention = np.asarray(attention, dtype=np.float64)
    if attention.shape != (len(hyp), len(src)):
        raise ValueError(
            f"attention shape {attention.shape} does not match hyp x src "
            f"({len(hyp)}, {len(src)})"
        )
    out = []
    for i, word in enumerate(hyp):
        if word != "<unk>":
            out.append(word)
            continue
        j = int(np.argmax(attention[i]))  # first max = lowest index
        out.append(dictionary.get(src[j], src[j]))
    return out
