"""Deterministic synthetic tasks bundled for smoke tests and benchmarks.

Two tasks, both fully determined by their seed:

    copy     target sentence == source sentence (vocabulary "w0..w{V-1}")
    lexicon  each source word "s<i>" maps to a fixed target word "t<perm(i)>"
             through a seeded permutation; the target sequence is the
             word-by-word image of the source

Task directories contain train/dev/test parallel files, a word2vec-format
target embedding file with random unit vectors, and the source->target
dictionary as TSV.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "copy_task",
    "lexicon_task",
    "write_parallel",
    "write_unit_embeddings",
    "write_dictionary",
    "make_task_dir",
]


def copy_task(n_pairs: int = 200, vocab_size: int = 50, min_len: int = 3,
              max_len: int = 8, seed: int = 7):
    """Identity pairs over vocabulary w0..w{V-1}."""
    rng = np.random.Generator(np.random.PCG64(seed))
    words = [f"w{i}" for i in range(vocab_size)]
    pairs = []
    for _ in range(n_pairs):
        n = int(rng.integers(min_len, max_len + 1))
        sent = [words[int(i)] for i in rng.integers(0, vocab_size, size=n)]
        pairs.append((sent, list(sent)))
    return pairs, {"src_words": words, "tgt_words": words, "mapping": {w: w for w in words}}


def lexicon_task(n_pairs: int = 2000, vocab_size: int = 100, min_len: int = 3,
                 max_len: int = 9, seed: int = 11):
    """Deterministic word-for-word translation through a seeded permutation.

    Every source word appears at least once in the generated pairs (the
    first vocab_size sentences each start with a distinct source word), so
    a train split covering them learns the full lexicon.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    src_words = [f"s{i}" for i in range(vocab_size)]
    perm = rng.permutation(vocab_size)
    tgt_words = [f"t{i}" for i in range(vocab_size)]
    mapping = {src_words[i]: tgt_words[int(perm[i])] for i in range(vocab_size)}
    pairs = []
    for k in range(n_pairs):
        n = int(rng.integers(min_len, max_len + 1))
        idx = rng.integers(0, vocab_size, size=n)
        src = [src_words[int(i)] for i in idx]
        if k < vocab_size:
            src[0] = src_words[k]  # guarantee coverage
        tgt = [mapping[w] for w in src]
        pairs.append((src, tgt))
    return pairs, {"src_words": src_words, "tgt_words": tgt_words, "mapping": mapping}


def write_parallel(pairs, src_path, tgt_path) -> None:
    with open(src_path, "w", encoding="utf-8") as fs, open(tgt_path, "w", encoding="utf-8") as ft:
        for src, tgt in pairs:
            fs.write(" ".join(src) + "\n")
            ft.write(" ".join(tgt) + "\n")


def write_unit_embeddings(words, m: int, path, seed: int = 13) -> None:
    """word2vec text file of seeded random unit vectors."""
    rng = np.random.Generator(np.random.PCG64(seed))
    vecs = rng.standard_normal((len(words), m))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(words)} {m}\n")
        for w, row in zip(words, vecs):
            fh.write(w + " " + " ".join(f"{x:.17g}" for x in row) + "\n")


def write_dictionary(mapping: dict[str, str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for src in sorted(mapping):
            fh.write(f"{src}\t{mapping[src]}\n")


def make_task_dir(kind: str, out_dir, m: int = 32, seed: int = 7,
                  n_pairs: int | None = None, vocab_size: int | None = None,
                  splits=(0.8, 0.1, 0.1), extra_embedding_words: int = 5):
    """Generate a complete task directory; returns the path dict.

    The embedding file covers all target words plus a few extra words that
    never occur in the corpus, so <unk> construction has a nonempty
    "embedded but untrained" set.
    """
    if kind == "copy":
        pairs, info = copy_task(n_pairs or 200, vocab_size or 50, seed=seed)
    elif kind == "lexicon":
        pairs, info = lexicon_task(n_pairs or 2000, vocab_size or 100, seed=seed)
    else:
        raise ValueError(f"unknown task kind {kind!r}")
    os.makedirs(out_dir, exist_ok=True)
    n = len(pairs)
    n_train = int(round(splits[0] * n))
    n_dev = int(round(splits[1] * n))
    chunks = {
        "train": pairs[:n_train],
        "dev": pairs[n_train : n_train + n_dev],
        "test": pairs[n_train + n_dev :],
    }
    paths = {}
    for split, chunk in chunks.items():
        sp = os.path.join(out_dir, f"{split}.src")
        tp = os.path.join(out_dir, f"{split}.tgt")
        write_parallel(chunk, sp, tp)
        paths[f"{split}_src"] = sp
        paths[f"{split}_tgt"] = tp
    emb_words = list(info["tgt_words"]) + [f"xtra{i}" for i in range(extra_embedding_words)]
    paths["embeddings"] = os.path.join(out_dir, "embeddings.txt")
    write_unit_embeddings(emb_words, m, paths["embeddings"], seed=seed + 1)
    paths["dictionary"] = os.path.join(out_dir, "dictionary.tsv")
    write_dictionary(info["mapping"], paths["dictionary"])
    return paths
