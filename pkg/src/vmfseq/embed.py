"""Embedding tables, unk construction, and nearest-neighbor decoding.

Tables are loaded from word2vec text files (header line "V m", then one
"word v1 ... vm" row per line) and every row is L2-normalized at load time:
the vMF density is defined over unit vectors, but word2vec/fasttext output
is not normalized.

Four reserved tokens are always present after loading, at fixed rows:
<s>=0, </s>=1, <unk>=2, <pad>=3.  Unless the embedding file provides them,
<s>, </s> and <pad> receive the last three coordinate axes e_{m-1}, e_{m-2},
e_{m-3} as fixed unit vectors (for m < 3, fixed-seed random unit vectors),
and <unk> defaults to the renormalized mean of all loaded rows; see
`build_unk_embedding` for the corpus-aware construction.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RESERVED_TOKENS",
    "BOS_ID",
    "EOS_ID",
    "UNK_ID",
    "PAD_ID",
    "EmbeddingTable",
    "DecodeResult",
    "load_embedding_table",
    "reserved_vectors",
    "save_embedding_table",
    "save_embedding_cache",
    "load_embedding_cache",
    "build_unk_embedding",
    "nearest_word",
    "knn_words",
]

RESERVED_TOKENS = ("<s>", "</s>", "<unk>", "<pad>")
BOS_ID, EOS_ID, UNK_ID, PAD_ID = 0, 1, 2, 3

_RESERVED_RNG_SEED = 414213562  # fixed seed for m < 3 reserved vectors

_CACHE_MAGIC = b"VMFEMB\x01\n"


class EmbeddingFormatError(ValueError):
    """Malformed embedding file (bad header, row, or vector)."""


@dataclass(frozen=True)
class DecodeResult:
    """A decoded word id with its dot-product score against the query."""

    word_id: int
    score: float


class EmbeddingTable:
    """Immutable word -> unit-vector map.

    Rows must be unit norm within 1e-6; words must be unique.  The row
    order defines the word ids used everywhere else.
    """

    def __init__(self, words, vectors: np.ndarray):
        words = tuple(words)
        vectors = np.ascontiguousarray(np.asarray(vectors, dtype=np.float64))
        if vectors.ndim != 2 or len(words) != vectors.shape[0]:
            raise ValueError("words and vectors disagree in length")
        if len(set(words)) != len(words):
            raise ValueError("duplicate words in table")
        norms = np.linalg.norm(vectors, axis=1)
        if vectors.shape[0] and not np.allclose(norms, 1.0, atol=1e-6):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise ValueError(f"row {bad} ({words[bad]!r}) has norm {norms[bad]!r}, not unit")
        vectors.setflags(write=False)
        self.words = words
        self.vectors = vectors
        self.index = {w: i for i, w in enumerate(words)}

    @classmethod
    def from_unnormalized(cls, words, vectors: np.ndarray) -> "EmbeddingTable":
        vectors = np.asarray(vectors, dtype=np.float64)
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            bad = int(np.argmin(norms))
            raise EmbeddingFormatError(f"zero vector for word {list(words)[bad]!r}")
        # rows already unit at representation precision stay bit-identical,
        # which makes save/load round trips exact
        scale = np.where(np.abs(norms - 1.0) < 1e-12, 1.0, norms)
        return cls(words, vectors / scale)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self.index[word]]

    def scores(self, e_hat: np.ndarray) -> np.ndarray:
        """Dot product of every row against e_hat."""
        return self.vectors @ np.asarray(e_hat, dtype=np.float64)


def reserved_vectors(m: int) -> dict[str, np.ndarray]:
    """Fixed unit vectors for <s>, </s>, <pad>: the last three coordinate
    axes, or fixed-seed random unit vectors when m < 3."""
    out: dict[str, np.ndarray] = {}
    if m >= 3:
        for tok, axis in (("<s>", m - 1), ("</s>", m - 2), ("<pad>", m - 3)):
            vec = np.zeros(m)
            vec[axis] = 1.0
            out[tok] = vec
    else:
        rng = np.random.Generator(np.random.PCG64(_RESERVED_RNG_SEED))
        for tok in ("<s>", "</s>", "<pad>"):
            vec = rng.standard_normal(m)
            out[tok] = vec / np.linalg.norm(vec)
    return out


def load_embedding_table(path, restrict_vocab=None, add_reserved: bool = True) -> EmbeddingTable:
    """Read a word2vec text file into a unit-normalized EmbeddingTable.

    restrict_vocab, when given, keeps only the listed words (reserved
    tokens are always kept).  Duplicate words keep the first occurrence and
    emit a warning.  Raises EmbeddingFormatError for a malformed header, a
    row whose value count disagrees with the header dimension (the message
    names the line number), or a zero row.
    """
    words: list[str] = []
    vectors: list[np.ndarray] = []
    seen: set[str] = set()
    rows = 0
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise EmbeddingFormatError(f"bad header line {header!r}: expected 'V m'")
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise EmbeddingFormatError(f"bad header line {header!r}") from exc
        if dim < 1:
            raise EmbeddingFormatError(f"bad embedding dimension {dim}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            rows += 1
            fields = line.rstrip("\n").split(" ")
            fields = [f for f in fields if f != ""]
            word = fields[0]
            if len(fields) - 1 != dim:
                raise EmbeddingFormatError(
                    f"line {lineno}: expected {dim} values for {word!r}, got {len(fields) - 1}"
                )
            try:
                vec = np.array([float(x) for x in fields[1:]], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingFormatError(f"line {lineno}: non-numeric value") from exc
            if word in seen:
                warnings.warn(f"duplicate word {word!r} at line {lineno}; keeping first")
                continue
            if np.linalg.norm(vec) == 0.0:
                raise EmbeddingFormatError(f"line {lineno}: zero vector for {word!r}")
            if restrict_vocab is not None and word not in restrict_vocab and word not in RESERVED_TOKENS:
                seen.add(word)
                continue
            seen.add(word)
            words.append(word)
            vectors.append(vec)
    if rows != count:
        warnings.warn(f"header declared {count} rows, file had {rows}")

    loaded = dict(zip(words, vectors))
    if not add_reserved:
        return EmbeddingTable.from_unnormalized(words, np.array(vectors))

    body_words = [w for w in words if w not in RESERVED_TOKENS]
    body = np.array([loaded[w] for w in body_words]) if body_words else np.zeros((0, dim))

    synth = reserved_vectors(dim)
    reserved_rows = []
    for tok in RESERVED_TOKENS:
        if tok in loaded:
            reserved_rows.append(loaded[tok])
        elif tok == "<unk>":
            if body_words:
                mean = body.mean(axis=0)
                if np.linalg.norm(mean) < 1e-12:
                    mean = np.random.Generator(np.random.PCG64(_RESERVED_RNG_SEED)).standard_normal(dim)
            else:
                mean = np.random.Generator(np.random.PCG64(_RESERVED_RNG_SEED)).standard_normal(dim)
            reserved_rows.append(mean)
        else:
            reserved_rows.append(synth[tok])

    all_words = list(RESERVED_TOKENS) + body_words
    all_vecs = np.vstack([np.array(reserved_rows), body]) if body_words else np.array(reserved_rows)
    return EmbeddingTable.from_unnormalized(all_words, all_vecs)


def save_embedding_table(table: EmbeddingTable, path) -> None:
    """Write word2vec text format with 17 significant digits per value.

    17 digits round-trips float64 exactly, so load(save(load(x))) is
    bit-identical to load(x).
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for word, row in zip(table.words, table.vectors):
            fh.write(word + " " + " ".join(f"{x:.17g}" for x in row) + "\n")


def save_embedding_cache(table: EmbeddingTable, path) -> None:
    """Binary cache: magic, JSON header (version/count/dim/words), then raw
    little-endian float64 rows.  Deterministic bytes for a fixed table."""
    header = json.dumps(
        {"version": 1, "count": len(table), "dim": table.dim, "words": list(table.words)},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        fh.write(np.ascontiguousarray(table.vectors, dtype="<f8").tobytes())


def load_embedding_cache(path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CACHE_MAGIC))
        if magic != _CACHE_MAGIC:
            raise EmbeddingFormatError(f"not an embedding cache: {path}")
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != 1:
            raise EmbeddingFormatError(f"unsupported cache version {header.get('version')!r}")
        count, dim = header["count"], header["dim"]
        data = np.frombuffer(fh.read(count * dim * 8), dtype="<f8").reshape(count, dim)
    return EmbeddingTable(header["words"], data.astype(np.float64))


def build_unk_embedding(full_table: EmbeddingTable, train_vocab) -> np.ndarray:
    """Unit vector for <unk>: the renormalized mean of embeddings of words
    present in the embedding vocabulary but absent from the training
    vocabulary.  Falls back to the mean of the whole table when that set is
    empty.  Reserved tokens never contribute (their vectors are synthetic
    conventions, not learned embeddings)."""
    if len(full_table) == 0:
        raise ValueError("empty embedding table")
    train_vocab = set(train_vocab)
    rows = [
        full_table.vectors[i]
        for i, w in enumerate(full_table.words)
        if w not in train_vocab and w not in RESERVED_TOKENS
    ]
    if not rows:
        rows = [
            full_table.vectors[i]
            for i, w in enumerate(full_table.words)
            if w not in RESERVED_TOKENS
        ] or [full_table.vectors[i] for i in range(len(full_table))]
    mean = np.mean(rows, axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        raise ValueError("mean embedding is degenerate; cannot represent <unk>")
    if abs(norm - 1.0) < 1e-12:  # e.g. a single missing word: return it exactly
        return mean
    return mean / norm


def _check_query(e_hat: np.ndarray, table: EmbeddingTable) -> np.ndarray:
    e_hat = np.asarray(e_hat, dtype=np.float64)
    if len(table) == 0:
        raise ValueError("empty table")
    if e_hat.shape != (table.dim,):
        raise ValueError(f"query dimension {e_hat.shape} does not match table dim {table.dim}")
    if np.linalg.norm(e_hat) == 0.0:
        raise ValueError("zero-norm query vector")
    return e_hat


def nearest_word(e_hat: np.ndarray, table: EmbeddingTable, exclude_ids=()) -> DecodeResult:
    """Exhaustive argmax of e_hat . e(w) over the table.

    Because rows are unit norm and the normalizer C_m(|e_hat|) does not
    depend on the candidate, this argmax coincides with the vMF-density
    argmax and the cosine-distance argmin.  Ties break to the lowest word
    id.  exclude_ids removes candidates (used by decoding to bar <s>/<pad>).
    """
    e_hat = _check_query(e_hat, table)
    scores = table.scores(e_hat)
    if exclude_ids:
        scores = scores.copy()
        scores[list(exclude_ids)] = -np.inf
    word_id = int(np.argmax(scores))  # first maximum = lowest id
    return DecodeResult(word_id=word_id, score=float(scores[word_id]))


def knn_words(e_hat: np.ndarray, table: EmbeddingTable, k: int) -> list[DecodeResult]:
    """Top-k rows by dot product, descending, ties broken by lowest id."""
    e_hat = _check_query(e_hat, table)
    if not 1 <= k <= len(table):
        raise ValueError(f"k={k} out of range for table of size {len(table)}")
    scores = table.scores(e_hat)
    order = np.argsort(-scores, kind="stable")[:k]
    return [DecodeResult(word_id=int(i), score=float(scores[i])) for i in order]
