"""Vocabulary, bag-of-words vectors and word-embedding tables."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
EMBED_DIM = 300
DEFAULT_MAX_LEN = 40


class FeatureError(ValueError):
    pass


@dataclass
class Vocabulary:
    """Token <-> id maps. Ids 0 and 1 are reserved for padding and unknown tokens."""

    id_to_token: list[str]
    min_freq: int = 1
    token_to_id: dict[str, int] = field(init=False)

    pad_id = PAD_ID
    unk_id = UNK_ID

    def __post_init__(self):
        if self.id_to_token[:2] != [PAD_TOKEN, UNK_TOKEN]:
            self.id_to_token = [PAD_TOKEN, UNK_TOKEN] + list(self.id_to_token)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token) if i >= 2}
        if len(self.token_to_id) != len(self.id_to_token) - 2:
            raise FeatureError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def to_dict(self) -> dict:
        return {"tokens": self.id_to_token[2:], "min_freq": self.min_freq}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(list(d["tokens"]), int(d.get("min_freq", 1)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocabulary(docs, min_freq: int = 1) -> Vocabulary:
    """Tokens with corpus frequency >= ``min_freq``, most frequent first (ties lexicographic)."""
    if min_freq < 1:
        raise FeatureError("min_freq must be >= 1")
    docs = list(docs)
    if not docs:
        raise FeatureError("cannot build a vocabulary from an empty corpus")
    freq = Counter(tok for doc in docs for tok in doc.tokens)
    kept = sorted((t for t, c in freq.items() if c >= min_freq), key=lambda t: (-freq[t], t))
    return Vocabulary(kept, min_freq)


@dataclass
class BowVector:
    counts: dict[int, int]
    dim: int

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        for i, c in self.counts.items():
            out[i] = c
        return out


def vectorize_bow(doc, vocab: Vocabulary) -> BowVector:
    counts = Counter(vocab.id(tok) for tok in doc.tokens)
    return BowVector(dict(sorted(counts.items())), len(vocab))


def bow_matrix(docs, vocab: Vocabulary) -> np.ndarray:
    """Dense ``(n_docs, |V|)`` count matrix."""
    docs = list(docs)
    out = np.zeros((len(docs), len(vocab)))
    for r, doc in enumerate(docs):
        for tok in doc.tokens:
            out[r, vocab.id(tok)] += 1
    return out


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    trainable: bool = True
    init_source: str = "random"
    coverage: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise FeatureError("embedding matrix must be 2-D")
        if not np.all(np.isfinite(self.matrix)):
            raise FeatureError("embedding matrix has non-finite entries")
        self.matrix[PAD_ID] = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]


def random_embeddings(vocab: Vocabulary, dim: int = EMBED_DIM, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.25, 0.25, size=(len(vocab), dim))
    return EmbeddingTable(matrix, True, "random", {"found": 0, "missing": len(vocab) - 2})


def load_pretrained_embeddings(path, vocab: Vocabulary, dim: int = EMBED_DIM, seed: int = 0) -> EmbeddingTable:
    """Read word2vec text format, keeping only vocabulary tokens.

    Tokens missing from the file keep a seeded Uniform(-0.25, 0.25) row.
    """
    table = random_embeddings(vocab, dim, seed)
    matrix = table.matrix
    found = set()
    with open(path, encoding="utf-8", errors="strict") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                if int(parts[1]) != dim:
                    raise FeatureError(f"{path}: file declares dimension {parts[1]}, expected {dim}")
                continue
            if not parts or parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise FeatureError(
                    f"{path}:{lineno}: expected a word and {dim} values, got {len(parts) - 1} values")
            word = parts[0]
            idx = vocab.token_to_id.get(word)
            if idx is None or idx in found:
                continue
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise FeatureError(f"{path}:{lineno}: malformed number") from None
            if not np.all(np.isfinite(vec)):
                raise FeatureError(f"{path}:{lineno}: non-finite value")
            matrix[idx] = vec
            found.add(idx)
    coverage = {"found": len(found), "missing": len(vocab) - 2 - len(found)}
    return EmbeddingTable(matrix, True, "pretrained", coverage)


def save_word2vec_text(table: EmbeddingTable, vocab: Vocabulary, path) -> None:
    """Export rows for real tokens (ids >= 2), e.g. a fine-tuned snapshot."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(vocab) - 2} {table.dim}\n")
        for i in range(2, len(vocab)):
            fh.write(vocab.id_to_token[i] + " " + " ".join(repr(float(v)) for v in table.matrix[i]) + "\n")


@dataclass
class EncodedSequence:
    ids: np.ndarray
    true_length: int

    @property
    def max_len(self) -> int:
        return len(self.ids)


def encode_sequence(doc, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> EncodedSequence:
    if max_len < 1:
        raise FeatureError("max_len must be >= 1")
    tokens = doc.tokens[:max_len]
    ids = np.full(max_len, PAD_ID, dtype=np.int64)
    ids[: len(tokens)] = [vocab.id(t) for t in tokens]
    return EncodedSequence(ids, len(tokens))


def encode_batch(docs, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> tuple[np.ndarray, np.ndarray]:
    """Stack encoded sequences into an ``(n, max_len)`` id matrix and a length vector."""
    seqs = [encode_sequence(d, vocab, max_len) for d in docs]
    ids = np.stack([s.ids for s in seqs]) if seqs else np.zeros((0, max_len), dtype=np.int64)
    lengths = np.array([s.true_length for s in seqs], dtype=np.int64)
    return ids, lengths


def flatten_embedded(seq: EncodedSequence, table: EmbeddingTable) -> np.ndarray:
    rows = table.matrix[seq.ids].copy()
    rows[seq.ids == PAD_ID] = 0.0
    return rows.reshape(-1)


def flatten_batch(ids: np.ndarray, table: EmbeddingTable) -> np.ndarray:
    rows = table.matrix[ids]
    rows[ids == PAD_ID] = 0.0
    return rows.reshape(len(ids), -1)
