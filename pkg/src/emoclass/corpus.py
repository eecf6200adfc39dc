"""Labelled tweet corpus: ingestion, label schema and train/validation/test splits."""
from __future__ import annotations

import csv
import enum
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CorpusError(ValueError):
    """Raised for malformed corpus files or invalid split requests."""


class EmotionLabel(enum.IntEnum):
    ANGER = 0
    FEAR = 1
    JOY = 2
    SADNESS = 3

    @classmethod
    def parse(cls, value) -> "EmotionLabel":
        if isinstance(value, EmotionLabel):
            return value
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            return cls(int(value))
        name = str(value).strip().upper()
        try:
            return cls[name]
        except KeyError:
            raise CorpusError(f"unknown emotion label {value!r}; expected one of {LABEL_NAMES}") from None

    @property
    def text(self) -> str:
        return self.name.lower()


LABELS = tuple(EmotionLabel)
LABEL_NAMES = tuple(label.text for label in LABELS)
N_LABELS = len(LABELS)


@dataclass(frozen=True)
class LabeledDocument:
    id: str
    text: str
    label: EmotionLabel

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise CorpusError(f"document {self.id!r} has empty text")
        object.__setattr__(self, "label", EmotionLabel.parse(self.label))


@dataclass
class DataSplit:
    train: list[LabeledDocument]
    validation: list[LabeledDocument]
    test: list[LabeledDocument]
    seed: int
    stratified: bool = True
    fractions: tuple[float, float] = field(default=(0.20, 0.10))

    def part(self, name: str) -> list[LabeledDocument]:
        if name not in ("train", "validation", "test"):
            raise CorpusError(f"unknown split part {name!r}")
        return getattr(self, name)


def _make_doc(doc_id, text, label, where: str) -> LabeledDocument:
    if text is None or not str(text).strip():
        raise CorpusError(f"{where}: empty text")
    try:
        parsed = EmotionLabel.parse(label)
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}") from None
    return LabeledDocument(str(doc_id), str(text), parsed)


def load_corpus(path, format: str | None = None) -> list[LabeledDocument]:
    """Read a ``csv`` (header ``text,label``, optional ``id``) or ``jsonl`` corpus.

    Records without an id get their 1-based record number. Line numbers in
    error messages refer to physical lines of the file.
    """
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix.lower() in (".jsonl", ".json") else "csv"
    if format not in ("csv", "jsonl"):
        raise CorpusError(f"unsupported corpus format {format!r}")
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from None

    docs: list[LabeledDocument] = []
    if format == "csv":
        reader = csv.DictReader(raw.splitlines(keepends=True))
        if reader.fieldnames is None or not {"text", "label"} <= set(reader.fieldnames):
            raise CorpusError(f"{path}: CSV header must contain 'text' and 'label'")
        for n, row in enumerate(reader, start=1):
            where = f"{path}:{reader.line_num}"
            docs.append(_make_doc(row.get("id") or n, row["text"], row["label"], where))
    else:
        for lineno, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "text" not in obj or "label" not in obj:
                raise CorpusError(f"{where}: record needs 'text' and 'label' fields")
            docs.append(_make_doc(obj.get("id", len(docs) + 1), obj["text"], obj["label"], where))

    seen: set[str] = set()
    for doc in docs:
        if doc.id in seen:
            raise CorpusError(f"{path}: duplicate document id {doc.id!r}")
        seen.add(doc.id)
    return docs


def write_corpus(docs, path) -> None:
    """Write documents as CSV with ``id,text,label`` columns."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "label"])
        for doc in docs:
            writer.writerow([doc.id, doc.text, doc.label.text])


def corpus_fingerprint(docs) -> str:
    h = hashlib.sha256()
    for doc in sorted(docs, key=lambda d: d.id):
        h.update(f"{doc.id}\x1f{doc.text}\x1f{doc.label.text}\x1e".encode("utf-8"))
    return h.hexdigest()


def class_distribution(docs) -> dict[EmotionLabel, int]:
    counts = {label: 0 for label in LABELS}
    for doc in docs:
        counts[doc.label] += 1
    return counts


def _controlled_round(quota: np.ndarray, row_sums, col_sums) -> np.ndarray:
    """Round a labels x parts quota matrix to integers with exact margins.

    Every cell ends at floor or floor+1 of its quota. Among feasible
    roundings the one adding to the largest fractional parts is chosen,
    first-enumerated on ties.
    """
    base = np.floor(quota + 1e-9).astype(int)
    frac = quota - base
    need_rows = np.asarray(row_sums) - base.sum(axis=1)
    need_cols = np.asarray(col_sums) - base.sum(axis=0)
    n_parts = quota.shape[1]
    per_row = [list(itertools.combinations(range(n_parts), int(k))) for k in need_rows]
    best, best_score = None, -math.inf
    for choice in itertools.product(*per_row):
        cols = np.zeros(n_parts, dtype=int)
        score = 0.0
        for r, cells in enumerate(choice):
            for c in cells:
                cols[c] += 1
                score += frac[r, c]
        if np.array_equal(cols, need_cols) and score > best_score + 1e-12:
            best, best_score = choice, score
    if best is None:  # pragma: no cover - a rounding always exists
        raise CorpusError("could not apportion split sizes")
    out = base.copy()
    for r, cells in enumerate(best):
        for c in cells:
            out[r, c] += 1
    return out


def split(docs, test_frac: float = 0.20, val_frac: float = 0.10, stratified: bool = True,
          seed: int = 0) -> DataSplit:
    """Partition documents into train/validation/test.

    ``|test| = floor(test_frac * N)`` and ``|validation| = floor(val_frac * (N - |test|))``;
    the remainder goes to train. The result depends only on the documents
    (ordered by id), the fractions and the seed.
    """
    if not 0.0 < test_frac < 1.0:
        raise CorpusError(f"test_frac must be in (0, 1), got {test_frac}")
    if not 0.0 <= val_frac < 1.0:
        raise CorpusError(f"val_frac must be in [0, 1), got {val_frac}")
    docs = sorted(docs, key=lambda d: d.id)
    n = len(docs)
    if n < 10:
        raise CorpusError(f"need at least 10 documents to split, got {n}")
    n_test = math.floor(test_frac * n)
    n_val = math.floor(val_frac * (n - n_test))
    n_train = n - n_test - n_val
    rng = np.random.default_rng(seed)

    if not stratified:
        order = rng.permutation(n)
        test_idx = sorted(order[:n_test])
        val_idx = sorted(order[n_test:n_test + n_val])
        train_idx = sorted(order[n_test + n_val:])
        return DataSplit([docs[i] for i in train_idx], [docs[i] for i in val_idx],
                         [docs[i] for i in test_idx], seed, False, (test_frac, val_frac))

    by_label = {label: [i for i, d in enumerate(docs) if d.label == label] for label in LABELS}
    present = [label for label in LABELS if by_label[label]]
    counts = np.array([len(by_label[label]) for label in present], dtype=float)
    sizes = np.array([n_test, n_val, n_train], dtype=float)
    quota = np.outer(counts, sizes) / n
    alloc = _controlled_round(quota, counts.astype(int), sizes.astype(int))
    for r, label in enumerate(present):
        for c, part in enumerate(("test", "validation", "train")):
            if sizes[c] > 0 and alloc[r, c] < 1:
                raise CorpusError(
                    f"corpus too small for a stratified split: label {label.text!r} "
                    f"gets no {part} documents")

    test_idx, val_idx, train_idx = [], [], []
    for r, label in enumerate(present):
        idx = np.asarray(by_label[label])[rng.permutation(len(by_label[label]))]
        t, v = alloc[r, 0], alloc[r, 1]
        test_idx.extend(idx[:t])
        val_idx.extend(idx[t:t + v])
        train_idx.extend(idx[t + v:])
    pick = lambda ids: [docs[i] for i in sorted(ids)]  # noqa: E731
    return DataSplit(pick(train_idx), pick(val_idx), pick(test_idx), seed, True, (test_frac, val_frac))
