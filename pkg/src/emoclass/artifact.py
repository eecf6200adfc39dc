"""Self-describing binary model files and the text-to-prediction pipeline they carry.

Layout (all integers little-endian)::

    b"EMOCLASS" | uint32 version | uint64 descriptor length | descriptor JSON (UTF-8)
    uint32 block count | per block: uint32 name length | name | array_to_bytes(array)

The descriptor holds the model kind, its spec or architecture, the vocabulary,
preprocessing and feature settings, and training metadata. Arrays are stored
in sorted name order so equal models give equal bytes.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .classical import ClassicalModel, ClassicalSpec, predict_classical
from .features import DEFAULT_MAX_LEN, EmbeddingTable, Vocabulary, bow_matrix, encode_batch, flatten_batch
from .neural import NeuralArchitecture, NeuralModel, ensemble_predict, predict as neural_predict
from .tensor import array_from_bytes, array_to_bytes
from .textprep import PreprocessConfig, preprocess, preprocess_corpus

MAGIC = b"EMOCLASS"
VERSION = 1
KINDS = ("classical", "neural", "ensemble")
TIMESTAMP_KEYS = ("created_at",)


class ArtifactError(ValueError):
    pass


@dataclass
class FeatureSettings:
    representation: str = "bow"
    max_len: int = DEFAULT_MAX_LEN
    min_freq: int = 1

    def __post_init__(self):
        if self.representation not in ("bow", "embedding", "sequence"):
            raise ArtifactError(f"unknown feature representation {self.representation!r}")
        if self.max_len < 1 or self.min_freq < 1:
            raise ArtifactError("max_len and min_freq must be >= 1")


@dataclass
class ModelArtifact:
    """A trained model plus everything needed to run it on raw text."""

    kind: str
    model: object
    vocab: Vocabulary
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    feature_table: EmbeddingTable | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArtifactError(f"unknown artifact kind {self.kind!r}")
        if self.kind == "classical" and self.features.representation == "embedding" and self.feature_table is None:
            raise ArtifactError("embedding features need an embedding table")

    @property
    def name(self) -> str:
        if self.kind == "classical":
            return self.model.spec.algorithm
        if self.kind == "ensemble":
            return "ensemble"
        return self.model.architecture.kind

    def featurize(self, tokenized):
        tokenized = list(tokenized)
        if self.kind == "classical":
            if self.features.representation == "bow":
                return bow_matrix(tokenized, self.vocab)
            ids, _ = encode_batch(tokenized, self.vocab, self.features.max_len)
            return flatten_batch(ids, self.feature_table)
        return encode_batch(tokenized, self.vocab, self.features.max_len)

    def predict_tokenized(self, tokenized) -> tuple[np.ndarray, np.ndarray]:
        feats = self.featurize(tokenized)
        if self.kind == "classical":
            return predict_classical(self.model, feats)
        ids, lengths = feats
        if self.kind == "ensemble":
            return ensemble_predict(self.model, ids, lengths)
        return neural_predict(self.model, ids, lengths)

    def predict_texts(self, texts) -> tuple[np.ndarray, np.ndarray]:
        return self.predict_tokenized(preprocess(t, self.preprocess) for t in texts)

    def predict_documents(self, docs) -> tuple[np.ndarray, np.ndarray]:
        return self.predict_tokenized(preprocess_corpus(docs, self.preprocess))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def _describe(art: ModelArtifact) -> tuple[dict, dict]:
    desc = {
        "kind": art.kind,
        "vocabulary": art.vocab.to_dict(),
        "preprocess": art.preprocess.to_dict(),
        "features": asdict(art.features),
        "metadata": art.metadata,
    }
    arrays = {}
    if art.kind == "classical":
        m: ClassicalModel = art.model
        desc["spec"] = m.spec.to_dict()
        desc["n_features"] = m.n_features
        desc["info"] = m.info
        arrays.update({f"model/{k}": v for k, v in m.arrays.items()})
    elif art.kind == "neural":
        desc["architecture"] = art.model.architecture.to_dict()
        arrays.update({f"model/{k}": v for k, v in art.model.state_arrays().items()})
    else:
        desc["members"] = [m.architecture.to_dict() for m in art.model]
        for i, m in enumerate(art.model):
            arrays.update({f"member{i}/{k}": v for k, v in m.state_arrays().items()})
    if art.feature_table is not None:
        desc["feature_table"] = {"trainable": art.feature_table.trainable,
                                 "init_source": art.feature_table.init_source,
                                 "coverage": art.feature_table.coverage}
        arrays["feature_table"] = art.feature_table.matrix
    return _jsonable(desc), arrays


def to_bytes(art: ModelArtifact) -> bytes:
    desc, arrays = _describe(art)
    blob = json.dumps(desc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(blob)), blob, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        enc = name.encode("utf-8")
        parts += [struct.pack("<I", len(enc)), enc, array_to_bytes(arrays[name])]
    return b"".join(parts)


def parse_bytes(buf: bytes) -> tuple[dict, dict]:
    """Raw (descriptor, arrays) without building models."""
    if buf[:len(MAGIC)] != MAGIC:
        raise ArtifactError("not a model artifact (bad magic)")
    try:
        version, n = struct.unpack_from("<IQ", buf, len(MAGIC))
        if version != VERSION:
            raise ArtifactError(f"artifact format version {version} is not supported (expected {VERSION})")
        off = len(MAGIC) + 12
        desc = json.loads(buf[off:off + n].decode("utf-8"))
        off += n
        (count,) = struct.unpack_from("<I", buf, off)
        off += 4
        arrays = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off:off + ln].decode("utf-8")
            off += ln
            arrays[name], off = array_from_bytes(buf, off)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, ArtifactError):
            raise
        raise ArtifactError(f"corrupt or truncated artifact: {exc}") from None
    if off != len(buf):
        raise ArtifactError("trailing bytes after the last tensor block")
    return desc, arrays


def from_bytes(buf: bytes) -> ModelArtifact:
    desc, arrays = parse_bytes(buf)
    kind = desc.get("kind")
    vocab = Vocabulary.from_dict(desc["vocabulary"])
    prep = PreprocessConfig.from_dict(desc["preprocess"])
    feats = FeatureSettings(**desc["features"])
    table = None
    if "feature_table" in arrays:
        ft = desc["feature_table"]
        table = EmbeddingTable(arrays["feature_table"], ft["trainable"], ft["init_source"], ft["coverage"])

    def prefixed(p):
        return {k[len(p):]: v for k, v in arrays.items() if k.startswith(p)}

    if kind == "classical":
        model = ClassicalModel(ClassicalSpec.from_dict(desc["spec"]), int(desc["n_features"]),
                               prefixed("model/"), desc.get("info", {}))
    elif kind == "neural":
        model = NeuralModel.from_arrays(NeuralArchitecture.from_dict(desc["architecture"]), prefixed("model/"))
    elif kind == "ensemble":
        model = [NeuralModel.from_arrays(NeuralArchitecture.from_dict(a), prefixed(f"member{i}/"))
                 for i, a in enumerate(desc["members"])]
    else:
        raise ArtifactError(f"unknown artifact kind {kind!r}")
    return ModelArtifact(kind, model, vocab, prep, feats, table, desc.get("metadata", {}))


def save(art: ModelArtifact, path) -> Path:
    path = Path(path)
    if "created_at" not in art.metadata:
        art.metadata["created_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    path.write_bytes(to_bytes(art))
    return path


def load(path) -> ModelArtifact:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc.strerror}") from None
    return from_bytes(buf)


def content_digest(buf_or_path, exclude_timestamps: bool = True) -> str:
    """sha256 of an artifact with timestamp fields blanked."""
    buf = Path(buf_or_path).read_bytes() if isinstance(buf_or_path, (str, Path)) else buf_or_path
    desc, arrays = parse_bytes(buf)
    if exclude_timestamps:
        for key in TIMESTAMP_KEYS:
            desc.get("metadata", {}).pop(key, None)
    h = hashlib.sha256(json.dumps(desc, sort_keys=True, separators=(",", ":")).encode("utf-8"))
    for name in sorted(arrays):
        h.update(name.encode("utf-8"))
        h.update(array_to_bytes(arrays[name]))
    return h.hexdigest()
