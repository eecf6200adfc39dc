"""Command-line driver: preprocess, tune, train, evaluate, predict, report, compare.

Settings come from built-in defaults, then an optional JSON config file
(``--config``), then command-line flags, later sources winning.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import artifact as art_mod
from .artifact import ArtifactError, FeatureSettings, ModelArtifact
from .classical import (ALGORITHMS, ClassicalError, ClassicalSpec, InvalidParams, REFERENCE_BEST_PARAMS,
                        REFERENCE_GRIDS, train_classical)
from .corpus import LABEL_NAMES, CorpusError, corpus_fingerprint, load_corpus, split as split_corpus
from .features import (EMBED_DIM, EmbeddingTable, FeatureError, bow_matrix, build_vocabulary, encode_batch,
                       flatten_batch, load_pretrained_embeddings, random_embeddings, save_word2vec_text)
from .metrics import MetricsError, classification_report, confusion_matrix, export_curves, roc_ovr
from .neural import KINDS as NEURAL_KINDS, NeuralArchitecture, NeuralError, build_model
from .optimize import (EncodedSet, GridError, GridSpec, TrainConfig, TrainHistory, TrainingDiverged,
                       grid_search_cv, grid_search_neural, max_workers, train as train_neural)
from .tensor import NonFiniteError
from .textprep import PreprocessConfig, preprocess_corpus, read_pairs, read_wordlist

log = logging.getLogger("emoclass")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DISPLAY_NAMES = {
    "logreg": "Logistic Regression", "naive_bayes": "Naive-Bayes", "svm": "Support Vector Classifier",
    "knn": "K-Neighbors Classifier", "decision_tree": "Decision Tree Classifier",
    "random_forest": "Random Forest Classifier", "cnn": "CNN", "lstm": "LSTM", "bilstm": "BiLSTM",
    "gru": "GRU", "bigru": "BiGRU", "ensemble": "Ensemble (BiGRU + BiLSTM)",
}
NEURAL_TUNING_GRID = {"batch_size": [8, 16, 32, 64, 128], "learning_rate": [0.1, 0.01, 0.001, 0.0001]}
NB_GRID = {"alpha": [0.01, 0.1, 0.5, 1.0]}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- settings ------------------------------------------------------------------------

@dataclass
class PipelineConfig:
    corpus: str | None = None
    format: str | None = None
    embeddings: str | None = None
    embed_dim: int = EMBED_DIM
    output_dir: str = "runs/latest"
    stopwords: str | None = None
    abbreviations: str | None = None
    preprocess: dict = field(default_factory=dict)
    features: dict = field(default_factory=dict)
    split: dict = field(default_factory=lambda: {"test_frac": 0.2, "val_frac": 0.1, "stratified": True})
    train: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0

    def validate(self, need_corpus: bool = True) -> None:
        if need_corpus and not self.corpus:
            raise UsageError("no corpus given (use --corpus or the config's \"corpus\" entry)")
        for name in ("corpus", "embeddings", "stopwords", "abbreviations"):
            p = getattr(self, name)
            if p and not Path(p).is_file():
                raise DataError(f"{name} file not found: {p}")
        s = self.split
        if not 0 < s.get("test_frac", 0.2) < 1 or not 0 <= s.get("val_frac", 0.1) < 1:
            raise UsageError("split fractions must satisfy 0 < test_frac < 1 and 0 <= val_frac < 1")

    def preprocess_config(self) -> PreprocessConfig:
        d = dict(self.preprocess)
        if self.stopwords:
            d["stopwords"] = frozenset(read_wordlist(Path(self.stopwords).read_text(encoding="utf-8")))
        if self.abbreviations:
            d["abbreviations"] = read_pairs(Path(self.abbreviations).read_text(encoding="utf-8"))
        try:
            return PreprocessConfig.from_dict(d) if d else PreprocessConfig()
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid preprocess settings: {exc}") from None

    def feature_settings(self, default_repr: str = "bow") -> FeatureSettings:
        d = {"representation": default_repr, **self.features}
        try:
            return FeatureSettings(**d)
        except (TypeError, ArtifactError) as exc:
            raise UsageError(f"invalid feature settings: {exc}") from None


_FLAG_TO_PATH = {
    "corpus": ("corpus",), "format": ("format",), "embeddings": ("embeddings",), "embed_dim": ("embed_dim",),
    "out": ("output_dir",), "seed": ("seed",), "stopwords": ("stopwords",), "abbreviations": ("abbreviations",),
    "features": ("features", "representation"), "max_len": ("features", "max_len"),
    "min_freq": ("features", "min_freq"), "normalizer": ("preprocess", "normalizer"),
    "test_frac": ("split", "test_frac"), "val_frac": ("split", "val_frac"),
    "batch_size": ("train", "batch_size"), "lr": ("train", "learning_rate"), "epochs": ("train", "epochs"),
    "optimizer": ("train", "optimizer"),
}


def resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
        if not isinstance(raw, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        for key, value in raw.items():
            if not hasattr(cfg, key):
                raise UsageError(f"{path}: unknown config key {key!r}")
            if isinstance(getattr(cfg, key), dict):
                getattr(cfg, key).update(value)
            else:
                setattr(cfg, key, value)
    for flag, target in _FLAG_TO_PATH.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if len(target) == 1:
            setattr(cfg, target[0], value)
        else:
            getattr(cfg, target[0])[target[1]] = value
    if getattr(args, "stratified", None) is not None:
        cfg.split["stratified"] = args.stratified
    return cfg


def _check_flags(args) -> None:
    if getattr(args, "lr", None) is not None and not (args.lr > 0 and math.isfinite(args.lr)):
        raise UsageError(f"--lr must be > 0, got {args.lr}")
    for flag in ("batch_size", "epochs", "folds", "repeats", "max_len", "min_freq"):
        v = getattr(args, flag, None)
        if v is not None and v < 1:
            raise UsageError(f"--{flag.replace('_', '-')} must be >= 1, got {v}")


# --- data preparation ------------------------------------------------------------------

@dataclass
class Prepared:
    cfg: PipelineConfig
    docs: list
    parts: dict
    tokens: dict
    prep: PreprocessConfig
    fingerprint: str
    vocab: object = None

    def labels(self, part: str) -> np.ndarray:
        return np.array([int(d.label) for d in self.parts[part]], dtype=np.int64)


def prepare(cfg: PipelineConfig, min_freq: int | None = None) -> Prepared:
    cfg.validate()
    docs = load_corpus(cfg.corpus, cfg.format)
    s = cfg.split
    sp = split_corpus(docs, s.get("test_frac", 0.2), s.get("val_frac", 0.1), s.get("stratified", True), cfg.seed)
    parts = {"train": sp.train, "validation": sp.validation, "test": sp.test}
    prep = cfg.preprocess_config()
    tokens = {k: preprocess_corpus(v, prep) for k, v in parts.items()}
    p = Prepared(cfg, docs, parts, tokens, prep, corpus_fingerprint(docs))
    mf = min_freq or int(cfg.features.get("min_freq", 1))
    p.vocab = build_vocabulary(tokens["train"], mf)
    return p


def _metadata(p: Prepared, extra: dict | None = None) -> dict:
    md = {"corpus": str(p.cfg.corpus), "corpus_fingerprint": p.fingerprint, "seed": p.cfg.seed,
          "split": {"test_frac": p.cfg.split.get("test_frac", 0.2), "val_frac": p.cfg.split.get("val_frac", 0.1),
                    "stratified": p.cfg.split.get("stratified", True), "seed": p.cfg.seed},
          "split_sizes": {k: len(v) for k, v in p.parts.items()}}
    md.update(extra or {})
    return md


def _embedding_table(p: Prepared, dim: int, source: str | None):
    if source:
        return load_pretrained_embeddings(source, p.vocab, dim, seed=p.cfg.seed)
    return random_embeddings(p.vocab, dim, seed=p.cfg.seed)


def _classical_features(p: Prepared, feats: FeatureSettings, table, parts) -> np.ndarray:
    toks = [t for part in parts for t in p.tokens[part]]
    if feats.representation == "bow":
        return bow_matrix(toks, p.vocab)
    ids, _ = encode_batch(toks, p.vocab, feats.max_len)
    return flatten_batch(ids, table)


def _encoded(p: Prepared, part: str, max_len: int) -> EncodedSet:
    ids, lengths = encode_batch(p.tokens[part], p.vocab, max_len)
    return EncodedSet(ids, lengths, p.labels(part))


def _model_params(args, cfg: PipelineConfig) -> dict:
    params = dict(cfg.params)
    if getattr(args, "params_file", None):
        params.update(json.loads(Path(args.params_file).read_text(encoding="utf-8")))
    if getattr(args, "params", None):
        try:
            params.update(json.loads(args.params))
        except json.JSONDecodeError as exc:
            raise UsageError(f"--params is not valid JSON: {exc.msg}") from None
    if getattr(args, "reference_best", False):
        params = {**REFERENCE_BEST_PARAMS.get(args.model, {}), **params}
    return params


def _classical_spec(kind: str, params: dict, feats: FeatureSettings) -> ClassicalSpec:
    # dense embedding features can be negative, so naive Bayes switches to the Gaussian form there
    if kind == "naive_bayes" and feats.representation == "embedding" and "variant" not in params:
        params = {**params, "variant": "gaussian"}
    return ClassicalSpec(kind, params)


def _train_config(cfg: PipelineConfig, seed: int) -> TrainConfig:
    d = {**cfg.train, "seed": seed}
    try:
        return TrainConfig(**d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training settings: {exc}") from None


def _architecture(kind: str, p: Prepared, cfg: PipelineConfig, feats: FeatureSettings, params: dict):
    try:
        return NeuralArchitecture(kind, vocab_size=len(p.vocab), embed_dim=int(cfg.embed_dim),
                                  max_len=feats.max_len, **params)
    except TypeError as exc:
        raise UsageError(f"invalid architecture parameter: {exc}") from None


# --- commands ------------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    cfg = resolve_config(args)
    p = prepare(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "tokens.jsonl", "w", encoding="utf-8") as fh:
        for part in ("train", "validation", "test"):
            for doc, tok in zip(p.parts[part], p.tokens[part]):
                fh.write(json.dumps({"id": doc.id, "split": part, "label": doc.label.text,
                                     "tokens": tok.tokens}, ensure_ascii=False) + "\n")
    p.vocab.save(out / "vocab.json")
    summary = {"corpus_fingerprint": p.fingerprint, "vocabulary_size": len(p.vocab),
               "split_sizes": {k: len(v) for k, v in p.parts.items()},
               "empty_after_preprocessing": sum(t.empty for v in p.tokens.values() for t in v),
               "preprocess": p.prep.to_dict() | {"stopwords": len(p.prep.stopwords),
                                                 "abbreviations": len(p.prep.abbreviations)}}
    (out / "preprocess_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    print(f"wrote {out / 'tokens.jsonl'} and {out / 'vocab.json'} ({len(p.vocab)} entries)")
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = resolve_config(args)
    p = prepare(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.grid:
        if not Path(args.grid).is_file():
            raise DataError(f"grid file not found: {args.grid}")
        grid = GridSpec.from_json(args.grid)
    else:
        grid = GridSpec(NEURAL_TUNING_GRID if args.model in NEURAL_KINDS
                        else REFERENCE_GRIDS.get(args.model, NB_GRID))
    base = _model_params(args, cfg)
    if args.model in ALGORITHMS:
        feats = cfg.feature_settings("bow")
        table = _embedding_table(p, int(cfg.embed_dim), cfg.embeddings) if feats.representation == "embedding" \
            else None
        X = _classical_features(p, feats, table, ("train", "validation"))
        y = np.concatenate([p.labels("train"), p.labels("validation")])
        result = grid_search_cv(_classical_spec(args.model, base, feats), grid, X, y, k=args.folds, seed=cfg.seed)
    else:
        feats = cfg.feature_settings("sequence")
        arch = _architecture(args.model, p, cfg, feats, base)
        table = _embedding_table(p, arch.embed_dim, cfg.embeddings)
        result = grid_search_neural(lambda seed: build_model(arch, seed, table), grid,
                                    _encoded(p, "train", feats.max_len), _encoded(p, "validation", feats.max_len),
                                    _train_config(cfg, cfg.seed))
    result.write_csv(out / "cv_results.csv")
    summary = result.summary() | {"model": args.model}
    (out / "best_params.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    print(json.dumps({"best_params": result.best_params, "mean_accuracy": round(result.best_accuracy, 4),
                      "skipped": len(result.skipped)}, sort_keys=True))
    return EXIT_OK


def _train_one(kind: str, p: Prepared, cfg: PipelineConfig, params: dict, seed: int, snapshot=None):
    """Train one model; returns (artifact, history or None)."""
    if kind in ALGORITHMS:
        feats = cfg.feature_settings("bow")
        table = None
        if feats.representation == "embedding":
            table = _embedding_table(p, int(cfg.embed_dim), snapshot or cfg.embeddings)
        X = _classical_features(p, feats, table, ("train", "validation"))
        y = np.concatenate([p.labels("train"), p.labels("validation")])
        model = train_classical(_classical_spec(kind, params, feats), X, y, seed=seed)
        return ModelArtifact("classical", model, p.vocab, p.prep, feats, table, _metadata(p, {"train_seed": seed})), None
    feats = cfg.feature_settings("sequence")
    if feats.representation != "sequence":
        feats = FeatureSettings("sequence", feats.max_len, feats.min_freq)
    tc = _train_config(cfg, seed)
    trainset, valset = _encoded(p, "train", feats.max_len), _encoded(p, "validation", feats.max_len)
    kinds = ("bilstm", "bigru") if kind == "ensemble" else (kind,)
    archs = [_architecture(k, p, cfg, feats, params) for k in kinds]
    table = _embedding_table(p, archs[0].embed_dim, cfg.embeddings)

    def fit(arch):
        return train_neural(build_model(arch, seed, table), trainset, valset, tc)

    if len(archs) > 1 and max_workers() > 1:
        with ThreadPoolExecutor(2) as pool:
            results = list(pool.map(fit, archs))
    else:
        results = [fit(a) for a in archs]
    md = _metadata(p, {"train_config": tc.to_dict(), "train_seed": seed,
                       "embedding_source": table.init_source, "embedding_coverage": table.coverage,
                       "history": {a.kind: h.to_dict() for a, (_, h) in zip(archs, results)}})
    if kind == "ensemble":
        artifact = ModelArtifact("ensemble", [m for m, _ in results], p.vocab, p.prep, feats, None, md)
    else:
        artifact = ModelArtifact("neural", results[0][0], p.vocab, p.prep, feats, None, md)
    return artifact, [h for _, h in results]


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if args.model not in ALGORITHMS and args.model not in NEURAL_KINDS and args.model != "ensemble":
        raise UsageError(f"unknown model {args.model!r}")
    p = prepare(cfg)
    params = _model_params(args, cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    accs, first = [], None
    for r in range(args.repeats):
        artifact, histories = _train_one(args.model, p, cfg, params, cfg.seed + r, args.embedding_snapshot)
        labels, _ = artifact.predict_tokenized(p.tokens["test"])
        accs.append(float(np.mean(labels == p.labels("test"))))
        if first is None:
            first = (artifact, histories)
    artifact, histories = first
    path = art_mod.save(artifact, args.artifact or out / f"{args.model}.bin")
    if histories:
        names = ("bilstm", "bigru") if args.model == "ensemble" else (args.model,)
        for name, h in zip(names, histories):
            sub = out if len(histories) == 1 else out / name
            export_curves(h, None, sub)
    if args.export_embeddings and artifact.kind == "neural":
        emb = artifact.model.params["embedding"].values
        save_word2vec_text(EmbeddingTable(emb, True, "fine-tuned"), p.vocab, args.export_embeddings)
    summary = {"model": args.model, "artifact": str(path), "test_accuracy": accs,
               "mean": float(np.mean(accs)), "std": float(np.std(accs)), "repeats": args.repeats}
    (out / "train_summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    msg = f"{args.model}: test accuracy {summary['mean']:.4f}"
    if args.repeats > 1:
        msg += f" +/- {summary['std']:.4f} over {args.repeats} runs"
    print(msg + f"; artifact {path}")
    return EXIT_OK


def _eval_docs(artifact: ModelArtifact, args):
    cfg = resolve_config(args)
    md = artifact.metadata
    corpus = cfg.corpus or md.get("corpus")
    if not corpus or not Path(corpus).is_file():
        raise DataError(f"corpus for evaluation not found: {corpus}")
    docs = load_corpus(corpus, cfg.format)
    if md.get("corpus_fingerprint") and corpus_fingerprint(docs) != md["corpus_fingerprint"]:
        log.warning("corpus content differs from the one the model was trained on")
    s = md.get("split", {})
    seed = args.seed if args.seed is not None else s.get("seed", cfg.seed)
    sp = split_corpus(docs, s.get("test_frac", 0.2), s.get("val_frac", 0.1), s.get("stratified", True), seed)
    return {"train": sp.train, "validation": sp.validation, "test": sp.test, "all": docs}[args.split]


def _evaluate_to(artifact: ModelArtifact, docs, out: Path, svg: bool = False) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    y = np.array([int(d.label) for d in docs])
    labels, scores = artifact.predict_documents(docs)
    cm = confusion_matrix(y, labels)
    rep = classification_report(cm)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curves = roc_ovr(y, scores)
    for w in caught:
        log.warning("%s", w.message)
    cm.to_csv(out / "confusion.csv")
    report = rep.to_dict() | {"model": artifact.name, "n_samples": int(len(y)), "auc": curves.aucs()}
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=True), encoding="utf-8")
    (out / "report.txt").write_text(rep.render() + "\n", encoding="utf-8")
    export_curves(None, curves, out, svg=svg)
    return {"report": rep, "curves": curves}


def _load_artifact(path) -> ModelArtifact:
    if not Path(path).is_file():
        raise DataError(f"artifact not found: {path}")
    return art_mod.load(path)


def cmd_evaluate(args) -> int:
    artifact = _load_artifact(args.artifact)
    docs = _eval_docs(artifact, args)
    out = Path(args.out or "runs/latest")
    res = _evaluate_to(artifact, docs, out)
    print(f"{artifact.name}: accuracy {res['report'].accuracy:.4f} on {len(docs)} {args.split} documents; "
          f"reports in {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    artifact = _load_artifact(args.artifact)
    docs = _eval_docs(artifact, args)
    out = Path(args.out or "runs/latest")
    res = _evaluate_to(artifact, docs, out, svg=True)
    for name, hist in artifact.metadata.get("history", {}).items():
        h = TrainHistory(**hist)
        sub = out if len(artifact.metadata["history"]) == 1 else out / name
        export_curves(h, None, sub, svg=True)
    print(res["report"].render())
    aucs = res["curves"].aucs()
    print("AUC: " + ", ".join(f"{k} {v:.4f}" for k, v in aucs.items() if v is not None and not math.isnan(v)))
    return EXIT_OK


def cmd_predict(args) -> int:
    artifact = _load_artifact(args.artifact)
    texts = list(args.text or [])
    if args.input:
        texts += [line.rstrip("\n") for line in Path(args.input).read_text(encoding="utf-8").splitlines()
                  if line.strip()]
    if not texts:
        raise UsageError("nothing to predict: give --text or --input")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        labels, scores = artifact.predict_texts(texts)
    key = "scores" if artifact.kind == "classical" and artifact.model.spec.algorithm == "svm" else "probabilities"
    for text, label, row in zip(texts, labels, scores):
        print(json.dumps({"text": text, "label": LABEL_NAMES[int(label)],
                          key: {name: float(v) for name, v in zip(LABEL_NAMES, row)}}, ensure_ascii=False))
    return EXIT_OK


def render_comparison(rows: list[tuple[str, float]]) -> str:
    """Traditional and deep models side by side, accuracies to 4 decimals."""
    order = list(DISPLAY_NAMES)
    rows = sorted(rows, key=lambda r: order.index(r[0]) if r[0] in order else len(order))
    trad = [(DISPLAY_NAMES.get(n, n), a) for n, a in rows if n in ALGORITHMS]
    deep = [(DISPLAY_NAMES.get(n, n), a) for n, a in rows if n not in ALGORITHMS]
    height = max(len(trad), len(deep))
    w1 = max([len("Traditional Models")] + [len(n) for n, _ in trad])
    w2 = max([len("Deep Learning Models")] + [len(n) for n, _ in deep])
    lines = [f"| {'Traditional Models':<{w1}} | Accuracy | {'Deep Learning Models':<{w2}} | Accuracy |",
             f"|{'-' * (w1 + 2)}|----------|{'-' * (w2 + 2)}|----------|"]
    for i in range(height):
        tn, ta = trad[i] if i < len(trad) else ("", None)
        dn, da = deep[i] if i < len(deep) else ("", None)
        fa = f"{ta:.4f}" if ta is not None else ""
        fd = f"{da:.4f}" if da is not None else ""
        lines.append(f"| {tn:<{w1}} | {fa:>8} | {dn:<{w2}} | {fd:>8} |")
    return "\n".join(lines)


def cmd_compare(args) -> int:
    rows = []
    for path in args.artifacts:
        artifact = _load_artifact(path)
        docs = _eval_docs(artifact, args)
        labels, _ = artifact.predict_documents(docs)
        rows.append((artifact.name, float(np.mean(labels == np.array([int(d.label) for d in docs])))))
    table = render_comparison(rows)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.txt").write_text(table + "\n", encoding="utf-8")
        with open(out / "compare.csv", "w", encoding="utf-8") as fh:
            fh.write("model,accuracy\n")
            for name, acc in rows:
                fh.write(f"{name},{acc!r}\n")
    return EXIT_OK


# --- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--corpus", help="labeled corpus (.csv or .jsonl)")
    common.add_argument("--format", choices=("csv", "jsonl"))
    common.add_argument("--out", help="output directory")
    common.add_argument("--log-level", default="WARNING")

    data = _Parser(add_help=False)
    data.add_argument("--embeddings", help="pretrained vectors in word2vec text format")
    data.add_argument("--embed-dim", dest="embed_dim", type=int)
    data.add_argument("--stopwords")
    data.add_argument("--abbreviations")
    data.add_argument("--normalizer")
    data.add_argument("--features", choices=("bow", "embedding", "sequence"))
    data.add_argument("--max-len", dest="max_len", type=int)
    data.add_argument("--min-freq", dest="min_freq", type=int)
    data.add_argument("--test-frac", dest="test_frac", type=float)
    data.add_argument("--val-frac", dest="val_frac", type=float)
    data.add_argument("--no-stratify", dest="stratified", action="store_false", default=None)

    training = _Parser(add_help=False)
    training.add_argument("--batch-size", dest="batch_size", type=int)
    training.add_argument("--lr", type=float)
    training.add_argument("--epochs", type=int)
    training.add_argument("--optimizer", choices=("adam", "sgd"))
    training.add_argument("--params", help="model parameters as a JSON object")
    training.add_argument("--params-file", dest="params_file")

    parser = _Parser(prog="emoclass", description="Emotion classification of short texts.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("preprocess", parents=[common, data], help="tokenize the corpus and build the vocabulary")
    p.set_defaults(func=cmd_preprocess)

    models = ALGORITHMS + NEURAL_KINDS
    p = sub.add_parser("tune", parents=[common, data, training], help="grid search")
    p.add_argument("--model", required=True, choices=models)
    p.add_argument("--grid", help="JSON map of parameter name to candidate list")
    p.add_argument("--folds", type=int, default=10)
    p.set_defaults(func=cmd_tune, reference_best=False)

    p = sub.add_parser("train", parents=[common, data, training], help="train one model and save an artifact")
    p.add_argument("--model", required=True, choices=models + ("ensemble",))
    p.add_argument("--artifact", help="artifact path (default <out>/<model>.bin)")
    p.add_argument("--reference-best", dest="reference_best", action="store_true",
                   help="start from the published best settings for this classifier")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--embedding-snapshot", dest="embedding_snapshot",
                   help="word2vec file used for classical embedding features")
    p.add_argument("--export-embeddings", dest="export_embeddings",
                   help="write the fine-tuned embedding table (neural models)")
    p.set_defaults(func=cmd_train)

    for name, func, text in (("evaluate", cmd_evaluate, "metrics files for one artifact"),
                             ("report", cmd_report, "metrics, curves and SVG charts for one artifact")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--artifact", required=True)
        p.add_argument("--split", default="test", choices=("train", "validation", "test", "all"))
        p.set_defaults(func=func)

    p = sub.add_parser("predict", parents=[common], help="classify texts, one JSON line each")
    p.add_argument("--artifact", required=True)
    p.add_argument("--text", action="append")
    p.add_argument("--input", help="file with one text per line")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", parents=[common], help="accuracy table over several artifacts")
    p.add_argument("--artifacts", nargs="+", required=True)
    p.add_argument("--split", default="test", choices=("train", "validation", "test", "all"))
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        _check_flags(args)
        return args.func(args)
    except UsageError as exc:
        print(f"emoclass: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, NonFiniteError) as exc:
        print(f"emoclass: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvalidParams as exc:
        print(f"emoclass: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CorpusError, FeatureError, ArtifactError, MetricsError, GridError, ClassicalError,
            NeuralError, OSError) as exc:
        print(f"emoclass: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
