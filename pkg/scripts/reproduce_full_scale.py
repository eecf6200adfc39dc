"""Full-scale reproduction run on the Kaggle emotion corpus with 300-d pretrained vectors.

    python scripts/reproduce_full_scale.py --corpus emotions.csv --embeddings vectors.txt --out runs/full

Falls back to EMOCLASS_KAGGLE_CORPUS / EMOCLASS_EMBEDDINGS when the flags are
omitted. Classical models are tuned by 10-fold grid search on embedding
features, then every model is trained and scored on the held-out test split.
Exit status is 0 only when every check in ``judge`` passes.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from emoclass.classical import ALGORITHMS
from emoclass.cli import main as cli
from emoclass.neural import KINDS

REFERENCE = {"cnn": 0.8601, "lstm": 0.8619, "bilstm": 0.8630, "gru": 0.8645, "bigru": 0.8753, "ensemble": 0.8766}
WINDOW = 0.03
DEEP = KINDS + ("ensemble",)


def _call(*argv) -> None:
    code = cli([str(a) for a in argv])
    if code != 0:
        raise SystemExit(f"emoclass {argv[0]} failed with exit code {code}")


def reproduce(corpus, embeddings, out, tune: bool = True, epochs: int = 35, seed: int = 0) -> dict:
    out = Path(out)
    common = ["--corpus", corpus, "--embeddings", embeddings, "--seed", seed]
    accs = {}
    for algo in ALGORITHMS:
        d = out / algo
        extra = ["--features", "embedding"]
        if tune:
            _call("tune", "--model", algo, "--folds", 10, "--out", d / "tune", *common, *extra)
            best = json.loads((d / "tune" / "best_params.json").read_text())["best_params"]
            extra += ["--params", json.dumps(best)]
        else:
            extra += ["--reference-best"]
        _call("train", "--model", algo, "--out", d, *common, *extra)
        accs[algo] = json.loads((d / "train_summary.json").read_text())["mean"]
    for kind in DEEP:
        d = out / kind
        _call("train", "--model", kind, "--out", d, "--batch-size", 16, "--lr", 0.001, "--epochs", epochs, *common)
        accs[kind] = json.loads((d / "train_summary.json").read_text())["mean"]
    _call("compare", "--artifacts", *[out / m / f"{m}.bin" for m in ALGORITHMS + DEEP], "--out", out)
    (out / "accuracies.json").write_text(json.dumps(accs, indent=2, sort_keys=True), encoding="utf-8")
    return accs


def judge(accs: dict) -> list[str]:
    """Failed checks; empty when the run matches the reference pattern."""
    failures = []
    for name, ref in REFERENCE.items():
        if name not in accs:
            failures.append(f"{name}: missing")
        elif abs(accs[name] - ref) > WINDOW:
            failures.append(f"{name}: {accs[name]:.4f} is outside {ref:.4f} +/- {WINDOW}")
    classical = [accs[a] for a in ALGORITHMS if a in accs]
    deep = [accs[k] for k in DEEP if k in accs]
    if classical and deep and min(deep) <= max(classical):
        failures.append(f"ordering: weakest deep model {min(deep):.4f} <= best classical {max(classical):.4f}")
    return failures


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", default=os.environ.get("EMOCLASS_KAGGLE_CORPUS"))
    ap.add_argument("--embeddings", default=os.environ.get("EMOCLASS_EMBEDDINGS"))
    ap.add_argument("--out", default="runs/reproduction")
    ap.add_argument("--epochs", type=int, default=35)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--no-tune", dest="tune", action="store_false",
                    help="use the published best classical settings instead of grid search")
    args = ap.parse_args(argv)
    if not args.corpus or not args.embeddings:
        ap.error("need --corpus and --embeddings (or EMOCLASS_KAGGLE_CORPUS and EMOCLASS_EMBEDDINGS)")
    accs = reproduce(args.corpus, args.embeddings, args.out, args.tune, args.epochs, args.seed)
    failures = judge(accs)
    for line in failures:
        print("FAIL", line)
    print("reproduction", "FAILED" if failures else "PASSED")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
