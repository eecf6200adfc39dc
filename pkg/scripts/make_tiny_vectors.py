"""Regenerate the bundled 300-d embedding subset for the synthetic corpus.

Cue words sit near a per-label direction, filler words near the origin.
A few filler tokens are left out on purpose so coverage accounting has
missing rows to report.

    python3 scripts/make_tiny_vectors.py
"""
from pathlib import Path

import numpy as np

from emoclass.synthetic import CUES, FILLER
from emoclass.textprep import PreprocessConfig, normalize_token

OUT = Path(__file__).resolve().parents[1] / "src" / "emoclass" / "data" / "tiny_vectors.txt"
LEFT_OUT = {"bus", "road", "letter", "garden", "kitchen"}


def main():
    rng = np.random.default_rng(2024)
    mode = PreprocessConfig().normalizer
    centers = rng.normal(size=(len(CUES), 300)) * 0.2
    rows = {}
    for k, label in enumerate(sorted(CUES)):
        for word in CUES[label]:
            rows[normalize_token(word, mode)] = centers[k] + rng.normal(size=300) * 0.05
    for word in FILLER:
        if word not in LEFT_OUT:
            rows[normalize_token(word, mode)] = rng.normal(size=300) * 0.05
    # distractor rows that no corpus token maps to
    for word in ("zebra", "quantum", "violin"):
        rows[word] = rng.normal(size=300) * 0.05
    with open(OUT, "w", encoding="utf-8") as fh:
        fh.write(f"{len(rows)} 300\n")
        for word in sorted(rows):
            fh.write(word + " " + " ".join(f"{v:.4f}" for v in rows[word]) + "\n")
    print(f"wrote {len(rows)} vectors to {OUT}")


if __name__ == "__main__":
    main()
