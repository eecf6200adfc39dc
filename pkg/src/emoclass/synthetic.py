"""Seeded generator for a small keyword-separable four-emotion corpus.

Each document mixes three or four cue words of its label with neutral filler,
so a bag-of-words model can separate the classes perfectly while sequence
models still have to learn which positions matter.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from .corpus import EmotionLabel, LabeledDocument, load_corpus

CUES = {
    EmotionLabel.ANGER: ("furious", "outraged", "livid", "infuriating", "rage", "hostile", "yelling", "irate"),
    EmotionLabel.FEAR: ("terrified", "scared", "panic", "afraid", "dread", "trembling", "nightmare", "horror"),
    EmotionLabel.JOY: ("delighted", "wonderful", "cheerful", "celebrate", "smiling", "thrilled", "sunshine", "laughing"),
    EmotionLabel.SADNESS: ("heartbroken", "lonely", "grief", "tears", "mourning", "gloomy", "miserable", "sorrow"),
}

FILLER = ("today", "morning", "train", "office", "coffee", "weekend", "street", "phone", "meeting", "dinner",
          "sister", "friend", "weather", "movie", "market", "garden", "bus", "city", "letter", "window",
          "music", "school", "kitchen", "evening", "road", "book", "game", "doctor", "news", "team")

EMOTICONS = {
    EmotionLabel.ANGER: (">:(",),
    EmotionLabel.FEAR: (":-o",),
    EmotionLabel.JOY: (":)", ":D"),
    EmotionLabel.SADNESS: (":(", ":'("),
}

SHIPPED_NAME = "synthetic_400.csv"


def generate(n_per_label: int = 100, seed: int = 0) -> list[LabeledDocument]:
    """``4 * n_per_label`` documents, interleaved by label, ids ``syn-0000`` onward."""
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n_per_label):
        for label in EmotionLabel:
            cues = list(rng.choice(CUES[label], size=int(rng.integers(3, 5)), replace=False))
            filler = list(rng.choice(FILLER, size=int(rng.integers(1, 4)), replace=False))
            words = cues + filler
            rng.shuffle(words)
            if rng.random() < 0.25:
                words.append(str(rng.choice(EMOTICONS[label])))
            text = " ".join(words)
            if rng.random() < 0.5:
                text = text[0].upper() + text[1:] + "!"
            docs.append(LabeledDocument(f"syn-{len(docs):04d}", text, label))
    return docs


def shipped_path():
    return resources.files("emoclass").joinpath("data").joinpath(SHIPPED_NAME)


def load_shipped() -> list[LabeledDocument]:
    """The 400-document corpus bundled with the package (``generate(100, seed=0)``)."""
    with resources.as_file(shipped_path()) as p:
        return load_corpus(p, format="csv")


def shipped_embeddings_path():
    """Bundled 300-d word2vec text subset covering most of the synthetic vocabulary."""
    return resources.files("emoclass").joinpath("data").joinpath("tiny_vectors.txt")
