"""Tweet cleaning and tokenization.

Pipeline: :func:`clean` (HTML, URLs, punctuation) -> :func:`tokenize`
(abbreviation expansion, lowercasing, stop-word removal) -> per-token
:func:`normalize_token` (stemming / lemmatization). Emoticons from a fixed
lexicon survive every stage byte-for-byte.
"""
from __future__ import annotations

import html
import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from . import porter

NORMALIZERS = ("none", "stem", "lemma", "lemma_then_stem", "stem_then_lemma")


def _data_text(name: str) -> str:
    return resources.files("emoclass").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def read_wordlist(text: str) -> list[str]:
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


def read_pairs(text: str) -> dict[str, str]:
    table = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition("\t")
        if not sep or not value.strip():
            raise ValueError(f"line {lineno}: expected 'key<TAB>value'")
        table[key.strip().lower()] = value.strip()
    return table


@lru_cache(maxsize=None)
def default_stopwords() -> frozenset[str]:
    return frozenset(w.lower() for w in read_wordlist(_data_text("stopwords.txt")))


@lru_cache(maxsize=None)
def default_abbreviations() -> dict[str, str]:
    return read_pairs(_data_text("abbreviations.tsv"))


@lru_cache(maxsize=None)
def emoticon_lexicon() -> tuple[str, ...]:
    return tuple(read_wordlist(_data_text("emoticons.txt")))


@lru_cache(maxsize=None)
def lemma_table() -> dict[str, str]:
    return read_pairs(_data_text("lemmas.tsv"))


@lru_cache(maxsize=None)
def _emoticon_re() -> re.Pattern:
    alts = sorted(emoticon_lexicon(), key=len, reverse=True)
    # standalone only: preceded by whitespace/start, not followed by a word char
    return re.compile(r"(?<!\S)(?:" + "|".join(re.escape(e) for e in alts) + r")(?!\w)")


_TAG_RE = re.compile(r"<\s*/?\s*[A-Za-z][^<>]*>")
_URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
_WS_RE = re.compile(r"\s+")
_SHIELD_RE = re.compile("\ue000(\\d+)\ue001")


@dataclass
class PreprocessConfig:
    lowercase: bool = True
    strip_html: bool = True
    strip_urls: bool = True
    strip_punctuation: bool = True
    stopwords: frozenset = field(default_factory=default_stopwords)
    abbreviations: dict = field(default_factory=default_abbreviations)
    normalizer: str = "lemma_then_stem"
    preserve_emoticons: bool = True

    def __post_init__(self):
        self.stopwords = frozenset(w.lower() for w in self.stopwords)
        self.abbreviations = {k.lower(): v for k, v in self.abbreviations.items()}
        if self.normalizer not in NORMALIZERS:
            raise ValueError(f"normalizer must be one of {NORMALIZERS}, got {self.normalizer!r}")

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_html": self.strip_html,
            "strip_urls": self.strip_urls,
            "strip_punctuation": self.strip_punctuation,
            "stopwords": sorted(self.stopwords),
            "abbreviations": dict(sorted(self.abbreviations.items())),
            "normalizer": self.normalizer,
            "preserve_emoticons": self.preserve_emoticons,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        d = dict(d)
        if "stopwords" in d:
            d["stopwords"] = frozenset(d["stopwords"])
        return cls(**d)


@dataclass
class TokenizedDocument:
    tokens: list[str]
    emoticon_tokens: list[int] = field(default_factory=list)
    source_id: str = ""

    @property
    def empty(self) -> bool:
        return not self.tokens


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def clean(text: str, config: PreprocessConfig | None = None) -> str:
    """Strip HTML tags, URLs and punctuation; collapse whitespace.

    >>> clean("Visit <b>now</b> http://x.co!!")
    'Visit now'
    >>> clean("I'm happy :)")
    'Im happy :)'
    """
    config = config or PreprocessConfig()
    shielded: list[str] = []
    if config.preserve_emoticons:
        def shield(m):
            shielded.append(m.group(0))
            return f" \ue000{len(shielded) - 1}\ue001 "
        text = _emoticon_re().sub(shield, text)
    if config.strip_html:
        text = _TAG_RE.sub(" ", html.unescape(text))
    if config.strip_urls:
        text = _URL_RE.sub(" ", text)
    if config.strip_punctuation:
        text = "".join(ch for ch in text if not _is_punct(ch))
    if shielded:
        text = _SHIELD_RE.sub(lambda m: shielded[int(m.group(1))], text)
    return _WS_RE.sub(" ", text).strip()


def expand_abbreviations(tokens, table) -> list[str]:
    out = []
    for tok in tokens:
        expansion = table.get(tok.lower())
        if expansion is None:
            out.append(tok)
        else:
            out.extend(expansion.split())
    return out


def is_emoticon(token: str) -> bool:
    return token in _emoticon_set()


@lru_cache(maxsize=None)
def _emoticon_set() -> frozenset[str]:
    return frozenset(emoticon_lexicon())


def tokenize(text: str, config: PreprocessConfig | None = None, source_id: str = "") -> TokenizedDocument:
    """Split cleaned text on whitespace, expand abbreviations and drop stop words.

    Emoticon tokens are neither lowercased nor expanded; their positions
    are recorded in ``emoticon_tokens``.
    """
    config = config or PreprocessConfig()
    tokens: list[str] = []
    emoticons: list[int] = []
    for surface in text.split():
        if config.preserve_emoticons and is_emoticon(surface):
            emoticons.append(len(tokens))
            tokens.append(surface)
            continue
        for tok in expand_abbreviations([surface], config.abbreviations):
            if config.lowercase:
                tok = tok.lower()
            if tok.lower() in config.stopwords:
                continue
            tokens.append(tok)
    return TokenizedDocument(tokens, emoticons, source_id)


def _lemmatize_once(token: str) -> str:
    return porter.step1(lemma_table().get(token, token))


def _stem_once(token: str) -> str:
    return porter.stem(token)


def _fixpoint(fn, token: str) -> str:
    for _ in range(32):
        nxt = fn(token)
        if nxt == token:
            return token
        token = nxt
    return token


_STEPS = {
    "stem": _stem_once,
    "lemma": _lemmatize_once,
    "lemma_then_stem": lambda t: _stem_once(_lemmatize_once(t)),
    "stem_then_lemma": lambda t: _lemmatize_once(_stem_once(t)),
}


def normalize_token(token: str, mode: str = "lemma_then_stem") -> str:
    """Reduce a token to its root form.

    Rules are iterated to a fixed point so the result is idempotent (a single
    Porter pass is not: ``agreed -> agre -> agr``). Emoticons and tokens that
    are not lowercase ASCII words pass through unchanged.
    """
    if mode not in NORMALIZERS:
        raise ValueError(f"unknown normalizer {mode!r}")
    if mode == "none" or not (token.isascii() and token.isalpha() and token.islower()):
        return token
    return _fixpoint(_STEPS[mode], token)


def preprocess(text: str, config: PreprocessConfig | None = None, source_id: str = "") -> TokenizedDocument:
    """Full pipeline for one raw document."""
    config = config or PreprocessConfig()
    doc = tokenize(clean(text, config), config, source_id)
    emoticon_set = set(doc.emoticon_tokens)
    tokens, emoticons = [], []
    for i, tok in enumerate(doc.tokens):
        if i in emoticon_set:
            emoticons.append(len(tokens))
            tokens.append(tok)
            continue
        tok = normalize_token(tok, config.normalizer)
        if tok and tok.lower() not in config.stopwords:
            tokens.append(tok)
    return TokenizedDocument(tokens, emoticons, source_id)


def preprocess_corpus(docs, config: PreprocessConfig | None = None) -> list[TokenizedDocument]:
    config = config or PreprocessConfig()
    return [preprocess(d.text, config, d.id) for d in docs]
