"""Token dictionaries and bag-of-token change features.

A dictionary is the ordered union of a language's separators, its
keywords, and the top-n most frequent remaining corpus words. A
commit's composite change string (all added and deleted lines of all
its diffs, concatenated) is tokenized by greedy longest-match and
counted against the dictionary; five surface metrics are appended, so
the model input width is D + 5 (116 for the Java defaults).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Commit, CommitCorpus
from .ioutil import DataError, read_json, write_json

_WORD_CHARS = frozenset("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_$")

JAVA_SEPARATORS: tuple[str, ...] = (
    "(", ")", "{", "}", "[", "]", ";", ",", ".", "...", "@", "::",
    "=", ">", "<", "!", "~", "?", ":", "->",
    "==", ">=", "<=", "!=", "&&", "||", "++", "--",
    "+", "-", "*", "/", "&", "|", "^", "%", "<<", ">>", ">>>",
    "+=", "-=", "*=", "/=", "&=", "|=", "^=", "%=", "<<=", ">>=", ">>>=",
)

JAVA_KEYWORDS: tuple[str, ...] = (
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char",
    "class", "const", "continue", "default", "do", "double", "else", "enum",
    "extends", "final", "finally", "float", "for", "goto", "if", "implements",
    "import", "instanceof", "int", "interface", "long", "native", "new",
    "package", "private", "protected", "public", "return", "short", "static",
    "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "try", "void", "volatile", "while",
    "true", "false", "null",
)

PYTHON_KEYWORDS: tuple[str, ...] = (
    "False", "None", "True", "and", "as", "assert", "async", "await", "break",
    "class", "continue", "def", "del", "elif", "else", "except", "finally",
    "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
)

LANGUAGE_SEPARATORS: dict[str, tuple[str, ...]] = {"java": JAVA_SEPARATORS}
LANGUAGE_KEYWORDS: dict[str, tuple[str, ...]] = {
    "java": JAVA_KEYWORDS,
    "python": PYTHON_KEYWORDS,
}

SURFACE_FEATURES: tuple[str, ...] = (
    "files_touched", "lines_added", "lines_deleted", "whitespace_count", "total_tokens",
)

# default model input width for Java: 50 separators + 53 keywords + 8
# frequent words + 5 surface metrics = 116
DEFAULT_MODEL_WIDTH = 116


def default_separators(language: str) -> tuple[str, ...]:
    return LANGUAGE_SEPARATORS.get(language, JAVA_SEPARATORS)


def default_keywords(language: str) -> tuple[str, ...]:
    return LANGUAGE_KEYWORDS.get(language, ())


def default_top_n(language: str, model_width: int = DEFAULT_MODEL_WIDTH) -> int:
    fixed = len(default_separators(language)) + len(default_keywords(language))
    return max(0, model_width - len(SURFACE_FEATURES) - fixed)


@dataclass(frozen=True)
class TokenDictionary:
    """Maps tokens to feature indices: separators, then keywords, then
    frequent words. Index assignment is deterministic."""

    language: str
    separators: tuple[str, ...]
    keywords: tuple[str, ...]
    frequent_words: tuple[str, ...]

    def __post_init__(self):
        ordered = list(self.separators) + list(self.keywords) + list(self.frequent_words)
        if len(set(ordered)) != len(ordered):
            raise DataError("dictionary entries must be pairwise disjoint")
        object.__setattr__(self, "_index", {tok: i for i, tok in enumerate(ordered)})
        # separators sorted longest-first for greedy matching
        object.__setattr__(
            self, "_sep_by_len", tuple(sorted(self.separators, key=len, reverse=True))
        )

    @property
    def size(self) -> int:
        return len(self.separators) + len(self.keywords) + len(self.frequent_words)

    def index_of(self, token: str) -> int | None:
        return self._index.get(token)

    def tokens(self) -> tuple[str, ...]:
        return self.separators + self.keywords + self.frequent_words

    def to_json(self, path: str) -> None:
        write_json(
            path,
            {
                "language": self.language,
                "separators": list(self.separators),
                "keywords": list(self.keywords),
                "frequent_words": list(self.frequent_words),
                "indices": {tok: i for i, tok in enumerate(self.tokens())},
            },
        )

    @classmethod
    def from_json(cls, path: str) -> "TokenDictionary":
        raw = read_json(path)
        return cls(
            language=raw["language"],
            separators=tuple(raw["separators"]),
            keywords=tuple(raw["keywords"]),
            frequent_words=tuple(raw["frequent_words"]),
        )


def tokenize(text: str, dictionary: TokenDictionary) -> tuple[list[str], int]:
    """Greedy longest-match tokenization.

    Returns (tokens, whitespace character count). Words are maximal
    runs of [A-Za-z0-9_$]; separators match longest-first from the
    dictionary; any other character becomes a single-char token.
    """
    tokens: list[str] = []
    whitespace = 0
    seps = dictionary._sep_by_len
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            whitespace += 1
            i += 1
            continue
        if ch in _WORD_CHARS:
            j = i + 1
            while j < n and text[j] in _WORD_CHARS:
                j += 1
            tokens.append(text[i:j])
            i = j
            continue
        for sep in seps:
            if text.startswith(sep, i):
                tokens.append(sep)
                i += len(sep)
                break
        else:
            tokens.append(ch)
            i += 1
    return tokens, whitespace


def composite_change_string(commit: Commit) -> str:
    """All added and deleted lines of all the commit's diffs, in order.
    Deletions count as change too."""
    parts: list[str] = []
    for d in commit.file_diffs:
        parts.extend(d.added_lines)
        parts.extend(d.deleted_lines)
    return "\n".join(parts)


def build_dictionary(corpus: CommitCorpus, language: str, top_n: int) -> TokenDictionary:
    """Fixed separators + fixed keywords + the corpus's top_n most
    frequent remaining words (ties broken lexicographically)."""
    separators = default_separators(language)
    keywords = default_keywords(language)
    fixed = set(separators) | set(keywords)

    seed_dict = TokenDictionary(language, separators, keywords, ())
    counts: Counter[str] = Counter()
    n_diffs = 0
    for commit in corpus.commits:
        for d in commit.file_diffs:
            if d.language != language:
                continue
            n_diffs += 1
            for line in list(d.added_lines) + list(d.deleted_lines):
                toks, _ = tokenize(line, seed_dict)
                for t in toks:
                    if t not in fixed and t[0] in _WORD_CHARS:
                        counts[t] += 1
    if n_diffs == 0:
        raise DataError(f"corpus contains no {language} diffs")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    frequent = tuple(tok for tok, _ in ranked[:top_n])
    return TokenDictionary(language, separators, keywords, frequent)


@dataclass(frozen=True)
class ChangeFeatures:
    """Raw bag-of-token counts plus surface metrics for one commit.

    ``transformed`` applies log(1+x) to every slot; standardization
    statistics live with the trained model, not here.
    """

    token_counts: np.ndarray  # (D,) non-negative ints
    files_touched: int
    lines_added: int
    lines_deleted: int
    whitespace_count: int
    total_tokens: int

    @property
    def raw(self) -> np.ndarray:
        surface = np.array(
            [self.files_touched, self.lines_added, self.lines_deleted,
             self.whitespace_count, self.total_tokens],
            dtype=np.float64,
        )
        return np.concatenate([self.token_counts.astype(np.float64), surface])

    @property
    def transformed(self) -> np.ndarray:
        return np.log1p(self.raw)

    @property
    def width(self) -> int:
        return self.token_counts.shape[0] + len(SURFACE_FEATURES)


def featurize(commit: Commit, dictionary: TokenDictionary) -> ChangeFeatures:
    """Count dictionary tokens over the commit's composite change
    string and fill the surface metrics. Pure function."""
    counts = np.zeros(dictionary.size, dtype=np.int64)
    text = composite_change_string(commit)
    tokens, whitespace = tokenize(text, dictionary)
    for tok in tokens:
        idx = dictionary.index_of(tok)
        if idx is not None:
            counts[idx] += 1
    return ChangeFeatures(
        token_counts=counts,
        files_touched=len(commit.file_diffs),
        lines_added=commit.lines_added(),
        lines_deleted=commit.lines_deleted(),
        whitespace_count=whitespace,
        total_tokens=len(tokens),
    )


def features_from_diffs(diffs, dictionary: TokenDictionary) -> ChangeFeatures:
    """Featurize a bare diff list (e.g. a patch file) without a Commit."""
    pseudo = Commit(commit_id="", author_id="", project_id="", author_time=0, file_diffs=tuple(diffs))
    return featurize(pseudo, dictionary)


def feature_names(dictionary: TokenDictionary) -> list[str]:
    return list(dictionary.tokens()) + list(SURFACE_FEATURES)


# feature-record (de)serialization for features.ndjson


def features_to_record(commit: Commit, feats: ChangeFeatures) -> dict:
    nz = np.nonzero(feats.token_counts)[0]
    return {
        "commit": commit.commit_id,
        "author": commit.author_id,
        "project": commit.project_id,
        "token_counts": [[int(i), int(feats.token_counts[i])] for i in nz],
        "files_touched": feats.files_touched,
        "lines_added": feats.lines_added,
        "lines_deleted": feats.lines_deleted,
        "whitespace_count": feats.whitespace_count,
        "total_tokens": feats.total_tokens,
    }


def features_from_record(rec: dict, dict_size: int) -> ChangeFeatures:
    counts = np.zeros(dict_size, dtype=np.int64)
    for i, c in rec["token_counts"]:
        counts[int(i)] = int(c)
    return ChangeFeatures(
        token_counts=counts,
        files_touched=int(rec["files_touched"]),
        lines_added=int(rec["lines_added"]),
        lines_deleted=int(rec["lines_deleted"]),
        whitespace_count=int(rec["whitespace_count"]),
        total_tokens=int(rec["total_tokens"]),
    )
