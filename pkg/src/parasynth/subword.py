"""Byte-pair-encoding subword segmentation in two flavours.

``token_bpe`` works on whitespace-tokenized text. Each word is split into
characters plus an internal end-of-word sentinel; emitted pieces carry an
``@@`` continuation marker on every non-final piece.

``raw_bpe`` works on raw text. Every space becomes the meta symbol U+2581
and each word starts with it, so the segmentation is lossless even for
unusual spacing. Merges never cross a word start.

Tokens that look like ``<...>`` (tags such as ``<BT>`` or ``<spk:ID>``) are
atomic in both modes: they are never split and never contribute to merge
statistics.
"""

import heapq
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_choice, check_int, check_lines
from .errors import ArgumentError, TrainingError

MODES = frozenset({"token_bpe", "raw_bpe"})
DEFAULT_MERGES = {"token_bpe": 32000, "raw_bpe": 16000}
SENTINEL = "</w>"
MARKER = "@@"
BOUNDARY = "▁"

_ATOMIC = re.compile(r"<[^<>\s]+>")
_RAW_UNIT = re.compile(f"{BOUNDARY}[^{BOUNDARY}]*")


def is_atomic(token):
    return _ATOMIC.fullmatch(token) is not None


def _raw_units(line):
    if not line:
        return []
    return _RAW_UNIT.findall(BOUNDARY + line.replace(" ", BOUNDARY))


def _word_symbols(word, mode):
    if mode == "token_bpe":
        return tuple(word) + (SENTINEL,)
    return tuple(word)


def _merge_word(symbols, pair, merged):
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


@dataclass
class SubwordModel:
    mode: str
    merges: list = field(default_factory=list)
    vocab: frozenset = frozenset()
    continuation_marker: str = MARKER
    boundary_symbol: str = BOUNDARY

    def __post_init__(self):
        check_choice(self.mode, "mode", MODES)
        self.merges = [tuple(m) for m in self.merges]
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache = {}

    @property
    def n_merges(self):
        return len(self.merges)

    def _segment(self, symbols):
        cached = self._cache.get(symbols)
        if cached is not None:
            return cached
        key = symbols
        ranks = self._ranks
        while len(symbols) > 1:
            best = None
            best_rank = None
            for pair in zip(symbols, symbols[1:]):
                r = ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = pair, r
            if best is None:
                break
            symbols = _merge_word(symbols, best, best[0] + best[1])
        if len(self._cache) < 2**16:
            self._cache[key] = symbols
        return symbols

    def apply(self, line):
        """Segment ``line``.

        In raw_bpe mode U+2581 is reserved as the word-boundary symbol; an
        input line that already contains it comes back from :meth:`undo` with
        a space in its place.
        """
        pieces = []
        if self.mode == "token_bpe":
            for word in line.split():
                if is_atomic(word):
                    pieces.append(word)
                    continue
                syms = list(self._segment(_word_symbols(word, self.mode)))
                if syms[-1] == SENTINEL:
                    syms.pop()
                else:
                    syms[-1] = syms[-1][: -len(SENTINEL)]
                pieces.extend(s + self.continuation_marker for s in syms[:-1])
                pieces.append(syms[-1])
        else:
            for unit in _raw_units(line):
                if is_atomic(unit[1:]):
                    pieces.append(unit)
                else:
                    pieces.extend(self._segment(_word_symbols(unit, self.mode)))
        return pieces

    def undo(self, pieces):
        return undo_subword(self.mode, pieces)

    def dumps(self):
        lines = [f"{self.mode} {self.n_merges}\n"]
        lines.extend(f"{a} {b}\n" for a, b in self.merges)
        return "".join(lines)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text):
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise ArgumentError("empty subword model file")
        header = lines[0].split()
        if len(header) != 2 or header[0] not in MODES:
            raise ArgumentError(f"bad subword model header {lines[0]!r}")
        mode, n = header[0], int(header[1])
        merges = []
        for lineno, line in enumerate(lines[1:], 2):
            parts = line.split(" ")
            if len(parts) != 2 or not all(parts):
                raise ArgumentError(f"subword model line {lineno}: expected 'left right'")
            merges.append((parts[0], parts[1]))
        if len(merges) != n:
            raise ArgumentError(f"header announces {n} merges, file has {len(merges)}")
        vocab = set()
        for a, b in merges:
            vocab.update((a, b, a + b))
        return cls(mode, merges, frozenset(vocab))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def learn_subword(corpus, n_merges=None, mode="token_bpe"):
    """Learn up to ``n_merges`` merges from ``corpus`` (lines or a MonoCorpus).

    At each step the adjacent symbol pair with the highest frequency-weighted
    count is merged; equal counts go to the lexicographically smallest pair.
    Learning stops early when no pair is left.
    """
    check_choice(mode, "mode", MODES)
    if n_merges is None:
        n_merges = DEFAULT_MERGES[mode]
    n_merges = check_int(n_merges, "n_merges", min_value=0)
    lines = check_lines(corpus, "corpus")
    if not lines:
        raise TrainingError("cannot learn subwords from an empty corpus")

    counts = Counter()
    for line in lines:
        if mode == "token_bpe":
            counts.update(w for w in line.split() if not is_atomic(w))
        else:
            counts.update(u for u in _raw_units(line) if not is_atomic(u[1:]))

    items = sorted(counts.items())
    words = [_word_symbols(w, mode) for w, _ in items]
    freqs = [f for _, f in items]
    vocab = {s for w in words for s in w}

    pair_counts = defaultdict(int)
    where = defaultdict(set)
    for idx, (sym, f) in enumerate(zip(words, freqs)):
        for pair in zip(sym, sym[1:]):
            pair_counts[pair] += f
            where[pair].add(idx)
    heap = [(-c, pair) for pair, c in pair_counts.items()]
    heapq.heapify(heap)

    merges = []
    while len(merges) < n_merges:
        best = None
        while heap:
            negc, pair = heapq.heappop(heap)
            if -negc > 0 and pair_counts.get(pair, 0) == -negc:
                best = pair
                break
        if best is None:
            break
        merges.append(best)
        merged = best[0] + best[1]
        vocab.add(merged)
        touched = set()
        for idx in sorted(where.pop(best)):
            old = words[idx]
            if len(old) < 2:
                continue
            new = _merge_word(old, best, merged)
            if new == old:
                continue
            f = freqs[idx]
            for pair in zip(old, old[1:]):
                pair_counts[pair] -= f
                touched.add(pair)
            for pair in zip(new, new[1:]):
                pair_counts[pair] += f
                where[pair].add(idx)
                touched.add(pair)
            words[idx] = new
        for pair in touched:
            c = pair_counts[pair]
            if c > 0:
                heapq.heappush(heap, (-c, pair))
            else:
                pair_counts.pop(pair, None)
    return SubwordModel(mode, merges, frozenset(vocab))


def apply_subword(model, line):
    return model.apply(line)


def undo_subword(model_or_mode, pieces):
    """Join pieces back into the original line."""
    mode = getattr(model_or_mode, "mode", model_or_mode)
    check_choice(mode, "mode", MODES)
    pieces = list(pieces)
    if mode == "token_bpe":
        return " ".join(pieces).replace(MARKER + " ", "")
    text = "".join(pieces).replace(BOUNDARY, " ")
    return text[1:] if text.startswith(" ") else text


class SubwordSegmenter(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`learn_subword`.

    Parameters
    ----------
    n_merges : int or None
        Merge operations to learn; ``None`` uses 32000 for ``token_bpe`` and
        16000 for ``raw_bpe``.
    mode : {"token_bpe", "raw_bpe"}

    Attributes
    ----------
    model_ : SubwordModel
    """

    def __init__(self, n_merges=None, mode="token_bpe"):
        self.n_merges = n_merges
        self.mode = mode

    def fit(self, X, y=None):
        self.model_ = learn_subword(X, self.n_merges, self.mode)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return [self.model_.apply(line) for line in check_lines(X)]

    def inverse_transform(self, X):
        check_is_fitted(self, "model_")
        return [self.model_.undo(pieces) for pieces in X]
