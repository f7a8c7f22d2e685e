"""Rule-based tokenization, detokenization and truecasing.

The tokenizer implements a documented subset of the Moses rules:

* whitespace runs collapse to one space;
* every character that is not alphanumeric, ``.``, ``'``, ``,`` or ``-`` is
  split off as its own token (hyphens are never split);
* commas split unless they sit between two digits;
* apostrophes follow the per-language Moses conventions (``en``: clitic
  attaches rightwards, ``don't -> don 't``; ``fr``: elision attaches
  leftwards, ``l'avenir -> l' avenir``; ``de``: always split);
* a word-final run of two or more periods splits as one token; a single
  word-final period splits unless the word is an abbreviation (contains an
  inner period, is a single capital letter, or is a known prefix).

Japanese text is passed through untouched by both directions.
"""

import re
from collections import defaultdict
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_choice, check_lines, check_token_lists
from .errors import ArgumentError

RULE_LANGS = frozenset({"en", "fr", "de"})
SUPPORTED_LANGS = RULE_LANGS | {"ja"}

_ALPHA = r"[^\W\d_]"
_NOT_ALPHA = r"[\W\d_]"
_NOT_ALNUM = r"[\W_]"

_SPLIT_SYMBOLS = re.compile(r"([^\w\s.',\-]|_)")
_COMMA_LEFT = re.compile(r"(\D),")
_COMMA_RIGHT = re.compile(r",(\D)")
_MULTI_DOT = re.compile(r"^(.*?[^.])(\.{2,})$")

_APOSTROPHE_RULES = {
    "en": [
        (re.compile(rf"({_NOT_ALPHA})'({_NOT_ALPHA})"), r"\1 ' \2"),
        (re.compile(rf"({_NOT_ALNUM})'({_ALPHA})"), r"\1 ' \2"),
        (re.compile(rf"({_ALPHA})'({_NOT_ALPHA})"), r"\1 ' \2"),
        (re.compile(rf"({_ALPHA})'({_ALPHA})"), r"\1 '\2"),
        (re.compile(r"(\d)'(s)"), r"\1 '\2"),
    ],
    "fr": [
        (re.compile(rf"({_NOT_ALPHA})'({_NOT_ALPHA})"), r"\1 ' \2"),
        (re.compile(rf"({_NOT_ALPHA})'({_ALPHA})"), r"\1 ' \2"),
        (re.compile(rf"({_ALPHA})'({_NOT_ALPHA})"), r"\1 ' \2"),
        (re.compile(rf"({_ALPHA})'({_ALPHA})"), r"\1' \2"),
    ],
    "de": [
        (re.compile(r"'"), " ' "),
    ],
}

NONBREAKING_PREFIXES = {
    "en": frozenset({"Mr", "Mrs", "Ms", "Dr", "Prof", "St", "Jr", "Sr", "Mt", "Gen", "Col", "Lt", "Sgt", "Capt", "Rev", "Hon"}),
    "fr": frozenset({"M", "Mme", "Mlle", "Dr", "Pr", "St", "Ste"}),
    "de": frozenset({"Hr", "Fr", "Dr", "Prof", "St", "bzw", "usw", "vgl", "ca", "Nr"}),
}

_CLOSERS = re.compile(r"[.,!?;:)\]}%]+")
_OPENERS = frozenset({"(", "[", "{", "$", "¿", "¡"})


def _check_lang(lang):
    if lang not in SUPPORTED_LANGS:
        raise ArgumentError(f"unsupported language code {lang!r}; expected one of {sorted(SUPPORTED_LANGS)}")


def _split_period(word, lang):
    m = _MULTI_DOT.match(word)
    if m:
        return [m.group(1), m.group(2)]
    if len(word) < 2 or not word.endswith(".") or word[-2] == ".":
        return [word]
    prefix = word[:-1]
    if "." in prefix and re.search(_ALPHA, prefix):
        return [word]
    if len(prefix) == 1 and prefix.isalpha() and prefix.isupper():
        return [word]
    if prefix in NONBREAKING_PREFIXES.get(lang, ()):
        return [word]
    return [prefix, "."]


def tokenize(text, lang="en"):
    """Split ``text`` into tokens following the rule subset described above."""
    _check_lang(lang)
    if lang == "ja":
        return [text] if text.strip() else []
    text = " ".join(text.split())
    if not text:
        return []
    s = f" {text} "
    s = _SPLIT_SYMBOLS.sub(r" \1 ", s)
    s = _COMMA_LEFT.sub(r"\1 , ", s)
    s = _COMMA_RIGHT.sub(r" , \1", s)
    for pattern, repl in _APOSTROPHE_RULES[lang]:
        s = pattern.sub(repl, s)
    tokens = []
    for word in s.split():
        tokens.extend(_split_period(word, lang))
    return tokens


def detokenize(tokens, lang="en"):
    """Join tokens back into running text; the inverse spacing of :func:`tokenize`."""
    _check_lang(lang)
    tokens = list(tokens)
    if lang == "ja":
        return " ".join(tokens)
    out = []
    sep = ""
    in_quote = False
    for tok in tokens:
        if _CLOSERS.fullmatch(tok):
            out.append(tok)
            sep = " "
        elif tok in _OPENERS:
            out.append(sep + tok)
            sep = ""
        elif tok == '"':
            if in_quote:
                out.append(tok)
                sep = " "
            else:
                out.append(sep + tok)
                sep = ""
            in_quote = not in_quote
        elif lang == "en" and out and len(tok) > 1 and tok[0] == "'" and tok[1].isalpha():
            out.append(tok)
            sep = " "
        elif lang == "fr" and len(tok) > 1 and tok[-1] == "'" and tok[-2].isalpha():
            out.append(sep + tok)
            sep = ""
        else:
            out.append(sep + tok)
            sep = " "
    return "".join(out)


# --------------------------------------------------------------------------
# truecasing


@dataclass
class TruecaseModel:
    """Surface-form counts per lowercased token.

    Only non-sentence-initial occurrences are counted, so every stored count
    is positive.
    """

    forms: dict = field(default_factory=dict)

    @property
    def best_form(self):
        return {key: _argmax_form(counts) for key, counts in self.forms.items()}

    @property
    def total_tokens(self):
        return sum(sum(c.values()) for c in self.forms.values())

    def best(self, token):
        counts = self.forms.get(token.lower())
        return _argmax_form(counts) if counts else None

    def __len__(self):
        return len(self.forms)

    def dumps(self):
        lines = []
        for key in sorted(self.forms):
            for surface in sorted(self.forms[key]):
                lines.append(f"{surface}\t{self.forms[key][surface]}\n")
        return "".join(lines)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text):
        forms = defaultdict(dict)
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            surface, sep, count = line.rpartition("\t")
            if not sep or not surface:
                raise ArgumentError(f"truecase model line {lineno}: expected surface<TAB>count")
            forms[surface.lower()][surface] = int(count)
        return cls(dict(forms))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def _argmax_form(counts):
    # highest count, then lexicographically smallest surface
    return min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def train_truecaser(corpus):
    """Count surface forms of every token that is not sentence-initial."""
    forms = defaultdict(lambda: defaultdict(int))
    for tokens in check_token_lists(corpus, "corpus"):
        for tok in tokens[1:]:
            forms[tok.lower()][tok] += 1
    return TruecaseModel({k: dict(v) for k, v in forms.items()})


def truecase(model, tokens):
    """Rewrite the first token to its preferred casing; the rest pass through."""
    tokens = list(tokens)
    if tokens:
        best = model.best(tokens[0])
        if best is not None:
            tokens[0] = best
    return tokens


def detruecase(tokens):
    """Uppercase the first alphabetic character of the first token."""
    tokens = list(tokens)
    if tokens:
        first = tokens[0]
        for i, ch in enumerate(first):
            if ch.isalpha():
                tokens[0] = first[:i] + ch.upper() + first[i + 1:]
                break
    return tokens


# --------------------------------------------------------------------------
# estimator wrappers


class MosesTokenizer(TransformerMixin, BaseEstimator):
    """Stateless tokenizer usable inside scikit-learn pipelines.

    ``transform`` maps lines to token lists, ``inverse_transform`` maps token
    lists back to lines.
    """

    def __init__(self, lang="en"):
        self.lang = lang

    def fit(self, X=None, y=None):
        _check_lang(self.lang)
        return self

    def transform(self, X):
        _check_lang(self.lang)
        return [tokenize(line, self.lang) for line in check_lines(X)]

    def inverse_transform(self, X):
        _check_lang(self.lang)
        return [detokenize(tokens, self.lang) for tokens in X]


class Truecaser(TransformerMixin, BaseEstimator):
    """Learns preferred token casing from tokenized text.

    Parameters
    ----------
    output : {"auto", "text", "tokens"}
        Shape of ``transform`` output. ``"auto"`` mirrors the input: strings
        come back as space-joined strings, token lists as token lists.

    Attributes
    ----------
    model_ : TruecaseModel
    """

    def __init__(self, output="auto"):
        self.output = output

    def fit(self, X, y=None):
        check_choice(self.output, "output", {"auto", "text", "tokens"})
        self.model_ = train_truecaser(X)
        return self

    def _emit(self, X, fn):
        check_choice(self.output, "output", {"auto", "text", "tokens"})
        X = list(getattr(X, "texts", X))
        out = []
        for item in X:
            as_text = isinstance(getattr(item, "text", item), str)
            tokens = fn(check_token_lists([item])[0])
            if self.output == "text" or (self.output == "auto" and as_text):
                out.append(" ".join(tokens))
            else:
                out.append(tokens)
        return out

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self._emit(X, lambda toks: truecase(self.model_, toks))

    def inverse_transform(self, X):
        return self._emit(X, detruecase)
