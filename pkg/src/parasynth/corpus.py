"""Monolingual and parallel corpora: ingestion, cleaning, splitting, persistence.

Corpora are immutable once built. Every operation that can discard lines
returns its attrition counts next to the result so that callers (the
pipeline manifest in particular) can record them.
"""

import enum
import io
import os
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int
from .errors import AlignmentError, ArgumentError, IngestionError

# languages whose token_count is measured in characters rather than words
CHARACTER_LANGS = frozenset({"ja", "zh"})


class Provenance(str, enum.Enum):
    HUMAN = "human"
    GENERATED = "generated"
    TRANSLATED = "translated"
    BT = "bt"
    FT = "ft"
    BT_SPEAKER = "bt-speaker"

    def __str__(self):
        return self.value


def count_tokens(text, lang="en"):
    """Whitespace tokens, or non-space characters for unsegmented scripts."""
    if lang in CHARACTER_LANGS:
        return sum(1 for ch in text if not ch.isspace())
    return len(text.split())


@dataclass(frozen=True)
class Sentence:
    text: str
    lang: str = field(default="en", compare=False, repr=False)
    token_count: int = field(init=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.text, str):
            raise ArgumentError(f"sentence text must be str, got {type(self.text).__name__}")
        if "\n" in self.text or "\r" in self.text:
            raise ArgumentError(f"sentence contains a line break: {self.text!r}")
        if not self.text.strip():
            raise ArgumentError("sentence is empty after trimming")
        object.__setattr__(self, "token_count", count_tokens(self.text, self.lang))

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class MonoCorpus:
    lang: str
    domain: str = ""
    sentences: tuple = ()
    provenance: Provenance = Provenance.HUMAN

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @classmethod
    def from_texts(cls, texts, lang="en", domain="", provenance=Provenance.HUMAN):
        return cls(lang, domain, tuple(Sentence(t, lang) for t in texts), provenance)

    @property
    def texts(self):
        return [s.text for s in self.sentences]

    def replace(self, sentences=None, **changes):
        """Copy with new sentences (given as ``Sentence`` or str) and/or metadata."""
        lang = changes.get("lang", self.lang)
        if sentences is None:
            sentences = self.sentences
        sentences = tuple(s if isinstance(s, Sentence) else Sentence(s, lang) for s in sentences)
        return MonoCorpus(
            lang,
            changes.get("domain", self.domain),
            sentences,
            changes.get("provenance", self.provenance),
        )

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]


@dataclass(frozen=True)
class SentencePair:
    source: Sentence
    target: Sentence
    speaker: str | None = None

    def __post_init__(self):
        if self.speaker is not None and (not self.speaker or self.speaker != self.speaker.strip()):
            raise ArgumentError(f"invalid speaker id {self.speaker!r}")


@dataclass(frozen=True)
class ParallelCorpus:
    src_lang: str
    tgt_lang: str
    pairs: tuple = ()
    provenance: Provenance = Provenance.HUMAN

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @classmethod
    def from_texts(cls, sources, targets, src_lang="en", tgt_lang="en",
                   speakers=None, provenance=Provenance.HUMAN):
        sources, targets = list(sources), list(targets)
        if len(sources) != len(targets):
            raise AlignmentError((len(sources), len(targets)))
        if speakers is None:
            speakers = [None] * len(sources)
        else:
            speakers = list(speakers)
            if len(speakers) != len(sources):
                raise AlignmentError((len(sources), len(targets), len(speakers)))
        pairs = (
            SentencePair(Sentence(s, src_lang), Sentence(t, tgt_lang), spk)
            for s, t, spk in zip(sources, targets, speakers)
        )
        return cls(src_lang, tgt_lang, tuple(pairs), provenance)

    @property
    def sources(self):
        return [p.source.text for p in self.pairs]

    @property
    def targets(self):
        return [p.target.text for p in self.pairs]

    @property
    def speakers(self):
        """Registry of distinct speaker ids present in the corpus."""
        return frozenset(p.speaker for p in self.pairs if p.speaker is not None)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]


@dataclass(frozen=True)
class CleanStats:
    dedup: int = 0
    overlong: int = 0


# --------------------------------------------------------------------------
# reading


def _decode(data):
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestionError(
            f"invalid UTF-8 at byte offset {exc.start}", offset=exc.start
        ) from None


def read_lines(reader):
    """Return the lines of ``reader`` without terminators.

    ``reader`` may be a path, raw bytes, a binary or text file object, or an
    iterable of strings. LF terminates lines; one trailing CR per line is
    tolerated so CRLF files ingest cleanly.
    """
    if isinstance(reader, (str, os.PathLike)):
        with open(reader, "rb") as fh:
            text = _decode(fh.read())
    elif isinstance(reader, (bytes, bytearray)):
        text = _decode(bytes(reader))
    elif hasattr(reader, "read"):
        data = reader.read()
        text = _decode(data) if isinstance(data, bytes) else data
    else:
        lines = []
        for line in reader:
            if isinstance(line, bytes):
                line = _decode(line)
            lines.append(line.rstrip("\n").removesuffix("\r"))
        return lines
    if not text:
        return []
    lines = text.split("\n")
    if text.endswith("\n"):
        lines.pop()
    return [line.removesuffix("\r") for line in lines]


def _check_no_cr(lines):
    for i, line in enumerate(lines):
        if "\r" in line:
            raise IngestionError(f"line {i + 1} contains a bare carriage return")


def ingest_mono(reader, lang="en", domain="", provenance=Provenance.HUMAN):
    """Read one sentence per line.

    Returns ``(corpus, n_dropped)`` where ``n_dropped`` counts lines that were
    empty after trimming.
    """
    lines = read_lines(reader)
    _check_no_cr(lines)
    kept = [line for line in lines if line.strip()]
    corpus = MonoCorpus(lang, domain, tuple(Sentence(t, lang) for t in kept), provenance)
    return corpus, len(lines) - len(kept)


def ingest_parallel(src_reader, tgt_reader, src_lang="en", tgt_lang="en", speakers=None):
    """Read line-aligned source/target (and optional speaker) streams.

    Returns ``(corpus, n_dropped)``; a pair is dropped when either side is
    empty after trimming.
    """
    src = read_lines(src_reader)
    tgt = read_lines(tgt_reader)
    spk = read_lines(speakers) if speakers is not None else None
    counts = [len(src), len(tgt)] + ([len(spk)] if spk is not None else [])
    if len(set(counts)) != 1:
        raise AlignmentError(counts)
    _check_no_cr(src)
    _check_no_cr(tgt)
    pairs = []
    for i, (s, t) in enumerate(zip(src, tgt)):
        if not s.strip() or not t.strip():
            continue
        speaker = None
        if spk is not None:
            speaker = spk[i].strip()
            if not speaker:
                raise IngestionError(f"empty speaker id on line {i + 1}")
        pairs.append(SentencePair(Sentence(s, src_lang), Sentence(t, tgt_lang), speaker))
    return ParallelCorpus(src_lang, tgt_lang, tuple(pairs)), len(src) - len(pairs)


def read_parallel_tsv(reader, src_lang="en", tgt_lang="en"):
    """Read ``src<TAB>tgt[<TAB>speaker[<TAB>provenance]]`` rows.

    With four columns an empty speaker field means "no speaker". Returns
    ``(corpus, n_dropped)``.
    """
    rows = read_lines(reader)
    pairs = []
    provenance = None
    for i, row in enumerate(rows):
        cols = row.split("\t")
        if len(cols) not in (2, 3, 4):
            raise IngestionError(f"line {i + 1}: expected 2-4 tab-separated columns, got {len(cols)}")
        s, t = cols[0], cols[1]
        speaker = None
        if len(cols) >= 3:
            speaker = cols[2].strip() or None
            if speaker is None and len(cols) == 3:
                raise IngestionError(f"empty speaker id on line {i + 1}")
        if len(cols) == 4:
            row_prov = Provenance(cols[3].strip())
            if provenance not in (None, row_prov):
                raise IngestionError(f"line {i + 1}: mixed provenance {provenance} and {row_prov}")
            provenance = row_prov
        if not s.strip() or not t.strip():
            continue
        pairs.append(SentencePair(Sentence(s, src_lang), Sentence(t, tgt_lang), speaker))
    corpus = ParallelCorpus(src_lang, tgt_lang, tuple(pairs), provenance or Provenance.HUMAN)
    return corpus, len(rows) - len(pairs)


# --------------------------------------------------------------------------
# writing


def _open_for_write(dest):
    if isinstance(dest, (str, os.PathLike)):
        return open(dest, "wb"), True
    return dest, False


def _write_text(dest, text):
    fh, owned = _open_for_write(dest)
    try:
        data = text.encode("utf-8")
        if isinstance(fh, io.TextIOBase):
            fh.write(text)
        else:
            fh.write(data)
    finally:
        if owned:
            fh.close()


def write_mono(corpus, dest):
    """One sentence per line, UTF-8, LF terminated."""
    _write_text(dest, "".join(s.text + "\n" for s in corpus.sentences))


def write_parallel(corpus, src_dest, tgt_dest, speaker_dest=None):
    _write_text(src_dest, "".join(p.source.text + "\n" for p in corpus.pairs))
    _write_text(tgt_dest, "".join(p.target.text + "\n" for p in corpus.pairs))
    if speaker_dest is not None:
        _write_text(speaker_dest, "".join((p.speaker or "") + "\n" for p in corpus.pairs))


def write_parallel_tsv(corpus, dest):
    """Write the TSV form; synthetic corpora get speaker and provenance columns."""
    synthetic = corpus.provenance not in (Provenance.HUMAN,)
    with_speaker = synthetic or any(p.speaker is not None for p in corpus.pairs)
    rows = []
    for i, p in enumerate(corpus.pairs):
        if "\t" in p.source.text or "\t" in p.target.text:
            raise ArgumentError(f"pair {i} contains a tab and cannot be written as TSV")
        cols = [p.source.text, p.target.text]
        if with_speaker:
            cols.append(p.speaker or "")
        if synthetic:
            cols.append(corpus.provenance.value)
        rows.append("\t".join(cols) + "\n")
    _write_text(dest, "".join(rows))


# --------------------------------------------------------------------------
# transformations


def clean_indices(corpus, max_tokens=120):
    """Indices kept by :func:`clean_mono`, with the attrition counts."""
    check_int(max_tokens, "max_tokens", min_value=1)
    seen = set()
    kept = []
    dedup = overlong = 0
    for i, s in enumerate(corpus.sentences):
        key = unicodedata.normalize("NFC", s.text)
        if key in seen:
            dedup += 1
            continue
        seen.add(key)
        if s.token_count > max_tokens:
            overlong += 1
            continue
        kept.append(i)
    return kept, CleanStats(dedup=dedup, overlong=overlong)


def clean_mono(corpus, max_tokens=120):
    """Drop exact duplicates (after NFC) and sentences longer than ``max_tokens``.

    The first occurrence of a duplicate is kept with its original bytes.
    Returns ``(corpus, CleanStats)``.
    """
    kept, stats = clean_indices(corpus, max_tokens)
    return corpus.replace([corpus.sentences[i] for i in kept]), stats


def split_indices(n, first_size, seed=0):
    """Sorted index lists ``(first, rest)`` of a seeded random partition of ``range(n)``."""
    first_size = check_int(first_size, "first_size", min_value=0)
    if first_size > n:
        raise ArgumentError(f"first_size={first_size} exceeds corpus size {n}")
    rng = np.random.default_rng(seed)
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.permutation(n)[:first_size]] = True
    return np.flatnonzero(chosen).tolist(), np.flatnonzero(~chosen).tolist()


def sample_split(corpus, first_size, seed=0):
    """Partition ``corpus`` into a random subset of ``first_size`` and the rest.

    Both parts keep the original relative order. The partition depends only on
    ``(len(corpus), first_size, seed)``.
    """
    first, rest = split_indices(len(corpus), first_size, seed)
    return (
        corpus.replace([corpus.sentences[i] for i in first]),
        corpus.replace([corpus.sentences[i] for i in rest]),
    )
