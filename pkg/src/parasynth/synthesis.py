"""Assembly of synthetic parallel corpora.

* back-translation: target side is the (generated) monolingual text, source
  side is its translation prefixed with a reserved tag (``<BT>``);
* forward translation: source side is the monolingual text, no tag;
* speaker personalization: source sides carry a per-speaker tag token.

Tags are added after translation so the translator never sees them.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_int
from .corpus import ParallelCorpus, Provenance, Sentence, SentencePair
from .errors import ArgumentError, UnknownSpeakerError
from .subword import is_atomic

BT_TAG = "<BT>"
SPEAKER_TAG_FORMAT = "<spk:{id}>"


def _check_tag(tag):
    if not isinstance(tag, str) or not is_atomic(tag):
        raise ArgumentError(f"tag must be a single reserved token like <BT>, got {tag!r}")
    return tag


@dataclass(frozen=True)
class SpeakerRegistry:
    speakers: frozenset
    tag_format: str = SPEAKER_TAG_FORMAT

    def __post_init__(self):
        object.__setattr__(self, "speakers", frozenset(self.speakers))
        if "{id}" not in self.tag_format:
            raise ArgumentError("tag_format must contain '{id}'")
        tags = set()
        for spk in self.speakers:
            if not isinstance(spk, str) or not spk or any(ch.isspace() for ch in spk):
                raise ArgumentError(f"invalid speaker id {spk!r}")
            tag = _check_tag(self.tag_format.format(id=spk))
            if tag in tags:
                raise ArgumentError(f"speaker tag {tag!r} is not unique")
            tags.add(tag)
        object.__setattr__(self, "_by_tag", {self.tag(s): s for s in self.speakers})

    @classmethod
    def from_corpus(cls, corpus, tag_format=SPEAKER_TAG_FORMAT):
        return cls(corpus.speakers, tag_format)

    def tag(self, speaker):
        return self.tag_format.format(id=speaker)

    def speaker_of(self, tag):
        return self._by_tag.get(tag)

    @property
    def tags(self):
        return [self.tag(s) for s in sorted(self.speakers)]

    def __len__(self):
        return len(self.speakers)

    def __contains__(self, speaker):
        return speaker in self.speakers


def _assemble(sources, targets, src_lang, tgt_lang, speakers, provenance):
    pairs = tuple(
        SentencePair(Sentence(s, src_lang), Sentence(t, tgt_lang), spk)
        for s, t, spk in zip(sources, targets, speakers)
    )
    return ParallelCorpus(src_lang, tgt_lang, pairs, provenance)


def assemble_back_translation(mono_target, translator, tag=BT_TAG, speakers=None):
    """Pair each target sentence with ``tag + " " + translation``.

    ``translator`` translates target -> source. ``speakers`` optionally gives
    one speaker id per sentence. Returns ``(ParallelCorpus, TranslationStats)``.
    """
    _check_tag(tag)
    if mono_target.lang != translator.src_lang:
        raise ArgumentError(
            f"monolingual corpus is {mono_target.lang!r} but translator expects {translator.src_lang!r}"
        )
    targets = mono_target.texts
    translations, stats = translator.translate_batch(targets)
    sources = [f"{tag} {t}" for t in translations]
    if speakers is None:
        speakers = [None] * len(targets)
    corpus = _assemble(sources, targets, translator.tgt_lang, mono_target.lang, speakers, Provenance.BT)
    return corpus, stats


def assemble_forward_translation(mono_source, translator):
    """Pair each source sentence with its untagged translation."""
    if mono_source.lang != translator.src_lang:
        raise ArgumentError(
            f"monolingual corpus is {mono_source.lang!r} but translator expects {translator.src_lang!r}"
        )
    sources = mono_source.texts
    translations, stats = translator.translate_batch(sources)
    corpus = _assemble(
        sources, translations, mono_source.lang, translator.tgt_lang,
        [None] * len(sources), Provenance.FT,
    )
    return corpus, stats


def tag_speakers(corpus, registry, side="source"):
    """Prefix every source sentence with its speaker's tag."""
    if side != "source":
        raise ArgumentError("speaker tags are only applied to the source side")
    pairs = []
    for i, p in enumerate(corpus.pairs):
        if p.speaker is None or p.speaker not in registry:
            raise UnknownSpeakerError(p.speaker, i)
        source = Sentence(f"{registry.tag(p.speaker)} {p.source.text}", corpus.src_lang)
        pairs.append(SentencePair(source, p.target, p.speaker))
    return ParallelCorpus(corpus.src_lang, corpus.tgt_lang, tuple(pairs), corpus.provenance)


def strip_source_tag(corpus):
    """Remove the first token of every source sentence (inverse of tagging)."""
    pairs = []
    for i, p in enumerate(corpus.pairs):
        first, _, rest = p.source.text.partition(" ")
        if not is_atomic(first) or not rest:
            raise ArgumentError(f"pair {i} has no leading tag on the source side")
        pairs.append(SentencePair(Sentence(rest, corpus.src_lang), p.target, p.speaker))
    return ParallelCorpus(corpus.src_lang, corpus.tgt_lang, tuple(pairs), corpus.provenance)


def personalized_prompts(registry, n, seed=0):
    """Draw ``n`` speaker-tag prompts uniformly with replacement."""
    n = check_int(n, "n", min_value=0)
    if n == 0:
        return []
    if not len(registry):
        raise ArgumentError("cannot draw prompts from an empty speaker registry")
    tags = registry.tags
    rng = np.random.default_rng(seed)
    return [tags[i] for i in rng.integers(0, len(tags), size=n)]


def assemble_speaker_back_translation(mono_target, speaker_tags, translator, registry, tag=BT_TAG):
    """Tagged back-translation whose pairs keep their generating speaker.

    ``speaker_tags[i]`` is the prompt tag that produced sentence ``i``. The
    final source side reads ``<spk:ID> <BT> translation``.
    """
    if len(speaker_tags) != len(mono_target):
        raise ArgumentError("need one speaker tag per sentence")
    speakers = []
    for i, t in enumerate(speaker_tags):
        spk = registry.speaker_of(t)
        if spk is None:
            raise UnknownSpeakerError(t, i)
        speakers.append(spk)
    bt, stats = assemble_back_translation(mono_target, translator, tag, speakers)
    tagged = tag_speakers(bt, registry)
    return ParallelCorpus(tagged.src_lang, tagged.tgt_lang, tagged.pairs, Provenance.BT_SPEAKER), stats
