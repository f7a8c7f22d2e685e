import pytest

from parasynth import (
    ArgumentError,
    IdentityMock,
    MonoCorpus,
    ParallelCorpus,
    Provenance,
    ReverseMock,
    SpeakerRegistry,
    UnknownSpeakerError,
    assemble_back_translation,
    assemble_forward_translation,
    assemble_speaker_back_translation,
    personalized_prompts,
    strip_source_tag,
    tag_speakers,
)


def mono(texts, lang="en"):
    return MonoCorpus.from_texts(texts, lang)


def test_back_translation_pair():
    corpus, stats = assemble_back_translation(mono(["the cat sat"]), ReverseMock("en", "de"), "<BT>")
    pair = corpus.pairs[0]
    assert (pair.source.text, pair.target.text) == ("<BT> sat cat the", "the cat sat")
    assert corpus.src_lang == "de" and corpus.tgt_lang == "en"
    assert corpus.provenance == Provenance.BT


def test_empty_inputs():
    assert len(assemble_back_translation(mono([]), ReverseMock("en", "de"))[0]) == 0
    assert len(assemble_forward_translation(mono([]), IdentityMock("en", "de"))[0]) == 0


def test_forward_translation_has_no_tag():
    corpus, _ = assemble_forward_translation(mono(["hello"]), IdentityMock("en", "ja"))
    assert (corpus.sources, corpus.targets) == (["hello"], ["hello"])
    assert corpus.provenance == Provenance.FT


def test_language_mismatch():
    with pytest.raises(ArgumentError):
        assemble_back_translation(mono(["x"], "de"), ReverseMock("en", "de"))


def test_bad_tag():
    with pytest.raises(ArgumentError):
        assemble_back_translation(mono(["x"]), ReverseMock("en", "de"), "BT tag")


def test_tag_speakers():
    corpus = ParallelCorpus.from_texts(["hello world"], ["bonjour monde"], "en", "fr", speakers=["s1"])
    tagged = tag_speakers(corpus, SpeakerRegistry({"s1"}))
    assert tagged.sources == ["<spk:s1> hello world"]
    assert tagged.targets == ["bonjour monde"]
    assert strip_source_tag(tagged).sources == corpus.sources


def test_tag_speakers_unknown():
    corpus = ParallelCorpus.from_texts(["a", "b"], ["x", "y"], "en", "fr", speakers=["s1", "s9"])
    with pytest.raises(UnknownSpeakerError) as exc:
        tag_speakers(corpus, SpeakerRegistry({"s1"}))
    assert exc.value.speaker == "s9" and exc.value.index == 1
    assert "s9" in str(exc.value) and "1" in str(exc.value)


def test_tag_speakers_empty():
    corpus = ParallelCorpus.from_texts([], [], "en", "fr")
    assert len(tag_speakers(corpus, SpeakerRegistry(set()))) == 0


def test_many_speakers_distinct_first_tokens():
    ids = [f"u{i}" for i in range(1670)]
    corpus = ParallelCorpus.from_texts(["hi"] * 1670, ["salut"] * 1670, "en", "fr", speakers=ids)
    tagged = tag_speakers(corpus, SpeakerRegistry.from_corpus(corpus))
    assert len({s.split()[0] for s in tagged.sources}) == 1670


def test_prompts():
    reg = SpeakerRegistry({"a", "b", "c"})
    assert personalized_prompts(reg, 0) == []
    assert personalized_prompts(SpeakerRegistry({"solo"}), 10) == ["<spk:solo>"] * 10
    prompts = personalized_prompts(reg, 500_000, seed=1)
    assert len(prompts) == 500_000 and set(prompts) <= set(reg.tags)
    assert personalized_prompts(reg, 20, 3) == personalized_prompts(reg, 20, 3)
    with pytest.raises(ArgumentError):
        personalized_prompts(SpeakerRegistry(set()), 1)


def test_registry_rejects_bad_ids():
    with pytest.raises(ArgumentError):
        SpeakerRegistry({"has space"})


def test_speaker_back_translation():
    reg = SpeakerRegistry({"a", "b"})
    corpus, _ = assemble_speaker_back_translation(
        mono(["one two", "three"]), ["<spk:a>", "<spk:b>"], ReverseMock("en", "de"), reg
    )
    assert corpus.sources == ["<spk:a> <BT> two one", "<spk:b> <BT> three"]
    assert [p.speaker for p in corpus.pairs] == ["a", "b"]
    assert corpus.provenance == Provenance.BT_SPEAKER
    with pytest.raises(UnknownSpeakerError):
        assemble_speaker_back_translation(mono(["x"]), ["<spk:z>"], ReverseMock("en", "de"), reg)
