import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parasynth import (
    AlignmentError,
    ArgumentError,
    IngestionError,
    MonoCorpus,
    Provenance,
    Sentence,
    clean_mono,
    ingest_mono,
    ingest_parallel,
    read_parallel_tsv,
    sample_split,
    write_mono,
    write_parallel_tsv,
)
from parasynth.corpus import count_tokens, read_lines


def test_ingest_drops_empty_lines():
    corpus, dropped = ingest_mono(["hello", "", "world"], "en")
    assert corpus.texts == ["hello", "world"]
    assert dropped == 1


def test_ingest_empty():
    corpus, dropped = ingest_mono([], "en")
    assert len(corpus) == 0 and dropped == 0


def test_ingest_large_file(tmp_path):
    path = tmp_path / "ft.txt"
    path.write_text("".join(f"line {i}\n" for i in range(50_000)), encoding="utf-8")
    corpus, dropped = ingest_mono(str(path), "en", "medical")
    assert len(corpus) == 50_000 and dropped == 0
    assert corpus.domain == "medical"
    assert corpus.provenance == Provenance.HUMAN


def test_invalid_utf8_names_offset():
    with pytest.raises(IngestionError) as exc:
        ingest_mono(b"ok\n\xff bad\n", "en")
    assert exc.value.offset == 3
    assert "3" in str(exc.value)


def test_crlf_tolerated():
    assert read_lines(b"a\r\nb\r\n") == ["a", "b"]


def test_sentence_rejects_newline():
    with pytest.raises(ArgumentError):
        Sentence("a\nb")


def test_token_count_for_cjk():
    assert count_tokens("東京タワー", "ja") == 5
    assert count_tokens("a b  c", "en") == 3


def test_clean_dedup():
    corpus = MonoCorpus.from_texts(["a b", "a b", "c"], "en")
    out, stats = clean_mono(corpus, 120)
    assert out.texts == ["a b", "c"]
    assert stats.dedup == 1


def test_clean_overlong_boundary():
    corpus = MonoCorpus.from_texts([" ".join(["x"] * 121), " ".join(["x"] * 120)], "en")
    out, stats = clean_mono(corpus, 120)
    assert len(out) == 1 and stats.overlong == 1


def test_clean_counts_match_bruteforce():
    texts = ["a", "b", "a", "c", "b", "d", "a", "e", " ".join(["z"] * 5), "f"]
    corpus = MonoCorpus.from_texts(texts, "en")
    out, stats = clean_mono(corpus, 4)
    seen, expect = set(), []
    for t in texts:
        if t not in seen and len(t.split()) <= 4:
            expect.append(t)
        seen.add(t)
    assert out.texts == expect
    assert (stats.dedup, stats.overlong) == (3, 1)
    assert len(out) == 6


def test_clean_dedups_after_nfc():
    corpus = MonoCorpus.from_texts(["café", "café"], "en")
    out, stats = clean_mono(corpus)
    assert out.texts == ["café"] and stats.dedup == 1


def test_split_sizes_and_union():
    corpus = MonoCorpus.from_texts([f"s{i}" for i in range(100_000)], "en")
    a, b = sample_split(corpus, 50_000, seed=1)
    assert len(a) == 50_000 and len(b) == 50_000
    assert sorted(a.texts + b.texts) == sorted(corpus.texts)


def test_split_edge_cases():
    corpus = MonoCorpus.from_texts(["a", "b", "c"], "en")
    a, b = sample_split(corpus, 0, seed=3)
    assert len(a) == 0 and b.texts == corpus.texts
    with pytest.raises(ArgumentError):
        sample_split(corpus, 4)


def test_split_deterministic():
    corpus = MonoCorpus.from_texts([f"s{i}" for i in range(200)], "en")
    assert sample_split(corpus, 50, 9)[0].texts == sample_split(corpus, 50, 9)[0].texts
    assert sample_split(corpus, 50, 9)[0].texts != sample_split(corpus, 50, 10)[0].texts


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 60), st.data())
def test_split_partition_property(n, data):
    k = data.draw(st.integers(0, n))
    corpus = MonoCorpus.from_texts([f"s{i}" for i in range(n)], "en")
    a, b = sample_split(corpus, k, seed=data.draw(st.integers(0, 100)))
    assert sorted(a.texts + b.texts) == sorted(corpus.texts)
    assert len(a) == k


def test_parallel_ingest():
    corpus, dropped = ingest_parallel(["a", "b", "c"], ["x", "y", "z"], "en", "fr")
    assert len(corpus) == 3 and dropped == 0


def test_parallel_alignment_error():
    with pytest.raises(AlignmentError) as exc:
        ingest_parallel(["a", "b", "c"], ["x", "y"], "en", "fr")
    assert "3 vs 2" in str(exc.value)


def test_parallel_with_speakers():
    corpus, _ = ingest_parallel(["a", "b", "c"], ["x", "y", "z"], "en", "fr", speakers=["s1", "s2", "s1"])
    assert corpus.speakers == frozenset({"s1", "s2"})


def test_tsv_roundtrip():
    corpus, _ = ingest_parallel(["a b", "c"], ["x", "y z"], "en", "fr", speakers=["s1", "s2"])
    buf = io.StringIO()
    write_parallel_tsv(corpus, buf)
    back, dropped = read_parallel_tsv(buf.getvalue().encode(), "en", "fr")
    assert dropped == 0
    assert back.sources == corpus.sources and back.targets == corpus.targets
    assert back.speakers == corpus.speakers


def test_write_mono_bytes(tmp_path):
    corpus = MonoCorpus.from_texts(["ä", "b"], "de")
    write_mono(corpus, tmp_path / "m.txt")
    assert (tmp_path / "m.txt").read_bytes() == "ä\nb\n".encode()
