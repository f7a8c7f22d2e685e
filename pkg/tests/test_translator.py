import json

import httpx
import pytest

from parasynth import (
    ArgumentError,
    DictionaryMock,
    IdentityMock,
    RemoteTranslator,
    ReverseMock,
    TransportError,
    make_translator,
    translate_batch,
)


def test_mocks():
    assert translate_batch(IdentityMock("en", "de"), ["a b"])[0] == ["a b"]
    assert translate_batch(ReverseMock("en", "de"), ["the cat sat"])[0] == ["sat cat the"]
    mock = DictionaryMock("en", "fr", {"the": "le", "cat": "chat"})
    assert translate_batch(mock, ["the cat sat"])[0] == ["le chat sat"]


def test_empty_output_replaced_and_counted():
    mock = DictionaryMock("en", "fr", {"x": ""}, placeholder="<empty>")
    out, stats = mock.translate_batch(["x", "y"])
    assert out == ["<empty>", "y"]
    assert stats.empty == 1 and stats.lines == 2
    out, _ = DictionaryMock("en", "fr", {"x": ""}).translate_batch(["x"])
    assert out == ["x"]


def test_make_translator():
    assert isinstance(make_translator("reverse_mock", "en", "de"), ReverseMock)
    with pytest.raises(ArgumentError):
        make_translator("nope", "en", "de")


def test_remote_order_and_payload(stub_service):
    t = RemoteTranslator("en", "de", stub_service.url, batch_size=3, max_in_flight=4)
    lines = [f"a{i} b{i}" for i in range(10)]
    out, stats = t.translate_batch(lines)
    assert out == [f"b{i} a{i}" for i in range(10)]
    assert len(stub_service.requests) == 4
    path, body = stub_service.requests[0]
    assert path == "/translate"
    assert set(body) == {"src_lang", "tgt_lang", "beam", "length_norm", "lines"}
    assert body["beam"] == 12 and body["length_norm"] == 1.0


def test_remote_retries_transient(stub_service):
    stub_service.failures = [500, 502]
    t = RemoteTranslator("en", "de", stub_service.url, backoff=0.001)
    assert t.translate_batch(["a b"])[0] == ["b a"]


def test_remote_client_error_not_retried(stub_service):
    stub_service.failures = [400]
    t = RemoteTranslator("en", "de", stub_service.url, backoff=0.001)
    with pytest.raises(TransportError) as exc:
        t.translate_batch(["a b"])
    assert len(stub_service.requests) == 1
    assert exc.value.indices == [0]
    assert "stub failure 400" in str(exc.value)


def test_remote_failure_reports_untranslated_indices():
    def handler(request):
        body = json.loads(request.content)
        if "bad" in body["lines"]:
            return httpx.Response(503, json={"error": "overloaded"})
        return httpx.Response(200, json={"translations": body["lines"]})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    t = RemoteTranslator("en", "de", "http://mt", client=client, batch_size=2, retries=2, backoff=0.0)
    with pytest.raises(TransportError) as exc:
        t.translate_batch(["a", "b", "bad", "c", "d"])
    assert exc.value.indices == [2, 3]
    assert exc.value.retries == 2


def test_backoff_schedule(monkeypatch):
    sleeps = []
    from parasynth import _http

    def handler(request):
        return httpx.Response(503, json={"error": "busy"})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    with pytest.raises(TransportError):
        _http.post_json(client, "http://x/translate", {}, retries=3, backoff=0.5, sleep=sleeps.append)
    assert sleeps == [0.5, 1.0, 2.0]


def test_malformed_response():
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1})))
    t = RemoteTranslator("en", "de", "http://mt", client=client)
    with pytest.raises(TransportError):
        t.translate_batch(["a"])


def test_url_from_environment(monkeypatch, stub_service):
    monkeypatch.setenv("PARASYNTH_MT_URL", stub_service.url)
    assert RemoteTranslator("en", "de").translate_batch(["x y"])[0] == ["y x"]
    monkeypatch.delenv("PARASYNTH_MT_URL")
    with pytest.raises(ArgumentError):
        RemoteTranslator("en", "de")
