"""Machine translation backends used for back- and forward translation.

Three deterministic mocks cover testing and desk-scale runs; the remote
client talks to a ``POST /translate`` service and reassembles concurrently
issued batches strictly in input order.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import httpx

from ._http import post_json
from ._validation import check_int, check_lines
from .errors import ArgumentError, TransportError

KINDS = frozenset({"remote", "dictionary_mock", "reverse_mock", "identity_mock"})


@dataclass(frozen=True)
class TranslationStats:
    lines: int = 0
    empty: int = 0


class TranslatorBackend:
    """Base class: subclasses implement :meth:`_translate` on a list of str."""

    kind = None

    def __init__(self, src_lang, tgt_lang, placeholder=None):
        self.src_lang = src_lang
        self.tgt_lang = tgt_lang
        # None copies the source line; a string is used verbatim
        self.placeholder = placeholder

    def _translate(self, lines):
        raise NotImplementedError

    def translate_batch(self, lines):
        """Translate ``lines``; returns ``(translations, TranslationStats)``.

        Empty translations are replaced by the placeholder and counted.
        """
        lines = check_lines(lines, "lines")
        out = list(self._translate(lines))
        if len(out) != len(lines):
            raise TransportError(
                f"backend returned {len(out)} translations for {len(lines)} lines",
                indices=range(len(lines)),
            )
        empty = 0
        for i, text in enumerate(out):
            if not text.strip():
                empty += 1
                out[i] = lines[i] if self.placeholder is None else self.placeholder
        return out, TranslationStats(len(lines), empty)

    def __repr__(self):
        return f"{type(self).__name__}({self.src_lang!r}->{self.tgt_lang!r})"


class IdentityMock(TranslatorBackend):
    kind = "identity_mock"

    def _translate(self, lines):
        return list(lines)


class ReverseMock(TranslatorBackend):
    """Reverses the whitespace tokens of each line; an involution."""

    kind = "reverse_mock"

    def _translate(self, lines):
        return [" ".join(reversed(line.split())) for line in lines]


class DictionaryMock(TranslatorBackend):
    """Token-by-token lookup; unknown tokens are copied."""

    kind = "dictionary_mock"

    def __init__(self, src_lang, tgt_lang, mapping, placeholder=None):
        super().__init__(src_lang, tgt_lang, placeholder)
        self.mapping = dict(mapping)

    def _translate(self, lines):
        get = self.mapping.get
        return [" ".join(get(tok, tok) for tok in line.split()) for line in lines]


class RemoteTranslator(TranslatorBackend):
    """Client for a batch translation service.

    Decoding parameters are sent with every request so that run manifests
    capture them. ``url`` defaults to ``$PARASYNTH_MT_URL``.
    """

    kind = "remote"

    def __init__(self, src_lang, tgt_lang, url=None, beam=12, length_norm=1.0,
                 batch_size=64, max_in_flight=4, retries=3, backoff=0.5,
                 client=None, timeout=120.0, placeholder=None):
        super().__init__(src_lang, tgt_lang, placeholder)
        url = url or os.environ.get("PARASYNTH_MT_URL")
        if not url:
            raise ArgumentError("no translation service URL (set PARASYNTH_MT_URL)")
        self.url = url.rstrip("/")
        self.beam = beam
        self.length_norm = length_norm
        self.batch_size = check_int(batch_size, "batch_size", min_value=1)
        self.max_in_flight = check_int(max_in_flight, "max_in_flight", min_value=1)
        self.retries = retries
        self.backoff = backoff
        self.client = client or httpx.Client(timeout=timeout)

    def _post(self, start, batch):
        payload = {
            "src_lang": self.src_lang,
            "tgt_lang": self.tgt_lang,
            "beam": self.beam,
            "length_norm": self.length_norm,
            "lines": batch,
        }
        indices = range(start, start + len(batch))
        try:
            body = post_json(self.client, self.url + "/translate", payload, self.retries, self.backoff)
        except TransportError as exc:
            raise TransportError(str(exc), retries=exc.retries, indices=indices) from None
        out = body.get("translations") if isinstance(body, dict) else None
        if not isinstance(out, list) or len(out) != len(batch):
            raise TransportError("malformed translation response", indices=indices)
        return out

    def _translate(self, lines):
        starts = range(0, len(lines), self.batch_size)
        batches = [(s, lines[s:s + self.batch_size]) for s in starts]
        if not batches:
            return []
        with ThreadPoolExecutor(self.max_in_flight) as pool:
            futures = [pool.submit(self._post, s, b) for s, b in batches]
        results, failed, first_error = [], [], None
        for f in futures:
            try:
                results.extend(f.result())
            except TransportError as exc:
                failed.extend(exc.indices)
                first_error = first_error or exc
        if first_error is not None:
            raise TransportError(
                f"{len(failed)} lines left untranslated: {first_error}",
                retries=first_error.retries,
                indices=failed,
            )
        return results


def make_translator(kind, src_lang, tgt_lang, **kwargs):
    if kind == "identity_mock":
        return IdentityMock(src_lang, tgt_lang, kwargs.get("placeholder"))
    if kind == "reverse_mock":
        return ReverseMock(src_lang, tgt_lang, kwargs.get("placeholder"))
    if kind == "dictionary_mock":
        return DictionaryMock(src_lang, tgt_lang, kwargs.get("mapping", {}), kwargs.get("placeholder"))
    if kind == "remote":
        return RemoteTranslator(src_lang, tgt_lang, **kwargs)
    raise ArgumentError(f"unknown translator kind {kind!r}; expected one of {sorted(KINDS)}")


def translate_batch(backend, lines):
    return backend.translate_batch(lines)
