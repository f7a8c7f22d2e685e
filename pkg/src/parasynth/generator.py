"""Synthetic text generation.

The built-in generator is an interpolated absolute-discounting n-gram model::

    P_k(w | h) = max(c(h, w) - D, 0) / c(h) + D * N1+(h .) / c(h) * P_{k-1}(w | h')

recursing down to a uniform distribution over the predictable vocabulary
(everything except ``<s>``). Contexts never seen in training defer entirely
to the next-lower order. "Fine-tuning" is a linear interpolation between the
base model and a model trained on the in-domain data.

Training lines are grouped into blocks joined by ``<nl>`` so that sampled
sequences contain several consecutive lines, which :func:`extract_lines`
splits apart again.
"""

import itertools
import math
import os
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import httpx
import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.exceptions import NotFittedError

from ._http import post_json
from ._validation import check_int, check_real, check_token_lists
from .corpus import MonoCorpus, Provenance, Sentence, count_tokens
from .errors import ArgumentError, TrainingError

BOS = "<s>"
EOS = "</s>"
NL = "<nl>"
UNK = "<unk>"
RESERVED = (BOS, EOS, NL, UNK)

DEFAULT_ORDER = 4
DEFAULT_DISCOUNT = 0.75
DEFAULT_BLOCK_SIZE = 5
DEFAULT_LAMBDA = 0.7


def _blocks(lines, block_size):
    lines = [line for line in lines if line]
    for i in range(0, len(lines), block_size):
        seq = []
        for j, line in enumerate(lines[i:i + block_size]):
            if j:
                seq.append(NL)
            seq.extend(line)
        yield seq


class _LanguageModel:
    """Shared querying, scoring and sampling for n-gram style models."""

    # per-model budget for cached next-token distributions
    _cache_bytes = 64 * 2**20

    def _check_fitted(self):
        if not hasattr(self, "vocab_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def _init_query_state(self):
        self.index_ = {tok: i for i, tok in enumerate(self.vocab_)}
        mask = np.ones(len(self.vocab_))
        mask[self.index_[BOS]] = 0.0
        self._uniform = mask / mask.sum()
        self._dist_cache = {}
        self._dist_cache_size = max(256, self._cache_bytes // (8 * len(self.vocab_)))

    def _history(self, history):
        """Left-pad with ``<s>``, map unknown tokens to ``<unk>``, truncate."""
        n = self.order - 1
        if n == 0:
            return ()
        h = [t if t in self.index_ else UNK for t in history][-n:]
        return (BOS,) * (n - len(h)) + tuple(h)

    def distribution(self, history=()):
        """Next-token probabilities over ``vocab_`` given ``history``."""
        self._check_fitted()
        h = self._history(history)
        cached = self._dist_cache.get(h)
        if cached is None:
            cached = self._compute_distribution(h)
            cached.setflags(write=False)
            if len(self._dist_cache) < self._dist_cache_size:
                self._dist_cache[h] = cached
        return cached

    def prob(self, word, history=()):
        """P(word | history); zero for tokens outside the vocabulary."""
        self._check_fitted()
        i = self.index_.get(word)
        if i is None:
            return 0.0
        return float(self.distribution(history)[i])

    def sequence_logprob(self, tokens):
        """Natural-log probability of ``tokens`` followed by ``</s>``; returns (logprob, n_predictions)."""
        history = []
        total = 0.0
        seq = [t if t in self.index_ else UNK for t in tokens] + [EOS]
        for tok in seq:
            p = self.distribution(history)[self.index_[tok]]
            total += math.log(p)
            history.append(tok)
        return total, len(seq)

    def _score_totals(self, X):
        total, n = 0.0, 0
        for seq in _blocks(check_token_lists(X), self.block_size):
            lp, k = self.sequence_logprob(seq)
            total += lp
            n += k
        return total, n

    def score(self, X, y=None):
        """Mean log-probability per predicted token (higher is better)."""
        total, n = self._score_totals(X)
        return total / n if n else 0.0

    def cross_entropy(self, X):
        """Bits per predicted token."""
        return -self.score(X) / math.log(2)

    def perplexity(self, X):
        return math.exp(-self.score(X))

    def _sampler(self, temperature, top_k):
        key = (temperature, top_k)
        samplers = self.__dict__.setdefault("_samplers", {})
        if key not in samplers:
            samplers[key] = _Sampler(self, temperature, top_k)
        return samplers[key]

    def sample_sequences(self, params, prompts=None, n_workers=1):
        """Draw sequences by ancestral sampling.

        ``prompts`` gives one prompt per sequence; by default every sequence
        uses ``params.prompt``. Work is split into contiguous chunks, one per
        worker, and worker ``w`` draws from ``default_rng(seed + w)``. Output
        order is worker order, then draw order.
        """
        self._check_fitted()
        if prompts is None:
            prompts = [tuple(params.prompt)] * params.n_sequences
        prompts = [tuple(p) for p in prompts]
        n_workers = check_int(n_workers, "n_workers", min_value=1)
        sampler = self._sampler(params.temperature, params.top_k)
        size, extra = divmod(len(prompts), n_workers)
        chunks, start = [], 0
        for w in range(n_workers):
            stop = start + size + (1 if w < extra else 0)
            chunks.append(prompts[start:stop])
            start = stop

        def work(w):
            rng = np.random.default_rng(params.seed + w)
            return [sampler.sequence(p, params.max_tokens, rng) for p in chunks[w]]

        if n_workers == 1:
            results = [work(0)]
        else:
            with ThreadPoolExecutor(n_workers) as pool:
                results = list(pool.map(work, range(n_workers)))
        return [seq for chunk in results for seq in chunk]


class _Sampler:
    """Temperature + top-k sampler with per-history caching."""

    def __init__(self, model, temperature, top_k):
        self.model = model
        self.temperature = temperature
        self.top_k = top_k
        self.vocab = model.vocab_
        self.eos = model.index_[EOS]
        self._cache = {}
        self._max_entries = max(256, model._cache_bytes // (16 * top_k))
        # never emitted: <s> has zero mass already, <unk> is not a real word
        self._blocked = [model.index_[BOS], model.index_[UNK]]

    def _table(self, history):
        h = self.model._history(history)
        table = self._cache.get(h)
        if table is None:
            p = np.array(self.model.distribution(h), dtype=float)
            p[self._blocked] = 0.0
            with np.errstate(divide="ignore"):
                logits = np.log(p) / self.temperature
            k = min(self.top_k, int(np.count_nonzero(p)))
            order = np.argsort(-logits, kind="stable")[:k]
            q = np.exp(logits[order] - logits[order[0]])
            table = (order, np.cumsum(q / q.sum()))
            if len(self._cache) < self._max_entries:
                self._cache[h] = table
        return table

    def sequence(self, prompt, max_tokens, rng):
        history = list(prompt)
        out = list(prompt)
        for _ in range(max_tokens):
            ids, cum = self._table(history)
            j = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            idx = ids[min(j, len(ids) - 1)]
            if idx == self.eos:
                break
            tok = self.vocab[idx]
            out.append(tok)
            history.append(tok)
        return out


class NgramLM(_LanguageModel, BaseEstimator):
    """Interpolated absolute-discounting n-gram language model.

    Parameters
    ----------
    order : int, default=4
    discount : float in (0, 1), default=0.75
    block_size : int, default=5
        Consecutive training lines joined by ``<nl>`` into one sequence.

    Attributes
    ----------
    vocab_ : list of str
        Sorted vocabulary including the reserved tokens.
    counts_ : list of dict
        ``counts_[k][context]`` is a Counter of successors of the length-k
        context.
    """

    def __init__(self, order=DEFAULT_ORDER, discount=DEFAULT_DISCOUNT, block_size=DEFAULT_BLOCK_SIZE):
        self.order = order
        self.discount = discount
        self.block_size = block_size

    def _validate_params(self):
        check_int(self.order, "order", min_value=1)
        check_real(self.discount, "discount", 0.0, 1.0, low_open=True, high_open=True)
        check_int(self.block_size, "block_size", min_value=1)

    def fit(self, X, y=None):
        self._validate_params()
        lines = check_token_lists(X)
        if not any(lines):
            raise TrainingError("cannot train an n-gram model on an empty corpus")
        n = self.order
        counts = [defaultdict(Counter) for _ in range(n)]
        vocab = set(RESERVED)
        for seq in _blocks(lines, self.block_size):
            vocab.update(seq)
            padded = [BOS] * (n - 1) + seq + [EOS]
            for i in range(n - 1, len(padded)):
                w = padded[i]
                for k in range(n):
                    counts[k][tuple(padded[i - k:i])][w] += 1
        self.counts_ = [dict(c) for c in counts]
        self.vocab_ = sorted(vocab)
        self._finalize()
        return self

    def _finalize(self):
        self._init_query_state()
        self._arrays = [dict() for _ in range(self.order)]

    def _entry(self, k, ctx):
        cache = self._arrays[k]
        entry = cache.get(ctx)
        if entry is None:
            succ = self.counts_[k].get(ctx)
            if succ is None:
                return None
            ids = np.fromiter((self.index_[w] for w in succ), dtype=np.int64, count=len(succ))
            cnt = np.fromiter(succ.values(), dtype=float, count=len(succ))
            entry = (ids, cnt, float(cnt.sum()), len(succ))
            cache[ctx] = entry
        return entry

    def _compute_distribution(self, h):
        d = self.discount
        p = self._uniform.copy()
        for k in range(self.order):
            ctx = h[len(h) - k:] if k else ()
            entry = self._entry(k, ctx)
            if entry is None:
                break
            ids, cnt, total, types = entry
            p *= d * types / total
            p[ids] += (cnt - d) / total
        return p

    # ---------------------------------------------------------------- I/O

    def dumps(self):
        self._check_fitted()
        out = [
            f"#ngram order={self.order} discount={self.discount!r} "
            f"block_size={self.block_size} vocab={len(self.vocab_)}\n",
            "\\vocab\n",
        ]
        out.extend(t + "\n" for t in self.vocab_)
        out.append("\\counts\n")
        for k, table in enumerate(self.counts_):
            for ctx in sorted(table):
                succ = table[ctx]
                c = " ".join(ctx)
                out.extend(f"{k}\t{c}\t{w}\t{succ[w]}\n" for w in sorted(succ))
        return "".join(out)

    @classmethod
    def _from_lines(cls, lines):
        header = dict(kv.split("=", 1) for kv in lines[0][len("#ngram "):].split())
        model = cls(int(header["order"]), float(header["discount"]), int(header["block_size"]))
        if lines[1] != "\\vocab":
            raise ArgumentError("n-gram file: missing \\vocab section")
        end = lines.index("\\counts")
        model.vocab_ = lines[2:end]
        if len(model.vocab_) != int(header["vocab"]):
            raise ArgumentError("n-gram file: vocabulary size does not match header")
        counts = [defaultdict(Counter) for _ in range(model.order)]
        for line in lines[end + 1:]:
            k, ctx, w, c = line.split("\t")
            ctx = tuple(ctx.split(" ")) if ctx else ()
            counts[int(k)][ctx][w] = int(c)
        model.counts_ = [dict(c) for c in counts]
        model._finalize()
        return model


NgramModel = NgramLM


class InterpolatedLM(_LanguageModel):
    """Linear mixture of language models over the union vocabulary.

    A component assigns zero probability to tokens outside its own
    vocabulary, so the mixture stays normalized.
    """

    def __init__(self, components, weights):
        if len(components) != len(weights) or not components:
            raise ArgumentError("need one weight per component")
        weights = [check_real(w, "weight", 0.0, 1.0) for w in weights]
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ArgumentError(f"mixture weights sum to {sum(weights)}, expected 1")
        self.components = list(components)
        self.weights = weights
        self.order = max(c.order for c in self.components)
        first = self.components[0]
        self.discount = first.discount
        self.block_size = first.block_size
        self.vocab_ = sorted(set().union(*(c.vocab_ for c in self.components)))
        self._init_query_state()
        self._maps = [
            np.array([self.index_[t] for t in c.vocab_], dtype=np.int64) for c in self.components
        ]

    def _compute_distribution(self, h):
        p = np.zeros(len(self.vocab_))
        for comp, w, m in zip(self.components, self.weights, self._maps):
            if w:
                # bypass the component caches; the mixture caches the result
                p[m] += w * comp._compute_distribution(comp._history(h))
        return p

    def dumps(self):
        out = [f"#mixture components={len(self.components)}\n"]
        for comp, w in zip(self.components, self.weights):
            body = comp.dumps()
            out.append(f"\\component weight={w!r} lines={body.count(chr(10))}\n")
            out.append(body)
        return "".join(out)

    @classmethod
    def _from_lines(cls, lines):
        n = int(lines[0].split("=", 1)[1])
        comps, weights = [], []
        i = 1
        for _ in range(n):
            head = dict(kv.split("=", 1) for kv in lines[i][len("\\component "):].split())
            size = int(head["lines"])
            comps.append(_lm_from_lines(lines[i + 1:i + 1 + size]))
            weights.append(float(head["weight"]))
            i += 1 + size
        return cls(comps, weights)


def _lm_from_lines(lines):
    if not lines:
        raise ArgumentError("empty language model file")
    if lines[0].startswith("#ngram "):
        return NgramLM._from_lines(lines)
    if lines[0].startswith("#mixture "):
        return InterpolatedLM._from_lines(lines)
    raise ArgumentError(f"unrecognised language model header {lines[0]!r}")


def save_lm(model, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model.dumps())


def loads_lm(text):
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return _lm_from_lines(lines)


def load_lm(path):
    with open(path, encoding="utf-8") as fh:
        return loads_lm(fh.read())


def train_ngram(corpus, order=DEFAULT_ORDER, discount=DEFAULT_DISCOUNT, block_size=DEFAULT_BLOCK_SIZE):
    return NgramLM(order, discount, block_size).fit(corpus)


def finetune(base, in_domain, lam=DEFAULT_LAMBDA):
    """Shift ``base`` towards ``in_domain``: ``lam * P_dom + (1 - lam) * P_base``.

    The in-domain model uses the base model's order, discount and block size.
    """
    lam = check_real(lam, "lambda", 0.0, 1.0)
    if isinstance(base, NgramLM):
        dom = clone(base)
    else:
        dom = NgramLM(base.order, base.discount, base.block_size)
    dom.fit(in_domain)
    return InterpolatedLM([dom, base], [lam, 1.0 - lam])


# --------------------------------------------------------------------------
# backends


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 1.0
    top_k: int = 40
    max_tokens: int = 200
    n_sequences: int = 1
    seed: int = 0
    prompt: tuple = ()

    def __post_init__(self):
        check_real(self.temperature, "temperature", 0.0, low_open=True)
        check_int(self.top_k, "top_k", min_value=1)
        check_int(self.max_tokens, "max_tokens", min_value=1)
        check_int(self.n_sequences, "n_sequences", min_value=0)
        check_int(self.seed, "seed")
        prompt = self.prompt.split() if isinstance(self.prompt, str) else tuple(self.prompt)
        object.__setattr__(self, "prompt", tuple(prompt))


@dataclass(frozen=True)
class Capabilities:
    fine_tunable: bool
    remote: bool


class LocalBackend:
    """Generation from an in-process language model."""

    capabilities = Capabilities(fine_tunable=True, remote=False)

    def __init__(self, model, n_workers=1):
        self.model = model
        self.n_workers = n_workers

    def generate(self, params, prompts=None):
        return self.model.sample_sequences(params, prompts, n_workers=self.n_workers)


class RemoteGenerator:
    """Client for a ``POST /generate`` text generation service.

    The service URL defaults to ``$PARASYNTH_GEN_URL``.
    """

    capabilities = Capabilities(fine_tunable=False, remote=True)

    def __init__(self, url=None, client=None, retries=3, backoff=0.5, timeout=60.0):
        url = url or os.environ.get("PARASYNTH_GEN_URL")
        if not url:
            raise ArgumentError("no generation service URL (set PARASYNTH_GEN_URL)")
        self.url = url.rstrip("/")
        self.client = client or httpx.Client(timeout=timeout)
        self.retries = retries
        self.backoff = backoff

    def _request(self, prompt, n, params):
        payload = {
            "prompt": " ".join(prompt),
            "n_sequences": n,
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "top_k": params.top_k,
        }
        body = post_json(self.client, self.url + "/generate", payload, self.retries, self.backoff)
        seqs = body.get("sequences") if isinstance(body, dict) else None
        if not isinstance(seqs, list) or len(seqs) != n:
            raise ArgumentError(f"generation service returned a malformed body for {n} sequences")
        return [_text_to_tokens(s) for s in seqs]

    def generate(self, params, prompts=None):
        if prompts is None:
            prompts = [params.prompt] * params.n_sequences
        prompts = [tuple(p) for p in prompts]
        wanted = Counter(prompts)
        pools = {p: iter(self._request(p, n, params)) for p, n in sorted(wanted.items())}
        return [next(pools[p]) for p in prompts]


def _text_to_tokens(text):
    out = []
    for i, line in enumerate(text.split("\n")):
        if i:
            out.append(NL)
        out.extend(line.split())
    return out


def generate(backend, params, prompts=None):
    """Return ``params.n_sequences`` token sequences (or one per prompt)."""
    if prompts is not None:
        prompts = [p.split() if isinstance(p, str) else list(p) for p in prompts]
        if not prompts:
            return []
    elif params.n_sequences == 0:
        return []
    return backend.generate(params, prompts)


# --------------------------------------------------------------------------
# extraction


@dataclass(frozen=True)
class ExtractStats:
    lines: int = 0
    empty: int = 0
    overlong: int = 0


def _split_lines(seq):
    line = []
    for tok in itertools.chain(seq, [NL]):
        if tok == NL:
            yield line
            line = []
        elif tok not in (BOS, EOS):
            line.append(tok)


def extract_lines(sequences, max_tokens=120, lang="en", domain="generated"):
    """Split sequences on ``<nl>`` into sentences.

    Empty lines and lines with more than ``max_tokens`` tokens are dropped.
    Returns ``(MonoCorpus, ExtractStats)``.
    """
    check_int(max_tokens, "max_tokens", min_value=1)
    kept = []
    total = empty = overlong = 0
    for seq in sequences:
        for line in _split_lines(seq):
            total += 1
            text = " ".join(line)
            if not text:
                empty += 1
            elif count_tokens(text, lang) > max_tokens:
                overlong += 1
            else:
                kept.append(Sentence(text, lang))
    corpus = MonoCorpus(lang, domain, tuple(kept), Provenance.GENERATED)
    return corpus, ExtractStats(total, empty, overlong)


def extract_speaker_lines(sequences, prompts, max_tokens=120, lang="en", domain="generated"):
    """Like :func:`extract_lines` but attributes each line to its prompt.

    Prompt tags are reserved tokens, so any that the model emits inside a
    line are dropped. Returns
    ``(MonoCorpus, speaker_tags, ExtractStats)`` where ``speaker_tags[i]`` is
    the prompt tag that produced sentence ``i``.
    """
    prompts = [list(p) for p in prompts]
    reserved = {p[0] for p in prompts if p}
    kept, tags = [], []
    total = empty = overlong = 0
    for seq, prompt in zip(sequences, prompts):
        tag = prompt[0] if prompt else None
        if prompt and list(seq[:len(prompt)]) == prompt:
            seq = seq[len(prompt):]
        for line in _split_lines(seq):
            total += 1
            line = [t for t in line if t not in reserved]
            text = " ".join(line)
            if not text:
                empty += 1
            elif count_tokens(text, lang) > max_tokens:
                overlong += 1
            else:
                kept.append(Sentence(text, lang))
                tags.append(tag)
    corpus = MonoCorpus(lang, domain, tuple(kept), Provenance.GENERATED)
    return corpus, tags, ExtractStats(total, empty, overlong)
