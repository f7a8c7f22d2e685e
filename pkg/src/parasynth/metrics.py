"""Corpus-level BLEU and chrF.

BLEU follows the usual corpus recipe: mteval-13a tokenization, clipped
n-gram counts summed over the corpus, no smoothing, brevity penalty from
summed lengths. Orders for which the hypothesis contains no n-gram at all
(every hypothesis shorter than ``n``) are left out of the geometric mean.

chrF sums character n-gram statistics (whitespace removed) over the corpus,
averages precision and recall over the orders that occur on both sides and
combines them with beta = 2. Scores are on a 0-1 scale.
"""

import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass

from ._validation import check_lines
from .errors import ArgumentError

BLEU_ORDER = 4
CHRF_ORDER = 6
CHRF_BETA = 2.0

_13A_RULES = [
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),
]
_WS = re.compile(r"\s+")


def tokenize_13a(line):
    """mteval-v13a style tokenization of detokenized text."""
    line = line.replace("<skipped>", "").replace("-\n", "").replace("\n", " ")
    if "&" in line:
        line = (line.replace("&quot;", '"').replace("&amp;", "&")
                .replace("&lt;", "<").replace("&gt;", ">"))
    line = f" {line} "
    for pattern, repl in _13A_RULES:
        line = pattern.sub(repl, line)
    return line.split()


def _check_pair(hyps, refs):
    hyps = check_lines(hyps, "hyps")
    refs = check_lines(refs, "refs")
    if len(hyps) != len(refs):
        raise ArgumentError(f"{len(hyps)} hypotheses but {len(refs)} references")
    if not hyps:
        raise ArgumentError("cannot score an empty corpus")
    return hyps, refs


def _ngrams(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


@dataclass(frozen=True)
class BleuReport:
    score: float
    precisions: tuple
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    counts: tuple = ()
    totals: tuple = ()

    def format(self):
        prec = "/".join(f"{100 * p:.1f}" for p in self.precisions)
        return (
            f"BLEU = {self.score:.2f} {prec} (BP = {self.brevity_penalty:.3f}, "
            f"hyp_len = {self.hyp_len}, ref_len = {self.ref_len})"
        )

    def to_dict(self):
        d = asdict(self)
        d["precisions"] = list(self.precisions)
        d["counts"] = list(self.counts)
        d["totals"] = list(self.totals)
        return d

    def to_json(self):
        return json.dumps(self.to_dict())

    def __str__(self):
        return self.format()


@dataclass(frozen=True)
class ChrfReport:
    score: float
    n_max: int = CHRF_ORDER
    beta: float = CHRF_BETA
    precision: float = 0.0
    recall: float = 0.0

    def format(self):
        return f"chrF = {self.score:.4f}"

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())

    def __str__(self):
        return self.format()


def corpus_bleu(hyps, refs, tokenize=tokenize_13a):
    """Corpus BLEU (0-100) of ``hyps`` against a single reference each."""
    hyps, refs = _check_pair(hyps, refs)
    correct = [0] * BLEU_ORDER
    total = [0] * BLEU_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        h = tokenize(hyp)
        r = tokenize(ref)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, BLEU_ORDER + 1):
            hc = _ngrams(h, n)
            rc = _ngrams(r, n)
            correct[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            total[n - 1] += max(len(h) - n + 1, 0)

    precisions = tuple(c / t if t else 0.0 for c, t in zip(correct, total))
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    orders = [i for i in range(BLEU_ORDER) if total[i] > 0]
    if not orders or any(correct[i] == 0 for i in orders):
        score = 0.0
    else:
        log_mean = sum(math.log(precisions[i]) for i in orders) / len(orders)
        score = 100.0 * bp * math.exp(log_mean)
    return BleuReport(score, precisions, bp, hyp_len, ref_len, tuple(correct), tuple(total))


def _char_ngrams(text, n):
    return Counter(text[i:i + n] for i in range(len(text) - n + 1))


def chrf_statistics(hyps, refs, n_max=CHRF_ORDER):
    """Per-order ``(hyp_total, ref_total, matches)`` summed over the corpus."""
    stats = [[0, 0, 0] for _ in range(n_max)]
    for hyp, ref in zip(hyps, refs):
        h = _WS.sub("", hyp)
        r = _WS.sub("", ref)
        for n in range(1, n_max + 1):
            hc = _char_ngrams(h, n)
            rc = _char_ngrams(r, n)
            s = stats[n - 1]
            s[0] += sum(hc.values())
            s[1] += sum(rc.values())
            s[2] += sum((hc & rc).values())
    return stats


def corpus_chrf(hyps, refs, n_max=CHRF_ORDER, beta=CHRF_BETA):
    """Corpus chrF (0-1) with character n-grams up to ``n_max``."""
    hyps, refs = _check_pair(hyps, refs)
    stats = chrf_statistics(hyps, refs, n_max)
    prec = rec = 0.0
    effective = 0
    for hyp_total, ref_total, match in stats:
        if hyp_total > 0 and ref_total > 0:
            prec += match / hyp_total
            rec += match / ref_total
            effective += 1
    if effective:
        prec /= effective
        rec /= effective
    if prec + rec == 0:
        score = 0.0
    else:
        b2 = beta * beta
        score = (1 + b2) * prec * rec / (b2 * prec + rec)
    return ChrfReport(score, n_max, beta, prec, rec)
