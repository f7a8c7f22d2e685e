"""Command-line interface: ``parasynth <command> [options]``.

Text commands read a file argument or stdin (``-``) and write to ``-o`` or
stdout. Exit codes: 0 success, 2 bad arguments or input, 3 remote service
failure, 4 pipeline stage failure.
"""

import argparse
import json
import logging
import sys

from . import __version__
from .config import load_config
from .corpus import (
    clean_mono,
    ingest_mono,
    ingest_parallel,
    read_lines,
    read_parallel_tsv,
    sample_split,
    write_mono,
    write_parallel_tsv,
)
from .errors import ParasynthError, StageFailure, TransportError
from .generator import (
    GenerationParams,
    LocalBackend,
    NgramLM,
    RemoteGenerator,
    extract_lines,
    finetune,
    generate,
    load_lm,
    save_lm,
)
from .metrics import corpus_bleu, corpus_chrf
from .pipeline import plan, resume, run
from .subword import MODES, SubwordModel, learn_subword, undo_subword
from .synthesis import (
    BT_TAG,
    SpeakerRegistry,
    assemble_back_translation,
    assemble_forward_translation,
    personalized_prompts,
    strip_source_tag,
    tag_speakers,
)
from .textproc import TruecaseModel, detokenize, detruecase, tokenize, train_truecaser, truecase
from .translator import KINDS, make_translator

EXIT_OK = 0
EXIT_ARGUMENT = 2
EXIT_TRANSPORT = 3
EXIT_STAGE = 4

logger = logging.getLogger("parasynth")


def _read(path):
    if path in (None, "-"):
        return read_lines(sys.stdin.buffer)
    return read_lines(path)


def _emit(lines, dest):
    text = "".join(line + "\n" for line in lines)
    if dest in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _mono_arg(args, lang=None):
    corpus, dropped = ingest_mono(_read(args.input), lang or args.lang)
    if dropped:
        logger.info("dropped %d empty lines", dropped)
    return corpus


# --------------------------------------------------------------------------
# handlers


def cmd_ingest(args):
    if args.target:
        corpus, dropped = ingest_parallel(
            _read(args.input), _read(args.target), args.src_lang, args.tgt_lang,
            speakers=_read(args.speakers) if args.speakers else None,
        )
        write_parallel_tsv(corpus, args.output or sys.stdout)
    else:
        corpus, dropped = ingest_mono(_read(args.input), args.src_lang, args.domain)
        write_mono(corpus, args.output or sys.stdout)
    print(f"kept {len(corpus)} dropped {dropped}", file=sys.stderr)


def cmd_clean(args):
    corpus, stats = clean_mono(_mono_arg(args), args.max_tokens)
    write_mono(corpus, args.output or sys.stdout)
    print(f"kept {len(corpus)} dedup {stats.dedup} overlong {stats.overlong}", file=sys.stderr)


def cmd_split(args):
    first, rest = sample_split(_mono_arg(args), args.size, args.seed or 0)
    write_mono(first, args.first)
    write_mono(rest, args.rest)
    print(f"first {len(first)} rest {len(rest)}", file=sys.stderr)


def cmd_tokenize(args):
    lines = _read(args.input)
    if args.detokenize:
        out = [detokenize(line.split(), args.lang) for line in lines]
    else:
        out = [" ".join(tokenize(line, args.lang)) for line in lines]
    _emit(out, args.output)


def cmd_truecase(args):
    if args.action != "undo" and not args.model:
        raise_arg(f"truecase {args.action} needs --model")
    lines = _read(args.input)
    if args.action == "train":
        train_truecaser(lines).save(args.model)
        return
    if args.action == "apply":
        model = TruecaseModel.load(args.model)
        out = [" ".join(truecase(model, line.split())) for line in lines]
    else:
        out = [" ".join(detruecase(line.split())) for line in lines]
    _emit(out, args.output)


def cmd_bpe(args):
    if args.action != "undo" and not args.model:
        raise_arg(f"bpe {args.action} needs --model")
    lines = _read(args.input)
    if args.action == "learn":
        learn_subword(lines, args.merges, args.mode).save(args.model)
        return
    if args.action == "apply":
        model = SubwordModel.load(args.model)
        # raw_bpe pieces may start with the boundary symbol; join with spaces either way
        out = [" ".join(model.apply(line)) for line in lines]
    else:
        mode = SubwordModel.load(args.model).mode if args.model else args.mode
        if mode == "raw_bpe":
            out = [undo_subword(mode, line.split(" ")) for line in lines]
        else:
            out = [undo_subword(mode, line.split()) for line in lines]
    _emit(out, args.output)


def cmd_lm(args):
    if args.action == "train":
        lines = [line.split() for line in _read(args.input)]
        model = NgramLM(args.order, args.discount, args.block_size).fit(lines)
        save_lm(model, _require(args.output, "lm train needs -o MODEL"))
    elif args.action == "finetune":
        base = load_lm(_require(args.base, "lm finetune needs --base MODEL"))
        lines = [line.split() for line in _read(args.input)]
        save_lm(finetune(base, lines, args.lam), _require(args.output, "lm finetune needs -o MODEL"))
    else:
        params = GenerationParams(args.temperature, args.top_k, args.max_tokens, args.n, args.seed or 0,
                                  tuple(args.prompt.split()) if args.prompt else ())
        if args.remote:
            backend = RemoteGenerator(args.url)
        else:
            backend = LocalBackend(load_lm(_require(args.model, "lm generate needs --model")), args.workers)
        seqs = generate(backend, params)
        if args.raw:
            _emit([" ".join(s) for s in seqs], args.output)
        else:
            corpus, stats = extract_lines(seqs, args.max_line_tokens)
            _emit(corpus.texts, args.output)
            print(f"lines {stats.lines} empty {stats.empty} overlong {stats.overlong}", file=sys.stderr)


def _translator(args, src, tgt):
    mapping = {}
    if args.kind == "dictionary_mock":
        if not args.mapping:
            raise_arg("dictionary_mock needs --mapping FILE (tab-separated word pairs)")
        for line in read_lines(args.mapping):
            if line:
                k, _, v = line.partition("\t")
                mapping[k] = v
    if args.kind == "remote":
        return make_translator("remote", src, tgt, url=args.url, beam=args.beam,
                               length_norm=args.length_norm, batch_size=args.batch_size,
                               max_in_flight=args.max_in_flight, placeholder=args.placeholder)
    return make_translator(args.kind, src, tgt, mapping=mapping, placeholder=args.placeholder)


def cmd_translate(args):
    translator = _translator(args, args.src_lang, args.tgt_lang)
    out, stats = translator.translate_batch(_read(args.input))
    _emit(out, args.output)
    print(f"translated {stats.lines} empty {stats.empty}", file=sys.stderr)


def cmd_synth(args):
    if args.action == "prompts":
        speakers = [s for s in _read(_require(args.speakers, "synth prompts needs --speakers")) if s]
        _emit(personalized_prompts(SpeakerRegistry(speakers), args.n, args.seed or 0), args.output)
        return
    if args.action == "speaker-tag":
        corpus, _ = read_parallel_tsv(_read(args.input), args.src_lang, args.tgt_lang)
        if args.strip:
            out = strip_source_tag(corpus)
        else:
            out = tag_speakers(corpus, SpeakerRegistry.from_corpus(corpus))
        write_parallel_tsv(out, args.output or sys.stdout)
        return
    if args.action == "bt":
        mono = _mono_arg(args, args.tgt_lang)
        corpus, stats = assemble_back_translation(mono, _translator(args, args.tgt_lang, args.src_lang), args.tag)
    else:
        mono = _mono_arg(args, args.src_lang)
        corpus, stats = assemble_forward_translation(mono, _translator(args, args.src_lang, args.tgt_lang))
    write_parallel_tsv(corpus, args.output or sys.stdout)
    print(f"pairs {len(corpus)} empty {stats.empty}", file=sys.stderr)


def cmd_score(args):
    hyps = _read(args.hypotheses)
    refs = read_lines(args.references)
    report = corpus_bleu(hyps, refs) if args.metric == "bleu" else corpus_chrf(hyps, refs)
    print(report.to_json() if args.json else report.format())


def cmd_pipeline(args):
    if args.action == "resume":
        manifest = resume(_require(args.manifest, "pipeline resume needs --manifest"), args.stop_after)
    else:
        config = load_config(_require(args.config, f"pipeline {args.action} needs --config"), seed=args.seed)
        if args.action == "plan":
            print(json.dumps(plan(config), indent=2))
            return
        manifest = run(config, args.manifest, args.stop_after)
    for stage in manifest.stages:
        print(f"{stage['name']:<12} {stage['status']:<9} {json.dumps(stage['counts'], sort_keys=True)}")
    print(f"status: {manifest.status}")


# --------------------------------------------------------------------------
# parser


class _UsageError(Exception):
    pass


def raise_arg(message):
    raise _UsageError(message)


def _require(value, message):
    if not value:
        raise_arg(message)
    return value


def _add_io(p, output=True):
    p.add_argument("input", nargs="?", default="-", help="input file (default: stdin)")
    if output:
        p.add_argument("-o", "--output", help="output file (default: stdout)")


def _add_translator(p):
    p.add_argument("--kind", choices=sorted(KINDS), default="reverse_mock")
    p.add_argument("--url", help="translation service URL (default: $PARASYNTH_MT_URL)")
    p.add_argument("--beam", type=int, default=12)
    p.add_argument("--length-norm", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--mapping", help="dictionary_mock word pairs, one 'src<TAB>tgt' per line")
    p.add_argument("--placeholder", help="text for empty translations (default: copy the source)")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="pipeline TOML config")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--manifest", default=argparse.SUPPRESS, help="pipeline manifest path")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="parasynth", parents=[common],
                                     description="Synthetic parallel data toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        p = sub.add_parser(name, parents=[common], **kw)
        p.set_defaults(func=fn)
        return p

    p = add("ingest", cmd_ingest, help="validate and normalize a corpus")
    _add_io(p)
    p.add_argument("--target", help="target side file; writes a parallel TSV")
    p.add_argument("--speakers", help="speaker id per line (parallel only)")
    p.add_argument("--src-lang", default="en")
    p.add_argument("--tgt-lang", default="en")
    p.add_argument("--domain", default="")

    p = add("clean", cmd_clean, help="deduplicate and drop overlong lines")
    _add_io(p)
    p.add_argument("--lang", default="en")
    p.add_argument("--max-tokens", type=int, default=120)

    p = add("split", cmd_split, help="seeded random split of a corpus")
    _add_io(p, output=False)
    p.add_argument("--lang", default="en")
    p.add_argument("--size", type=int, required=True, help="lines in the first part")
    p.add_argument("--first", required=True)
    p.add_argument("--rest", required=True)

    p = add("tokenize", cmd_tokenize, help="Moses-style (de)tokenization")
    _add_io(p)
    p.add_argument("--lang", default="en")
    p.add_argument("--detokenize", action="store_true")

    p = add("truecase", cmd_truecase, help="train, apply or undo truecasing")
    p.add_argument("action", choices=["train", "apply", "undo"])
    _add_io(p)
    p.add_argument("-m", "--model")

    p = add("bpe", cmd_bpe, help="learn, apply or undo BPE segmentation")
    p.add_argument("action", choices=["learn", "apply", "undo"])
    _add_io(p)
    p.add_argument("-m", "--model")
    p.add_argument("--mode", choices=MODES, default="token_bpe")
    p.add_argument("--merges", type=int, default=None)

    p = add("lm", cmd_lm, help="n-gram generator: train, finetune, generate")
    p.add_argument("action", choices=["train", "finetune", "generate"])
    _add_io(p)
    p.add_argument("-m", "--model", help="model to sample from")
    p.add_argument("--base", help="base model to fine-tune")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--discount", type=float, default=0.75)
    p.add_argument("--block-size", type=int, default=5)
    p.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.7)
    p.add_argument("-n", type=int, default=1, help="sequences to generate")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--top-k", type=int, default=40)
    p.add_argument("--max-tokens", type=int, default=200, help="tokens per sequence")
    p.add_argument("--max-line-tokens", type=int, default=120)
    p.add_argument("--prompt")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--remote", action="store_true", help="use the generation service")
    p.add_argument("--url", help="generation service URL (default: $PARASYNTH_GEN_URL)")
    p.add_argument("--raw", action="store_true", help="print raw sequences instead of lines")

    p = add("translate", cmd_translate, help="translate lines with a backend")
    _add_io(p)
    p.add_argument("--src-lang", required=True)
    p.add_argument("--tgt-lang", required=True)
    _add_translator(p)

    p = add("synth", cmd_synth, help="assemble synthetic parallel data")
    p.add_argument("action", choices=["bt", "ft", "speaker-tag", "prompts"])
    _add_io(p)
    p.add_argument("--src-lang", default="de")
    p.add_argument("--tgt-lang", default="en")
    p.add_argument("--tag", default=BT_TAG)
    p.add_argument("--strip", action="store_true", help="speaker-tag: remove tags instead")
    p.add_argument("--speakers", help="prompts: file with one speaker id per line")
    p.add_argument("-n", type=int, default=1, help="prompts to draw")
    _add_translator(p)

    p = add("score", cmd_score, help="corpus BLEU or chrF")
    p.add_argument("metric", choices=["bleu", "chrf"])
    p.add_argument("hypotheses")
    p.add_argument("references")
    p.add_argument("--json", action="store_true")

    p = add("pipeline", cmd_pipeline, help="run, resume or plan the full pipeline")
    p.add_argument("action", choices=["run", "resume", "plan"])
    p.add_argument("--stop-after", help="stop after this stage")
    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    # argparse cannot place an optional positional that follows a flag
    if getattr(args, "input", None) == "-" and len(extra) == 1 and not extra[0].startswith("-"):
        args.input = extra.pop()
    if extra:
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    for name in ("config", "seed", "manifest", "verbose"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except _UsageError as exc:
        parser.error(str(exc))
    except StageFailure as exc:
        print(f"parasynth: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT if isinstance(exc.cause, TransportError) else EXIT_STAGE
    except TransportError as exc:
        print(f"parasynth: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ParasynthError, OSError) as exc:
        print(f"parasynth: {exc}", file=sys.stderr)
        return EXIT_ARGUMENT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
