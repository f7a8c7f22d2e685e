"""Resumable orchestration of the synthetic-data pipeline.

Stages run strictly in order and communicate only through files in the work
directory. Every stage appends records to a JSON-lines manifest; the latest
record of a stage is its current state. A stage is reused ("cached") when its
previous record is complete, its parameters are unchanged and the SHA-256 of
every input and output file still matches. Otherwise it runs again, and since
stage outputs are deterministic, changed outputs propagate downstream through
the input hashes.
"""

import contextlib
import fcntl
import hashlib
import json
import logging
import os
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import PipelineConfig
from .corpus import (
    MonoCorpus,
    Provenance,
    Sentence,
    clean_indices,
    read_lines,
    split_indices,
    write_parallel_tsv,
)
from .errors import ArgumentError, ManifestParseError, ParasynthError, StageFailure, TrainingError
from .generator import (
    NL,
    GenerationParams,
    LocalBackend,
    NgramLM,
    RemoteGenerator,
    extract_lines,
    extract_speaker_lines,
    finetune,
    generate,
    load_lm,
    save_lm,
)
from .metrics import corpus_bleu, corpus_chrf
from .synthesis import (
    SpeakerRegistry,
    assemble_back_translation,
    assemble_forward_translation,
    assemble_speaker_back_translation,
    personalized_prompts,
)
from .translator import TranslatorBackend, make_translator

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
REUSABLE = frozenset({"complete", "cached"})


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_atomic(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_lines(path, lines):
    _write_atomic(path, "".join(line + "\n" for line in lines))


# --------------------------------------------------------------------------
# manifest


@dataclass
class StageRecord:
    name: str
    status: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    wall_time: float = 0.0
    error: str | None = None

    def to_event(self):
        return {"event": "stage", **self.__dict__}


class PipelineManifest:
    """Append-only JSON-lines record of runs and stage results."""

    def __init__(self, path):
        self.path = Path(path)
        self.events = []

    @classmethod
    def load(cls, path):
        manifest = cls(path)
        with open(path, "rb") as fh:
            data = fh.read()
        offset = 0
        for raw in data.split(b"\n"):
            if raw.strip():
                try:
                    event = json.loads(raw.decode("utf-8"))
                except UnicodeDecodeError as exc:
                    raise ManifestParseError("manifest is not valid UTF-8", offset + exc.start) from None
                except json.JSONDecodeError as exc:
                    pos = offset + len(raw.decode("utf-8")[:exc.pos].encode("utf-8"))
                    raise ManifestParseError(f"corrupt manifest: {exc.msg}", pos) from None
                if not isinstance(event, dict) or event.get("event") not in ("run", "stage"):
                    raise ManifestParseError("manifest record has no valid 'event' field", offset)
                manifest.events.append(event)
            offset += len(raw) + 1
        if not any(e["event"] == "run" for e in manifest.events):
            raise ManifestParseError("manifest has no run header", 0)
        return manifest

    def append(self, event):
        self.events.append(event)
        with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    @property
    def header(self):
        runs = [e for e in self.events if e["event"] == "run"]
        return runs[-1] if runs else None

    @property
    def config_hash(self):
        return self.header["config_hash"] if self.header else None

    def latest(self, name):
        for event in reversed(self.events):
            if event["event"] == "stage" and event["name"] == name:
                return event
        return None

    def current_run(self):
        """Stage records appended since the most recent run header."""
        out = []
        for event in reversed(self.events):
            if event["event"] == "run":
                break
            out.append(event)
        return list(reversed(out))

    @property
    def stages(self):
        """Latest record of each stage of the current run, in execution order."""
        latest = {}
        for event in self.current_run():
            latest[event["name"]] = event
        return list(latest.values())

    @property
    def status(self):
        """"complete" once every planned stage of the current run is complete or cached."""
        stages = self.stages
        if any(s["status"] == "failed" for s in stages):
            return "failed"
        planned = self.header.get("stages") if self.header else None
        done = [s["name"] for s in stages if s["status"] in REUSABLE]
        if stages and len(done) == len(stages) and (planned is None or done == planned):
            return "complete"
        return "incomplete"


@contextlib.contextmanager
def _locked(manifest_path):
    lock_path = Path(str(manifest_path) + ".lock")
    fh = open(lock_path, "w")
    try:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise ArgumentError(f"manifest {manifest_path} is locked by another run") from None
        yield
    finally:
        fh.close()


# --------------------------------------------------------------------------
# stages


class _Replay(TranslatorBackend):
    """Returns translations computed by an earlier stage."""

    kind = "replay"

    def __init__(self, src_lang, tgt_lang, translations):
        super().__init__(src_lang, tgt_lang)
        self.translations = translations

    def _translate(self, lines):
        return list(self.translations)


@dataclass
class Stage:
    name: str
    inputs: dict
    outputs: dict
    params: dict
    fn: object


class _Runner:
    def __init__(self, config):
        self.cfg = config
        self.work = Path(config.work_dir)
        self.speaker_mode = config.mode == "bt_speaker"
        self.remote_gen = config.generator.backend == "remote"

    def p(self, name):
        return str(self.work / name)

    def stages(self):
        c, g, t = self.cfg, self.cfg.generator, self.cfg.translator
        spk = self.speaker_mode
        p = self.p

        def with_spk(d, key, path):
            if spk:
                d[key] = path
            return d

        block_size = 1 if spk else g.block_size
        out = [
            Stage("ingest",
                  with_spk({"mono": c.in_domain_mono}, "speakers", c.speakers),
                  with_spk({"mono": p("mono.txt")}, "speakers", p("mono.spk")),
                  {"lang": c.mono_lang, "domain": c.domain}, self.ingest),
            Stage("clean",
                  with_spk({"mono": p("mono.txt")}, "speakers", p("mono.spk")),
                  with_spk({"mono": p("clean.txt")}, "speakers", p("clean.spk")),
                  {"max_tokens": c.max_tokens}, self.clean),
            Stage("split",
                  with_spk({"mono": p("clean.txt")}, "speakers", p("clean.spk")),
                  with_spk(with_spk({"finetune": p("finetune.txt"), "rest": p("rest.txt")},
                                    "finetune_speakers", p("finetune.spk")), "rest_speakers", p("rest.spk")),
                  {"fine_tune_size": c.fine_tune_size, "seed": c.seed}, self.split),
        ]
        if c.base_model:
            base_input = {"base_model": c.base_model}
        elif c.base_corpus:
            base_input = {"base_corpus": c.base_corpus}
        else:
            # in speaker mode the in-domain remainder keeps its speaker tags
            base_input = with_spk({"base_corpus": p("rest.txt")}, "speakers", p("rest.spk"))
        lm_params = {"order": g.order, "discount": g.discount, "block_size": block_size,
                     "backend": g.backend}
        out.append(Stage("train_base", {} if self.remote_gen else base_input,
                         {} if self.remote_gen else {"model": p("base.lm")}, lm_params, self.train_base))
        ft_inputs = with_spk({"base": p("base.lm"), "finetune": p("finetune.txt")},
                             "speakers", p("finetune.spk"))
        out.append(Stage("finetune", {} if self.remote_gen else ft_inputs,
                         {} if self.remote_gen else {"model": p("finetuned.lm")},
                         {"lambda": g.lam, "backend": g.backend}, self.finetune))
        gen_inputs = {} if self.remote_gen else {"model": p("finetuned.lm")}
        gen_inputs = with_spk(gen_inputs, "speakers", p("finetune.spk"))
        out.append(Stage("generate", gen_inputs,
                         with_spk({"sequences": p("generated.seq")}, "prompts", p("generated.prompts")),
                         {"n_sequences": c.generate_size, "seed": c.seed, "temperature": g.temperature,
                          "top_k": g.top_k, "max_tokens": g.max_tokens, "n_workers": g.n_workers,
                          "backend": g.backend, "url": g.url},
                         self.generate))
        out.append(Stage("extract",
                         with_spk({"sequences": p("generated.seq")}, "prompts", p("generated.prompts")),
                         with_spk({"lines": p("extracted.txt")}, "tags", p("extracted.tags")),
                         {"max_tokens": c.max_tokens, "dedup": g.dedup, "limit": c.generate_size},
                         self.extract))
        out.append(Stage("translate", {"lines": p("extracted.txt")}, {"translations": p("translations.txt")},
                         {"kind": t.kind, "direction": list(self._direction()), "beam": t.beam,
                          "length_norm": t.length_norm, "url": t.url, "mapping": t.mapping,
                          "placeholder": t.placeholder},
                         self.translate))
        out.append(Stage("assemble",
                         with_spk({"lines": p("extracted.txt"), "translations": p("translations.txt")},
                                  "tags", p("extracted.tags")),
                         {"corpus": p("assembled.tsv")}, {"mode": c.mode}, self.assemble))
        out.append(Stage("persist", {"corpus": p("assembled.tsv")},
                         {"corpus": p(f"synthetic.{c.mode}.tsv"), "stats": p("stats.json")}, {},
                         self.persist))
        if c.score.hypotheses:
            out.append(Stage("score", {"hypotheses": c.score.hypotheses, "references": c.score.references},
                             {"report": p("score.json")}, {"metric": c.score.metric}, self.score))
        return out

    def _direction(self):
        c = self.cfg
        if c.mode == "ft_untagged":
            return c.src_lang, c.tgt_lang
        return c.tgt_lang, c.src_lang

    # each stage returns a counts dict

    def ingest(self, st):
        lines = read_lines(st.inputs["mono"])
        speakers = read_lines(st.inputs["speakers"]) if self.speaker_mode else None
        if speakers is not None and len(speakers) != len(lines):
            raise ArgumentError(f"speaker file has {len(speakers)} lines, corpus has {len(lines)}")
        keep = [i for i, line in enumerate(lines) if line.strip()]
        for i in keep:
            if "\r" in lines[i]:
                raise ArgumentError(f"line {i + 1} contains a bare carriage return")
        _write_lines(st.outputs["mono"], [lines[i] for i in keep])
        if speakers is not None:
            ids = [speakers[i].strip() for i in keep]
            if not all(ids):
                raise ArgumentError("empty speaker id in speaker file")
            _write_lines(st.outputs["speakers"], ids)
        return {"lines": len(lines), "kept": len(keep), "dropped": len(lines) - len(keep)}

    def _mono(self, path):
        return MonoCorpus.from_texts(read_lines(path), self.cfg.mono_lang, self.cfg.domain)

    def clean(self, st):
        corpus = self._mono(st.inputs["mono"])
        kept, stats = clean_indices(corpus, self.cfg.max_tokens)
        _write_lines(st.outputs["mono"], [corpus.sentences[i].text for i in kept])
        if self.speaker_mode:
            ids = read_lines(st.inputs["speakers"])
            _write_lines(st.outputs["speakers"], [ids[i] for i in kept])
        return {"input": len(corpus), "kept": len(kept), "dedup": stats.dedup, "overlong": stats.overlong}

    def split(self, st):
        lines = read_lines(st.inputs["mono"])
        first, rest = split_indices(len(lines), self.cfg.fine_tune_size, self.cfg.seed)
        _write_lines(st.outputs["finetune"], [lines[i] for i in first])
        _write_lines(st.outputs["rest"], [lines[i] for i in rest])
        if self.speaker_mode:
            ids = read_lines(st.inputs["speakers"])
            _write_lines(st.outputs["finetune_speakers"], [ids[i] for i in first])
            _write_lines(st.outputs["rest_speakers"], [ids[i] for i in rest])
        return {"finetune": len(first), "rest": len(rest)}

    def train_base(self, st):
        if self.remote_gen:
            return {"skipped": 1}
        if "base_model" in st.inputs:
            model = load_lm(st.inputs["base_model"])
            save_lm(model, st.outputs["model"])
            return {"vocab": len(model.vocab_)}
        lines = read_lines(st.inputs["base_corpus"])
        if "speakers" in st.inputs:
            ids = read_lines(st.inputs["speakers"])
            registry = self._registry(st.inputs["speakers"])
            lines = [f"{registry.tag(s)} {line}" for s, line in zip(ids, lines)]
        lines = [line.split() for line in lines]
        if not any(lines):
            raise TrainingError("base corpus is empty; provide [data] base_corpus or base_model")
        model = NgramLM(st.params["order"], st.params["discount"], st.params["block_size"]).fit(lines)
        _write_atomic(st.outputs["model"], model.dumps())
        return {"lines": len(lines), "vocab": len(model.vocab_)}

    def _registry(self, speaker_path):
        return SpeakerRegistry(frozenset(read_lines(speaker_path)))

    def finetune(self, st):
        if self.remote_gen:
            return {"skipped": 1}
        base = load_lm(st.inputs["base"])
        lines = read_lines(st.inputs["finetune"])
        if self.speaker_mode:
            registry = self._registry(st.inputs["speakers"])
            ids = read_lines(st.inputs["speakers"])
            lines = [f"{registry.tag(s)} {line}" for s, line in zip(ids, lines)]
        model = finetune(base, [line.split() for line in lines], self.cfg.generator.lam)
        _write_atomic(st.outputs["model"], model.dumps())
        return {"lines": len(lines), "vocab": len(model.vocab_)}

    def generate(self, st):
        g = self.cfg.generator
        params = GenerationParams(g.temperature, g.top_k, g.max_tokens, self.cfg.generate_size, self.cfg.seed)
        if self.remote_gen:
            backend = RemoteGenerator(g.url)
        else:
            backend = LocalBackend(load_lm(st.inputs["model"]), n_workers=g.n_workers)
        prompts = None
        if self.speaker_mode:
            registry = self._registry(st.inputs["speakers"])
            prompts = personalized_prompts(registry, self.cfg.generate_size, self.cfg.seed)
            _write_lines(st.outputs["prompts"], prompts)
            prompts = [[t] for t in prompts]
        seqs = generate(backend, params, prompts)
        _write_lines(st.outputs["sequences"], [" ".join(s) for s in seqs])
        return {"requested": self.cfg.generate_size, "sequences": len(seqs),
                "tokens": sum(len(s) for s in seqs)}

    def extract(self, st):
        seqs = [line.split() for line in read_lines(st.inputs["sequences"])]
        lang = self.cfg.mono_lang
        if self.speaker_mode:
            prompts = [[t] for t in read_lines(st.inputs["prompts"])]
            corpus, tags, stats = extract_speaker_lines(seqs, prompts, self.cfg.max_tokens, lang)
        else:
            corpus, stats = extract_lines(seqs, self.cfg.max_tokens, lang)
            tags = [None] * len(corpus)
        keep = range(len(corpus))
        dedup = 0
        if st.params["dedup"]:
            keep, cstats = clean_indices(corpus, self.cfg.max_tokens)
            dedup = cstats.dedup
        keep = list(keep)[: st.params["limit"]]
        _write_lines(st.outputs["lines"], [corpus.sentences[i].text for i in keep])
        if self.speaker_mode:
            _write_lines(st.outputs["tags"], [tags[i] for i in keep])
        return {"lines": stats.lines, "empty": stats.empty, "overlong": stats.overlong,
                "dedup": dedup, "kept": len(keep)}

    def _translator(self):
        t = self.cfg.translator
        src, tgt = self._direction()
        if t.kind == "remote":
            return make_translator("remote", src, tgt, url=t.url, beam=t.beam, length_norm=t.length_norm,
                                   batch_size=t.batch_size, max_in_flight=t.max_in_flight,
                                   retries=t.retries, backoff=t.backoff, placeholder=t.placeholder)
        return make_translator(t.kind, src, tgt, mapping=t.mapping, placeholder=t.placeholder)

    def translate(self, st):
        lines = read_lines(st.inputs["lines"])
        out, stats = self._translator().translate_batch(lines)
        _write_lines(st.outputs["translations"], [" ".join(x.split()) for x in out])
        return {"lines": stats.lines, "empty": stats.empty}

    def assemble(self, st):
        c = self.cfg
        src, tgt = self._direction()
        lines = read_lines(st.inputs["lines"])
        mono = MonoCorpus(c.mono_lang, c.domain, tuple(Sentence(x, c.mono_lang) for x in lines),
                          Provenance.GENERATED)
        replay = _Replay(src, tgt, read_lines(st.inputs["translations"]))
        if c.mode == "bt_tagged":
            corpus, _ = assemble_back_translation(mono, replay)
        elif c.mode == "ft_untagged":
            corpus, _ = assemble_forward_translation(mono, replay)
        else:
            tags = read_lines(st.inputs["tags"])
            registry = SpeakerRegistry(frozenset(t[len("<spk:"):-1] for t in tags))
            corpus, _ = assemble_speaker_back_translation(mono, tags, replay, registry)
        tmp = Path(st.outputs["corpus"] + ".tmp")
        write_parallel_tsv(corpus, tmp)
        os.replace(tmp, st.outputs["corpus"])
        return {"pairs": len(corpus)}

    def persist(self, st):
        tmp = st.outputs["corpus"] + ".tmp"
        shutil.copyfile(st.inputs["corpus"], tmp)
        os.replace(tmp, st.outputs["corpus"])
        n = len(read_lines(st.outputs["corpus"]))
        stats = {"mode": self.cfg.mode, "pairs": n, "languages": [self.cfg.src_lang, self.cfg.tgt_lang]}
        _write_atomic(st.outputs["stats"], json.dumps(stats, sort_keys=True) + "\n")
        return {"pairs": n}

    def score(self, st):
        hyps = read_lines(st.inputs["hypotheses"])
        refs = read_lines(st.inputs["references"])
        if st.params["metric"] == "bleu":
            report = corpus_bleu(hyps, refs)
        else:
            report = corpus_chrf(hyps, refs)
        _write_atomic(st.outputs["report"], report.to_json() + "\n")
        return {"score": report.score}


def _hash_paths(paths):
    return {k: sha256_file(v) for k, v in sorted(paths.items())}


def _reusable(record, stage, input_hashes):
    if record is None or record["status"] not in REUSABLE:
        return False
    if record["params"] != stage.params or record["inputs"] != input_hashes:
        return False
    for key, path in stage.outputs.items():
        entry = record["outputs"].get(key)
        if entry is None or entry["path"] != path or not os.path.exists(path):
            return False
        if sha256_file(path) != entry["sha256"]:
            return False
    return True


def plan(config):
    """Stages, inputs, outputs and parameters a run of ``config`` would execute."""
    config.validate()
    return [
        {"name": s.name, "inputs": s.inputs, "outputs": s.outputs, "params": s.params}
        for s in _Runner(config).stages()
    ]


def run(config, manifest_path=None, stop_after=None):
    """Execute (or reuse) every stage of ``config``; returns the manifest.

    ``stop_after`` names a stage after which to stop cleanly, leaving later
    stages for :func:`resume`.
    """
    config.validate()
    runner = _Runner(config)
    runner.work.mkdir(parents=True, exist_ok=True)
    manifest_path = Path(manifest_path or runner.work / MANIFEST_NAME)
    stages = runner.stages()
    if stop_after is not None and stop_after not in {s.name for s in stages}:
        raise ArgumentError(f"unknown stage {stop_after!r}")
    with _locked(manifest_path):
        manifest = PipelineManifest.load(manifest_path) if manifest_path.exists() else PipelineManifest(manifest_path)
        manifest.append({
            "event": "run",
            "config_hash": config.hash(),
            "config": config.to_dict(),
            "defaults": list(config.defaulted),
            "stages": [s.name for s in stages],
            "started": time.time(),
        })
        for stage in stages:
            _run_stage(manifest, stage)
            if stage.name == stop_after:
                break
    return manifest


def _run_stage(manifest, stage):
    input_hashes = _hash_paths(stage.inputs)
    input_hashes["params"] = hashlib.sha256(
        json.dumps(stage.params, sort_keys=True).encode("utf-8")
    ).hexdigest()
    previous = manifest.latest(stage.name)
    if _reusable(previous, stage, input_hashes):
        record = StageRecord(stage.name, "cached", input_hashes, previous["outputs"], stage.params,
                             previous["counts"])
        manifest.append(record.to_event())
        logger.info("stage %s: cached", stage.name)
        return
    manifest.append(StageRecord(stage.name, "running", input_hashes, params=stage.params).to_event())
    start = time.perf_counter()
    try:
        counts = stage.fn(stage)
    except (ParasynthError, OSError, ValueError) as exc:
        elapsed = time.perf_counter() - start
        manifest.append(StageRecord(stage.name, "failed", input_hashes, params=stage.params,
                                    wall_time=elapsed, error=f"{type(exc).__name__}: {exc}").to_event())
        raise StageFailure(stage.name, exc) from exc
    elapsed = time.perf_counter() - start
    outputs = {k: {"path": v, "sha256": sha256_file(v)} for k, v in stage.outputs.items()}
    manifest.append(StageRecord(stage.name, "complete", input_hashes, outputs, stage.params,
                                counts, elapsed).to_event())
    logger.info("stage %s: complete in %.2fs %s", stage.name, elapsed, counts)


def resume(manifest_path, stop_after=None):
    """Re-run the configuration recorded in ``manifest_path``.

    Only stages whose status is not complete, or whose inputs changed, are
    executed again.
    """
    manifest = PipelineManifest.load(manifest_path)
    config = PipelineConfig.from_dict(manifest.header["config"])
    config.defaulted = list(manifest.header.get("defaults", []))
    return run(config, manifest_path, stop_after=stop_after)
