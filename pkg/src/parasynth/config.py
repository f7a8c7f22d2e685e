"""Pipeline configuration: a TOML file with one section per stage group.

Example::

    [run]
    languages = ["de", "en"]      # NMT direction: source, target
    domain = "medical"
    mode = "bt_tagged"            # bt_tagged | ft_untagged | bt_speaker
    seed = 1
    work_dir = "work"

    [data]
    in_domain_mono = "medical.en"
    base_corpus = "news.en"       # or base_model = "base.lm"

    [sizes]
    fine_tune_size = 50000
    generate_size = 1000000
    max_tokens = 120

    [generator]
    order = 4
    lambda = 0.7

    [translator]
    kind = "remote"
    url = "http://localhost:8080"

Relative paths are resolved against the directory of the config file.
Every default that is applied is logged and recorded in the run manifest.
"""

import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ._validation import check_choice, check_int, check_real
from .errors import ArgumentError
from .generator import DEFAULT_BLOCK_SIZE, DEFAULT_DISCOUNT, DEFAULT_LAMBDA, DEFAULT_ORDER
from .translator import KINDS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

MODES = ("bt_tagged", "ft_untagged", "bt_speaker")


@dataclass
class GeneratorConfig:
    backend: str = "local"
    url: str | None = None
    order: int = DEFAULT_ORDER
    discount: float = DEFAULT_DISCOUNT
    block_size: int = DEFAULT_BLOCK_SIZE
    lam: float = DEFAULT_LAMBDA
    temperature: float = 1.0
    top_k: int = 40
    max_tokens: int = 200
    n_workers: int = 1
    dedup: bool = True


@dataclass
class TranslatorConfig:
    kind: str = "reverse_mock"
    url: str | None = None
    beam: int = 12
    length_norm: float = 1.0
    batch_size: int = 64
    max_in_flight: int = 4
    retries: int = 3
    backoff: float = 0.5
    placeholder: str | None = None
    mapping: dict = field(default_factory=dict)


@dataclass
class ScoreConfig:
    hypotheses: str | None = None
    references: str | None = None
    metric: str = "bleu"


@dataclass
class PipelineConfig:
    src_lang: str = "de"
    tgt_lang: str = "en"
    domain: str = ""
    mode: str = "bt_tagged"
    seed: int = 0
    work_dir: str = "work"
    in_domain_mono: str | None = None
    base_corpus: str | None = None
    base_model: str | None = None
    parallel: str | None = None
    speakers: str | None = None
    fine_tune_size: int = 50_000
    generate_size: int = 1_000_000
    max_tokens: int = 120
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    translator: TranslatorConfig = field(default_factory=TranslatorConfig)
    score: ScoreConfig = field(default_factory=ScoreConfig)
    defaulted: list = field(default_factory=list, compare=False)

    @property
    def mono_lang(self):
        """Language of the in-domain monolingual (and generated) text."""
        return self.src_lang if self.mode == "ft_untagged" else self.tgt_lang

    def validate(self):
        check_choice(self.mode, "mode", set(MODES))
        if not self.in_domain_mono:
            raise ArgumentError("[data] in_domain_mono is required")
        if self.base_corpus and self.base_model:
            raise ArgumentError("give at most one of [data] base_corpus and base_model")
        if self.mode == "bt_speaker" and not self.speakers:
            raise ArgumentError("mode bt_speaker needs [data] speakers")
        check_int(self.fine_tune_size, "fine_tune_size", min_value=1)
        check_int(self.generate_size, "generate_size", min_value=1)
        check_int(self.max_tokens, "max_tokens", min_value=1)
        check_int(self.seed, "seed")
        g = self.generator
        check_choice(g.backend, "generator.backend", {"local", "remote"})
        check_int(g.order, "generator.order", min_value=1)
        check_real(g.discount, "generator.discount", 0.0, 1.0, low_open=True, high_open=True)
        check_real(g.lam, "generator.lambda", 0.0, 1.0)
        check_real(g.temperature, "generator.temperature", 0.0, low_open=True)
        check_int(g.top_k, "generator.top_k", min_value=1)
        check_int(g.max_tokens, "generator.max_tokens", min_value=1)
        check_int(g.block_size, "generator.block_size", min_value=1)
        check_int(g.n_workers, "generator.n_workers", min_value=1)
        check_choice(self.translator.kind, "translator.kind", KINDS)
        check_choice(self.score.metric, "score.metric", {"bleu", "chrf"})
        if bool(self.score.hypotheses) != bool(self.score.references):
            raise ArgumentError("[score] needs both hypotheses and references")
        return self

    def to_dict(self):
        d = asdict(self)
        d.pop("defaulted")
        return d

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, d):
        """Inverse of :meth:`to_dict` (flat layout, paths already resolved)."""
        d = dict(d)
        sub = {
            "generator": GeneratorConfig(**d.pop("generator", {})),
            "translator": TranslatorConfig(**d.pop("translator", {})),
            "score": ScoreConfig(**d.pop("score", {})),
        }
        return cls(**d, **sub).validate()


_SECTIONS = {
    "run": {"languages", "domain", "mode", "seed", "work_dir"},
    "data": {"in_domain_mono", "base_corpus", "base_model", "parallel", "speakers"},
    "sizes": {"fine_tune_size", "generate_size", "max_tokens"},
}
_PATH_KEYS = {"work_dir", "in_domain_mono", "base_corpus", "base_model", "parallel", "speakers"}
_NOTED_DEFAULTS = {"fine_tune_size", "generate_size", "max_tokens", "mode", "seed"}


def _resolve(base_dir, value):
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else (base_dir / p).resolve())


def parse_config(data, base_dir=".", seed=None):
    """Build a :class:`PipelineConfig` from a parsed TOML mapping."""
    base_dir = Path(base_dir)
    cfg = PipelineConfig()
    known = set(_SECTIONS) | {"generator", "translator", "score"}
    unknown = set(data) - known
    if unknown:
        raise ArgumentError(f"unknown config section(s): {sorted(unknown)}")
    seen = set()
    for section, keys in _SECTIONS.items():
        table = data.get(section, {})
        extra = set(table) - keys
        if extra:
            raise ArgumentError(f"unknown key(s) in [{section}]: {sorted(extra)}")
        for key, value in table.items():
            seen.add(key)
            if key == "languages":
                if not (isinstance(value, list) and len(value) == 2):
                    raise ArgumentError("[run] languages must be a two-element list")
                cfg.src_lang, cfg.tgt_lang = value
            elif key in _PATH_KEYS:
                setattr(cfg, key, _resolve(base_dir, value))
            else:
                setattr(cfg, key, value)
    if "work_dir" not in seen:
        cfg.work_dir = _resolve(base_dir, cfg.work_dir)
    for name, klass in (("generator", GeneratorConfig), ("translator", TranslatorConfig), ("score", ScoreConfig)):
        table = dict(data.get(name, {}))
        if name == "generator" and "lambda" in table:
            table["lam"] = table.pop("lambda")
        allowed = {f.name for f in fields(klass)}
        extra = set(table) - allowed
        if extra:
            raise ArgumentError(f"unknown key(s) in [{name}]: {sorted(extra)}")
        if name == "score":
            for key in ("hypotheses", "references"):
                if key in table:
                    table[key] = _resolve(base_dir, table[key])
        setattr(cfg, name, klass(**table))
        if name == "generator":
            seen.update(f"generator.{k}" for k in table)
    if seed is not None:
        cfg.seed = seed
        seen.add("seed")
    for key in sorted(_NOTED_DEFAULTS - seen):
        logger.info("config: %s not set, using default %r", key, getattr(cfg, key))
        cfg.defaulted.append(key)
    for key in ("order", "lam", "temperature", "top_k"):
        if f"generator.{key}" not in seen:
            logger.info("config: generator.%s not set, using default %r", key, getattr(cfg.generator, key))
            cfg.defaulted.append(f"generator.{key}")
    return cfg.validate()


def load_config(path, seed=None):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ArgumentError(f"{path}: {exc}") from None
    return parse_config(data, path.parent.resolve(), seed=seed)
