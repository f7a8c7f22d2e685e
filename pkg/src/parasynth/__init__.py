"""Synthetic in-domain parallel data from small monolingual corpora.

A fine-tunable n-gram generator produces in-domain text which is then
back- or forward-translated into a synthetic parallel corpus. Around that sit
corpus I/O, Moses-style tokenization and truecasing, BPE segmentation, BLEU
and chrF scoring and a resumable, manifest-driven pipeline.
"""

from .config import PipelineConfig, load_config, parse_config
from .corpus import (
    CleanStats,
    MonoCorpus,
    ParallelCorpus,
    Provenance,
    Sentence,
    SentencePair,
    clean_mono,
    ingest_mono,
    ingest_parallel,
    read_parallel_tsv,
    sample_split,
    write_mono,
    write_parallel,
    write_parallel_tsv,
)
from .errors import (
    AlignmentError,
    ArgumentError,
    IngestionError,
    ManifestParseError,
    ParasynthError,
    StageFailure,
    TrainingError,
    TransportError,
    UnknownSpeakerError,
)
from .generator import (
    GenerationParams,
    InterpolatedLM,
    LocalBackend,
    NgramLM,
    NgramModel,
    RemoteGenerator,
    extract_lines,
    finetune,
    generate,
    load_lm,
    save_lm,
    train_ngram,
)
from .metrics import BleuReport, ChrfReport, corpus_bleu, corpus_chrf
from .pipeline import PipelineManifest, plan, resume, run
from .subword import SubwordModel, SubwordSegmenter, apply_subword, learn_subword, undo_subword
from .synthesis import (
    SpeakerRegistry,
    assemble_back_translation,
    assemble_forward_translation,
    assemble_speaker_back_translation,
    personalized_prompts,
    strip_source_tag,
    tag_speakers,
)
from .textproc import (
    MosesTokenizer,
    Truecaser,
    TruecaseModel,
    detokenize,
    detruecase,
    tokenize,
    train_truecaser,
    truecase,
)
from .translator import (
    DictionaryMock,
    IdentityMock,
    RemoteTranslator,
    ReverseMock,
    TranslatorBackend,
    make_translator,
    translate_batch,
)

__version__ = "0.1.0"
