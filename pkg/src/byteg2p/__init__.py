"""Byte-level multilingual grapheme-to-phoneme toolkit."""

from .checkpoint import load_model, load_optimizer, save_model, save_optimizer
from .codec import (
    BOS_ID,
    BYTE_OFFSET,
    EOS_ID,
    PAD_ID,
    UNK_TAG,
    VOCAB_SIZE,
    LanguageTag,
    decode,
    encode,
    mask_language_tags,
)
from .config import Paths, RunConfig, load_run_config, materialize
from .decoding import (
    Candidate,
    DecodeConfig,
    batch_decode,
    beam_search,
    greedy_decode,
    greedy_decode_batch,
    sequence_log_prob,
)
from .errors import (
    CheckpointError,
    IncompatibleConfigError,
    ConfigError,
    DegenerateBatchError,
    FormatError,
    G2PError,
    InsufficientDataError,
    InvalidInputError,
    InvalidReferenceError,
    InvalidTagError,
    NumericError,
    UndefinedCorrelationError,
)
from .lexicon import (
    Lexicon,
    LexiconEntry,
    SplitSpec,
    eligible_languages,
    filter_wordlist,
    merge,
    parse_dictionary,
    partition,
    serialize,
)
from .metrics import (
    EvalReport,
    edit_distance,
    evaluate,
    phone_error_rate,
    segment_phones,
    spearman_rho,
    word_error_rate,
)
from .model import ByteTransformer, ModelConfig, cross_entropy_loss, init_params, make_batch
from .optim import AdamWConfig, AdamWState, adamw_step
from .training import TrainConfig, TrainReport, finetune, train, zero_shot_eval

__version__ = "0.1.0"

__all__ = [
    "BOS_ID", "BYTE_OFFSET", "EOS_ID", "PAD_ID", "UNK_TAG", "VOCAB_SIZE",
    "LanguageTag", "decode", "encode", "mask_language_tags",
    "Paths", "RunConfig", "load_run_config", "materialize",
    "Candidate", "DecodeConfig", "batch_decode", "beam_search",
    "greedy_decode", "greedy_decode_batch", "sequence_log_prob",
    "G2PError", "ConfigError", "InvalidInputError", "InvalidTagError",
    "FormatError", "InsufficientDataError", "CheckpointError",
    "IncompatibleConfigError",
    "InvalidReferenceError", "UndefinedCorrelationError",
    "DegenerateBatchError", "NumericError",
    "Lexicon", "LexiconEntry", "SplitSpec", "eligible_languages",
    "filter_wordlist", "merge", "parse_dictionary", "partition", "serialize",
    "EvalReport", "edit_distance", "evaluate", "phone_error_rate",
    "segment_phones", "spearman_rho", "word_error_rate",
    "ByteTransformer", "ModelConfig", "cross_entropy_loss", "init_params",
    "make_batch",
    "AdamWConfig", "AdamWState", "adamw_step",
    "TrainConfig", "TrainReport", "finetune", "train", "zero_shot_eval",
    "load_model", "load_optimizer", "save_model", "save_optimizer",
    "__version__",
]
