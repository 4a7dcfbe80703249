"""imly: imagined lyrics for any audio.

Three stages: repetition-based foreground separation, a GRU+CTC phoneme
recognizer that transcribes speech and non-speech alike, and a
noisy-channel beam decoder that turns phoneme strings into ranked lyric
lines under a lyrics language model.
"""

from .audio_io import AudioBuffer, decode_wav, encode_wav, read_wav, resample, write_wav
from .dsp import FeatureMatrix, Spectrogram, StftConfig, istft, log_mel, stft
from .errors import (
    AudioTooShortError,
    CacheMissError,
    ConfigError,
    DataError,
    ImlyError,
    InfeasibleTargetError,
    LexiconError,
    TruncatedDataError,
    UnsupportedCodecError,
    WavFormatError,
)
from .lexicon_lm import (
    Lexicon,
    ModerationList,
    NGramLM,
    lm_score,
    load_lexicon,
    load_lm,
    moderate_corpus,
    parse_lexicon,
    save_lm,
    train_ngram,
)
from .phoneme_recognizer import (
    BLANK,
    NUM_CLASSES,
    PHONEMES,
    AcousticModelParams,
    PhonemeSequence,
    Posteriorgram,
    TrainConfig,
    beam_decode,
    ctc_grad,
    ctc_loss,
    forward,
    greedy_decode,
    load_params,
    phoneme_indices,
    phoneme_symbols,
    save_params,
    train,
)
from .pipeline import (
    AnalysisCache,
    LyricResult,
    PipelineConfig,
    SegmentationConfig,
    imagine,
    load_models,
    redecode,
    segment,
)
from .separator import SeparatorConfig, separate, similarity_matrix, soft_mask
from .word_decoder import (
    ChannelParams,
    DecoderConfig,
    channel_logprob,
    corrupt,
    decode_words,
    estimate_channel,
    load_channel,
    save_channel,
)

__version__ = "0.1.0"
