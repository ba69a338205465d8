"""ink2tex: online handwritten-math recognition.

Pen trajectories go in; LaTeX token sequences come out. The model is a
stacked bidirectional GRU encoder with pooling over time feeding a GRU
decoder through coverage-based attention, trained end to end with AdaDelta
on a from-scratch reverse-mode autodiff engine (numpy, float64).
"""

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    EmptyInkError,
    GraphError,
    Ink2TexError,
    InkFormatError,
    InkParseError,
    ModelIOError,
    TokenError,
    TrainingError,
    VocabularyError,
)
from .ink_io import (
    EOS_INDEX,
    EOS_TOKEN,
    SOS_INDEX,
    SOS_TOKEN,
    UNK_INDEX,
    UNK_TOKEN,
    Ink,
    TrajectoryPoint,
    Vocabulary,
    load_vocabulary,
    parse_inkml,
    parse_points,
    serialize_points,
)
from .preprocess import (
    DEFAULT_SPACING,
    FEATURE_DIM,
    NORM_HEIGHT,
    FeatureSequence,
    extract_features,
    features_from_ink,
    normalize,
    resample,
)
from .numerics import (
    ModelConfig,
    ModelParams,
    Tensor,
    backward,
    init_params,
    load_model,
    model_bytes,
    no_grad,
    save_model,
)
from .encoder import AnnotationSequence, EncoderConfig, encode, output_length
from .attention import AttentionState, attend, attend_plain, init_attention_state
from .decoder import DecoderStep, decode_step, init_state
from .train import Sample, TrainConfig, sequence_loss, train_loop, wer
from .infer import (
    AttentionTrace,
    BeamHypothesis,
    DecodeResult,
    beam_search,
    ensemble_log_prob,
    export_attention,
    exprate,
    strip_eos,
)
from .synth import STROKE_TEMPLATES, SynthSpec, generate, vocabulary_for

__version__ = "0.1.0"
