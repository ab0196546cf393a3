"""Discrete-diffusion recognition of LaTeX math over symbol-aware tokens.

Image-free: a confusion channel plays the role of the visual encoder, and a
small numpy denoiser is refined step by step from a fully masked canvas.
"""

__version__ = "0.1.0"

from .latex import lex, normalize, parse, render
from .sat import (
    SatSequence,
    Vocabulary,
    build_vocabulary,
    encode,
    sat_detokenize,
    sat_tokenize,
)
from .diffusion import DiffusionState, TokenDistribution, forward_mask, remask, reverse_decode, decode_n
from .channel import ConfusionChannel, default_ambiguity_preset, identity_channel, observe
from .models import (
    ModelParams,
    TrainConfig,
    copy_denoiser,
    forward_model,
    loss_ce,
    loss_rmml,
    oracle_denoiser,
    train,
)
from .metrics import MetricsReport, corpus_cer, diversity_histogram, evaluate, token_edit_distance
from .corpus import GrammarConfig, generate, load_inkml_truth, load_lines, split
