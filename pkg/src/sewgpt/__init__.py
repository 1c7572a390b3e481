"""Autoregressive sewing-pattern generation with a from-scratch numpy transformer."""
from .codec import NormStats, QuantConfig, TokenSeq, decode, encode, fit_stats
from .conditioning import CondEmbedding, ProviderSpec, embed_caption, project_condition
from .model import ModelConfig, forward, init_params, nll_loss
from .pattern import (Edge, Panel, Pattern, Placement, Stitch, load_pattern, dump_pattern,
                      validate_pattern)
from .sampling import SamplerOptions, sample
from .stitches import StitchMatchConfig, assign_stitch_tags, recover_stitches

__version__ = "0.1.0"

__all__ = [
    "NormStats", "QuantConfig", "TokenSeq", "decode", "encode", "fit_stats",
    "CondEmbedding", "ProviderSpec", "embed_caption", "project_condition",
    "ModelConfig", "forward", "init_params", "nll_loss",
    "Edge", "Panel", "Pattern", "Placement", "Stitch", "load_pattern", "dump_pattern",
    "validate_pattern", "SamplerOptions", "sample",
    "StitchMatchConfig", "assign_stitch_tags", "recover_stitches",
]
