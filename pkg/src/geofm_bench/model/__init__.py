from .adapters import AdapterSpec, ConvHeadAdapter, IdentityAdapter, LinearAdapter, apply_adapter, build_adapter
from .decoder import DecoderSpec, SegDecoder, decode
from .encoder import EncoderSpec, ToyViT, encode
from .mae import MaskedAutoencoder, mae_pretrain_step
from .segmodel import (
    BaselineModel,
    ModelSpec,
    SegModel,
    build_model,
    build_reference_baseline,
    param_count,
    predict_mask,
    predict_proba,
    probs_to_mask,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "AdapterSpec", "ConvHeadAdapter", "IdentityAdapter", "LinearAdapter", "apply_adapter",
    "build_adapter", "DecoderSpec", "SegDecoder", "decode", "EncoderSpec", "ToyViT", "encode",
    "MaskedAutoencoder", "mae_pretrain_step", "BaselineModel", "ModelSpec", "SegModel",
    "build_model", "build_reference_baseline", "param_count", "predict_mask", "predict_proba",
    "probs_to_mask", "load_checkpoint", "save_checkpoint",
]
