"""Model factory shared by the CLI, checkpointing, and the test suite."""

from __future__ import annotations

import numpy as np

from .baselines import BiLstmClassifier, CnnClassifier
from .bolf import DolfinModel, init_bolf_params
from .encoders import BILSTM, CONV, EncoderConfig, build_encoder
from .tensor import Tensor, parameter

MODEL_KINDS = ("cnn", "bilstm", "dolfin-conv", "dolfin-bilstm")


def encoder_kind_for(model_kind: str) -> str:
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}; choose one of {MODEL_KINDS}")
    return BILSTM if model_kind.endswith("bilstm") else CONV


def random_embedding(vocab_size: int, embed_dim: int, rng: np.random.Generator,
                     dtype=np.float32) -> Tensor:
    """Uniform [-0.25, 0.25] rows with the padding row (index 0) pinned to zero."""
    mat = rng.uniform(-0.25, 0.25, size=(vocab_size, embed_dim))
    mat[0] = 0.0
    return parameter(mat, dtype=dtype)


def build_model(kind: str, *, num_categories: int, vocab_size: int | None = None,
                embedding: Tensor | None = None, embed_dim: int = 300,
                latent_features: int = 20, text_width: int = 100,
                encoder_cfg: EncoderConfig | None = None, seed: int = 0,
                dtype=np.float32, dropout_rate: float = 0.5):
    """Construct one of the four architectures with seeded initialization.

    Pass either a ready embedding tensor (e.g. from the GloVe loader) or a
    vocab size to draw a random one.
    """
    enc_kind = encoder_kind_for(kind)
    if encoder_cfg is None:
        encoder_cfg = EncoderConfig(kind=enc_kind)
    elif encoder_cfg.kind != enc_kind:
        raise ValueError(f"encoder kind {encoder_cfg.kind!r} does not fit model {kind!r}")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if embedding is None:
        if vocab_size is None:
            raise ValueError("build_model needs an embedding tensor or a vocab size")
        embedding = random_embedding(vocab_size, embed_dim, rng, dtype)
    elif embedding.shape[1] != embed_dim:
        embed_dim = embedding.shape[1]

    encoder = build_encoder(encoder_cfg, embed_dim, rng, dtype)
    if kind.startswith("dolfin"):
        params = init_bolf_params(encoder.output_width, latent_features, text_width,
                                  num_categories, rng, dtype)
        return DolfinModel(embedding, encoder, params, dropout_rate)
    cls = CnnClassifier if kind == "cnn" else BiLstmClassifier
    return cls(embedding, encoder, num_categories, rng, dtype, dropout_rate)
