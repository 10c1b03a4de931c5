"""The latent-feature bag head and the full DoLFIn classifier.

A shared linear-softmax layer maps each context vector to a distribution
over d latent features.  Summing those per-position distributions and
truncating at 1 gives the bag vector r: soft indicators of which latent
features the text put in play.  The text vector is the ReLU of the
r-weighted sum of per-feature embeddings, and a linear-softmax classifier
sits on top.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .encoders import EncodedSequence, EncoderConfig, build_encoder
from .tensor import ShapeError, Tensor, parameter

DEFAULT_TEXT_WIDTH = 100


@dataclass
class BolfParams:
    """Head parameters; the LSL is shared across all positions."""

    lsl_weight: Tensor        # [d_enc x d]
    lsl_bias: Tensor          # [d]
    feature_table: Tensor     # [d x d_s], one embedding per latent feature
    classifier_weight: Tensor  # [d_s x m]
    classifier_bias: Tensor    # [m]

    @property
    def num_features(self) -> int:
        return self.feature_table.shape[0]

    @property
    def text_width(self) -> int:
        return self.feature_table.shape[1]

    @property
    def num_categories(self) -> int:
        return self.classifier_bias.shape[0]


def init_bolf_params(d_enc: int, num_features: int, text_width: int,
                     num_categories: int, rng: np.random.Generator,
                     dtype=np.float32) -> BolfParams:
    def uniform(fan_in, shape):
        bound = np.sqrt(1.0 / fan_in)
        return parameter(rng.uniform(-bound, bound, size=shape), dtype=dtype)

    return BolfParams(
        lsl_weight=uniform(d_enc, (d_enc, num_features)),
        lsl_bias=parameter(np.zeros(num_features), dtype=dtype),
        feature_table=uniform(num_features, (num_features, text_width)),
        classifier_weight=uniform(text_width, (text_width, num_categories)),
        classifier_bias=parameter(np.zeros(num_categories), dtype=dtype),
    )


def latent_distributions(seq: EncodedSequence, params: BolfParams) -> Tensor:
    """Row-stochastic [n x d]: row i is the feature distribution of position i."""
    if seq.d_enc != params.lsl_weight.shape[0]:
        raise ShapeError(
            f"encoder width {seq.d_enc} does not match LSL input width "
            f"{params.lsl_weight.shape[0]}"
        )
    return ops.softmax_rows(ops.add(ops.matmul(seq.vectors, params.lsl_weight),
                                    params.lsl_bias))


def truncated_sum(u: Tensor) -> Tensor:
    """Bag vector r = min(1, column sums of u); every entry lands in [0, 1]."""
    return ops.clamp_max_one(ops.sum_rows(u))


def compose_text_vector(r: Tensor, params: BolfParams, *, dropout_rate: float = 0.0,
                        rng: np.random.Generator | None = None,
                        training: bool = False) -> Tensor:
    """ReLU of the r-weighted sum of feature embeddings, with train-time dropout."""
    s = ops.relu(ops.matmul(r, params.feature_table))
    return ops.dropout(s, dropout_rate, rng=rng, training=training)


def classifier_logits(s_vec: Tensor, params: BolfParams) -> Tensor:
    return ops.add(ops.matmul(s_vec, params.classifier_weight), params.classifier_bias)


def classify(s_vec: Tensor, params: BolfParams) -> Tensor:
    """Category distribution for a composed text vector."""
    return ops.softmax_rows(classifier_logits(s_vec, params))


@dataclass
class DolfinForward:
    u: Tensor       # [n x d] per-position latent-feature distributions
    r: Tensor       # [d] bag vector
    text_vector: Tensor
    logits: Tensor
    probs: Tensor   # [m]


class DolfinModel:
    """Encoder + latent-feature bag + linear-softmax classifier."""

    def __init__(self, embedding: Tensor, encoder, params: BolfParams,
                 dropout_rate: float = 0.5):
        self.embedding = embedding
        self.encoder = encoder
        self.params = params
        self.dropout_rate = dropout_rate

    @property
    def kind(self) -> str:
        return f"dolfin-{self.encoder.cfg.kind}"

    @property
    def num_categories(self) -> int:
        return self.params.num_categories

    @property
    def num_features(self) -> int:
        return self.params.num_features

    def encode_ids(self, token_ids) -> EncodedSequence:
        x = ops.embedding_lookup(self.embedding, strip_padding(token_ids))
        return self.encoder.encode(x)

    def forward(self, token_ids, *, training: bool = False,
                rng: np.random.Generator | None = None) -> DolfinForward:
        u = latent_distributions(self.encode_ids(token_ids), self.params)
        r = truncated_sum(u)
        assert float(r.data.min()) >= 0.0 and float(r.data.max()) <= 1.0
        s = compose_text_vector(r, self.params, dropout_rate=self.dropout_rate,
                                rng=rng, training=training)
        logits = classifier_logits(s, self.params)
        return DolfinForward(u, r, s, logits, ops.softmax_rows(logits))

    def probabilities(self, token_ids, *, training: bool = False,
                      rng: np.random.Generator | None = None) -> Tensor:
        return self.forward(token_ids, training=training, rng=rng).probs

    def loss(self, token_ids, gold: int, *, training: bool = False,
             rng: np.random.Generator | None = None) -> Tensor:
        fwd = self.forward(token_ids, training=training, rng=rng)
        return ops.cross_entropy(fwd.logits, gold)

    def predict(self, token_ids) -> int:
        return int(np.argmax(self.probabilities(token_ids).data))

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [("embedding", self.embedding)] + self.encoder.parameters() + [
            ("lsl.weight", self.params.lsl_weight),
            ("lsl.bias", self.params.lsl_bias),
            ("features", self.params.feature_table),
            ("classifier.weight", self.params.classifier_weight),
            ("classifier.bias", self.params.classifier_bias),
        ]


def strip_padding(token_ids) -> np.ndarray:
    """Drop trailing padding ids (index 0) so padded positions never reach the model.

    Padding is only legal as a suffix; an interior 0 means the caller
    mixed up its batching.
    """
    idx = np.asarray(token_ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("token ids must be a 1-D sequence")
    nonzero = np.nonzero(idx)[0]
    end = int(nonzero[-1]) + 1 if nonzero.size else 0
    if end == 0:
        raise ValueError("empty input: no non-padding tokens")
    if (idx[:end] == 0).any():
        raise ValueError("padding id 0 found between real tokens")
    return idx[:end]
