"""Baseline classifiers: max-over-time CNN and endpoint-concatenation BiLSTM.

Both share the encoders, optimizer, and data pipeline with the
latent-feature models, so accuracy comparisons isolate the aggregation
head.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .bolf import strip_padding
from .encoders import BILSTM, CONV, bilstm_endpoints
from .tensor import Tensor, parameter


class _BaselineClassifier:
    def __init__(self, embedding: Tensor, encoder, num_categories: int,
                 rng: np.random.Generator, dtype=np.float32, dropout_rate: float = 0.5):
        self.embedding = embedding
        self.encoder = encoder
        self.dropout_rate = dropout_rate
        width = self._pooled_width()
        bound = np.sqrt(1.0 / width)
        self.classifier_weight = parameter(
            rng.uniform(-bound, bound, size=(width, num_categories)), dtype=dtype)
        self.classifier_bias = parameter(np.zeros(num_categories), dtype=dtype)

    @property
    def num_categories(self) -> int:
        return self.classifier_bias.shape[0]

    def _aggregate(self, token_ids) -> Tensor:
        x = ops.embedding_lookup(self.embedding, strip_padding(token_ids))
        return self._pool(self.encoder.encode(x))

    def logits(self, token_ids, *, training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        pooled = ops.dropout(self._aggregate(token_ids), self.dropout_rate,
                             rng=rng, training=training)
        return ops.add(ops.matmul(pooled, self.classifier_weight), self.classifier_bias)

    def probabilities(self, token_ids, *, training: bool = False,
                      rng: np.random.Generator | None = None) -> Tensor:
        return ops.softmax_rows(self.logits(token_ids, training=training, rng=rng))

    def loss(self, token_ids, gold: int, *, training: bool = False,
             rng: np.random.Generator | None = None) -> Tensor:
        return ops.cross_entropy(self.logits(token_ids, training=training, rng=rng), gold)

    def predict(self, token_ids) -> int:
        return int(np.argmax(self.probabilities(token_ids).data))

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [("embedding", self.embedding)] + self.encoder.parameters() + [
            ("classifier.weight", self.classifier_weight),
            ("classifier.bias", self.classifier_bias),
        ]


class CnnClassifier(_BaselineClassifier):
    """Convolution, max pooling over time, dropout, linear-softmax."""

    kind = "cnn"

    def _pooled_width(self) -> int:
        assert self.encoder.cfg.kind == CONV
        return self.encoder.output_width

    def _pool(self, seq) -> Tensor:
        return ops.maxpool_over_time(seq.vectors)


class BiLstmClassifier(_BaselineClassifier):
    """BiLSTM whose endpoint states (backward at 0, forward at n-1) feed the classifier."""

    kind = "bilstm"

    def _pooled_width(self) -> int:
        assert self.encoder.cfg.kind == BILSTM
        return self.encoder.output_width

    def _pool(self, seq) -> Tensor:
        return bilstm_endpoints(seq)


def cnn_forward(model: CnnClassifier, token_ids, *, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
    return model.probabilities(token_ids, training=training, rng=rng)


def bilstm_forward(model: BiLstmClassifier, token_ids, *, training: bool = False,
                   rng: np.random.Generator | None = None) -> Tensor:
    return model.probabilities(token_ids, training=training, rng=rng)
