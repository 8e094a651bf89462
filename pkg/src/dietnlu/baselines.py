"""The two comparison systems: an embedding classifier and a dense-only
transformer classifier.

The embedding baseline feeds the bag of sparse features (cls_sparse)
through a small feed-forward net into the label embedding space and trains
with the same negative-sampling loss as the joint model. The transformer
baseline consumes dense features only and classifies the CLS output with a
plain softmax head; it never sees sparse features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diet import Prediction, negative_sampling_loss, register_model_kind
from .featurizer import FeatureBundle
from .nn import (
    Embedding,
    Linear,
    Param,
    SparseLinear,
    TransformerEncoder,
    cross_entropy,
    softmax,
    zero_grads,
)

__all__ = [
    "EmbedBaselineConfig",
    "EmbedBaseline",
    "TfBaselineConfig",
    "TfBaseline",
]


def _rank(intents: list[str], conf: np.ndarray) -> list[tuple[str, float]]:
    order = sorted(range(len(intents)), key=lambda i: (-conf[i], intents[i]))
    return [(intents[i], float(conf[i])) for i in order]


@dataclass
class EmbedBaselineConfig:
    hidden: int = 64
    embed_dim: int = 32
    n_negatives: int = 10
    loss_temperature: float = 1.0

    def validate(self) -> None:
        if self.hidden < 1 or self.embed_dim < 1:
            raise ValueError("hidden and embed_dim must be >= 1")
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")


class EmbedBaseline:
    """Bag-of-sparse-features → 2-layer feed-forward → label embedding space.

    Order-free by construction: the input is the presence union of the
    token features, so permuting tokens cannot change anything.
    """

    MODEL_KIND = "embed_baseline"

    def __init__(self, cfg: EmbedBaselineConfig, sparse_dim: int, dense_dim: int,
                 intents: list[str], tagset: list[str], seed: int, dtype=np.float32):
        cfg.validate()
        if sparse_dim < 1:
            raise ValueError("embedding baseline requires sparse features")
        self.cfg = cfg
        self.sparse_dim = sparse_dim
        self.dense_dim = 0
        self.intents = list(intents)
        self.tagset = []
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.ff1 = SparseLinear(sparse_dim, cfg.hidden, rng, "ff1", dtype)
        self.ff2 = Linear(cfg.hidden, cfg.embed_dim, rng, "ff2", dtype)
        self.label_table = Embedding(len(intents), cfg.embed_dim, rng, "labels", dtype)
        self._intent_index = {name: i for i, name in enumerate(self.intents)}
        self._pre: np.ndarray | None = None

    def params(self) -> list[Param]:
        return self.ff1.params() + self.ff2.params() + self.label_table.params()

    def encode_batch(self, bundles: list[FeatureBundle]) -> np.ndarray:
        h = self.ff1.forward([b.cls_sparse for b in bundles])
        self._pre = h
        return self.ff2.forward(np.maximum(h, 0))

    def loss_and_backward(self, bundles, gold_ids, gold_tags, rng,
                          training: bool = True) -> float:
        zero_grads(self.params())
        cls_vecs = self.encode_batch(bundles)
        loss, d_cls = negative_sampling_loss(self.label_table, cls_vecs, gold_ids,
                                             self.cfg.n_negatives, rng)
        dh = self.ff2.backward(d_cls) * (self._pre > 0)
        self.ff1.backward(dh)
        return loss

    def _confidences(self, cls_vec: np.ndarray) -> np.ndarray:
        scores = self.label_table.E.value @ cls_vec
        return softmax(scores.astype(np.float64) / self.cfg.loss_temperature)

    def predict(self, bundle: FeatureBundle, token_spans=None) -> Prediction:
        cls_vec = self.encode_batch([bundle])[0]
        conf = self._confidences(cls_vec)
        return Prediction(ranking=_rank(self.intents, conf), entities=[],
                          cls_embedding=cls_vec)

    def predict_intents(self, bundles: list[FeatureBundle]) -> list[str]:
        cls_vecs = self.encode_batch(bundles)
        out = []
        for v in cls_vecs:
            conf = self._confidences(v)
            best = min(range(len(self.intents)), key=lambda i: (-conf[i], self.intents[i]))
            out.append(self.intents[best])
        return out

    def intent_id(self, name: str) -> int:
        return self._intent_index[name]


@dataclass
class TfBaselineConfig:
    transformer_dim: int = 128
    heads: int = 4
    layers: int = 2
    ff_dim: int = 256
    dropout: float = 0.1
    max_len: int = 64

    def validate(self) -> None:
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


class TfBaseline:
    """Dense-only transformer classifier: input proj → encoder → softmax head.

    Sparse features are ignored by construction. With a sentence-table
    provider (no per-token vectors) the sequence degenerates to the CLS
    slot alone.
    """

    MODEL_KIND = "tf_baseline"

    def __init__(self, cfg: TfBaselineConfig, sparse_dim: int, dense_dim: int,
                 intents: list[str], tagset: list[str], seed: int, dtype=np.float32):
        cfg.validate()
        if dense_dim < 1:
            raise ValueError("transformer baseline requires a dense provider")
        self.cfg = cfg
        self.sparse_dim = 0
        self.dense_dim = dense_dim
        self.intents = list(intents)
        self.tagset = []
        self.seed = seed
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.in_proj = Linear(dense_dim, cfg.transformer_dim, rng, "in_proj", dtype)
        self.positional = Embedding(cfg.max_len + 1, cfg.transformer_dim, rng, "pos", dtype)
        self.encoder = TransformerEncoder(cfg.transformer_dim, cfg.heads, cfg.ff_dim,
                                          cfg.layers, cfg.dropout, rng, "enc", dtype)
        self.classifier = Linear(cfg.transformer_dim, len(intents), rng, "cls_head", dtype)
        self._intent_index = {name: i for i, name in enumerate(self.intents)}
        self._cache: dict | None = None

    def params(self) -> list[Param]:
        return (self.in_proj.params() + self.positional.params()
                + self.encoder.params() + self.classifier.params())

    def _lengths(self, bundles: list[FeatureBundle]) -> list[int]:
        out = []
        for b in bundles:
            if b.cls_dense is None:
                raise ValueError("transformer baseline needs dense features")
            n = 0 if b.token_dense is None else min(b.length, self.cfg.max_len)
            out.append(n)
        return out

    def encode_batch(self, bundles: list[FeatureBundle],
                     rng: np.random.Generator | None = None,
                     training: bool = False) -> np.ndarray:
        lengths = self._lengths(bundles)
        B = len(bundles)
        T = max(lengths) + 1
        x_in = np.zeros((B, T, self.dense_dim), dtype=self.dtype)
        mask = np.zeros((B, T), dtype=bool)
        for i, (b, n) in enumerate(zip(bundles, lengths)):
            if b.token_dense is not None:
                x_in[i, :n] = b.token_dense[:n]
            x_in[i, n] = b.cls_dense
            mask[i, : n + 1] = True
        pos_ids = np.where(mask, np.arange(T)[None, :], 0)
        x = self.in_proj.forward(x_in) + self.positional.forward(pos_ids)
        out = self.encoder.forward(x, mask, rng, training)
        logits = self.classifier.forward(out[np.arange(B), lengths])
        self._cache = {"lengths": lengths, "mask": mask, "out_shape": out.shape}
        return logits

    def loss_and_backward(self, bundles, gold_ids, gold_tags, rng,
                          training: bool = True) -> float:
        zero_grads(self.params())
        logits = self.encode_batch(bundles, rng, training)
        loss, d_logits = cross_entropy(logits, np.asarray(gold_ids))
        cache = self._cache
        B = len(bundles)
        d_cls_rows = self.classifier.backward(d_logits)
        d_out = np.zeros(cache["out_shape"], dtype=d_cls_rows.dtype)
        d_out[np.arange(B), cache["lengths"]] = d_cls_rows
        d_x = self.encoder.backward(d_out)
        self.positional.backward(d_x * cache["mask"][:, :, None])
        self.in_proj.backward(d_x)
        return loss

    def predict(self, bundle: FeatureBundle, token_spans=None) -> Prediction:
        logits = self.encode_batch([bundle])[0]
        conf = softmax(logits.astype(np.float64))
        return Prediction(ranking=_rank(self.intents, conf), entities=[],
                          cls_embedding=logits)

    def predict_intents(self, bundles: list[FeatureBundle]) -> list[str]:
        logits = self.encode_batch(bundles)
        out = []
        for row in logits:
            conf = softmax(row.astype(np.float64))
            best = min(range(len(self.intents)), key=lambda i: (-conf[i], self.intents[i]))
            out.append(self.intents[best])
        return out

    def intent_id(self, name: str) -> int:
        return self._intent_index[name]


register_model_kind("embed_baseline", EmbedBaselineConfig, EmbedBaseline)
register_model_kind("tf_baseline", TfBaselineConfig, TfBaseline)
