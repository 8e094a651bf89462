"""Joint intent/entity model: sparse+dense fusion into a shared transformer.

Per token, sparse features go through one shared fully-connected layer; the
result is concatenated with the dense features and projected into the
transformer width. A CLS slot is appended after the last token (its dense
part is the sentence encoding) and its transformer output, projected into
the label embedding space, scores intents by dot product. Tokens feed a
CRF tagging head.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .crf import CRF, tags_to_spans
from .featurizer import DenseProvider, FeatureBundle, SparseSpec
from .nn import (
    Adam,
    Embedding,
    Linear,
    Param,
    SparseLinear,
    TransformerEncoder,
    softmax,
    zero_grads,
)

__all__ = [
    "DietConfig",
    "DietModel",
    "Prediction",
    "build_model",
    "negative_sampling_loss",
    "save_model",
    "load_model",
    "register_model_kind",
    "MODEL_FORMAT_VERSION",
]

MODEL_FORMAT_VERSION = 1


@dataclass
class DietConfig:
    transformer_dim: int = 128
    heads: int = 4
    layers: int = 2
    ff_dim: int = 256
    dropout: float = 0.1
    n_negatives: int = 10
    embed_dim: int = 32
    sparse_proj_dim: int = 128
    use_sparse: bool = True
    use_dense: bool = True
    entity_head: bool = True
    max_len: int = 64
    loss_temperature: float = 1.0
    entity_weight: float = 1.0

    def validate(self) -> None:
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")
        if not (self.use_sparse or self.use_dense):
            raise ValueError("at least one of use_sparse/use_dense must be set")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.loss_temperature <= 0:
            raise ValueError("loss_temperature must be positive")


@dataclass
class Prediction:
    ranking: list[tuple[str, float]]
    entities: list[dict]
    cls_embedding: np.ndarray = field(repr=False)

    @property
    def intent(self) -> str:
        return self.ranking[0][0]

    @property
    def confidence(self) -> float:
        return self.ranking[0][1]


@dataclass
class EncodeResult:
    cls_vec: np.ndarray
    token_vecs: np.ndarray


def negative_sampling_loss(label_table: Embedding, cls_vecs: np.ndarray,
                           gold_ids: np.ndarray, n_negatives: int,
                           rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """Softmax loss over [gold, sampled negatives], averaged over the batch.

    Per row, n distinct non-gold labels are drawn uniformly; the loss is
    the cross-entropy of the gold slot among the candidates. Label-table
    gradients accumulate in place; the gradient wrt cls_vecs is returned.
    With n_negatives = |labels| - 1 this is exactly full-softmax
    cross-entropy. Shared by the joint model and the embedding baseline.
    """
    n_labels = label_table.E.value.shape[0]
    if n_labels < 2:
        raise ValueError("negative sampling needs at least 2 labels")
    n_neg = min(n_negatives, n_labels - 1)
    B = cls_vecs.shape[0]
    cand = np.empty((B, 1 + n_neg), dtype=np.int64)
    for i, gold in enumerate(gold_ids):
        cand[i, 0] = gold
        others = np.delete(np.arange(n_labels), gold)
        cand[i, 1:] = rng.choice(others, size=n_neg, replace=False)

    rows = label_table.E.value[cand]                    # [B, 1+n, emb]
    scores = np.einsum("bne,be->bn", rows, cls_vecs).astype(np.float64)
    shifted = scores - scores.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = float(-logp[:, 0].sum() / B)

    d_scores = np.exp(logp)
    d_scores[:, 0] -= 1.0
    d_scores /= B
    d_cls = np.einsum("bn,bne->be", d_scores, rows).astype(cls_vecs.dtype)
    np.add.at(label_table.E.grad, cand,
              d_scores[:, :, None] * cls_vecs[:, None, :])
    return loss, d_cls


class DietModel:
    MODEL_KIND = "diet"

    def __init__(self, cfg: DietConfig, sparse_dim: int, dense_dim: int,
                 intents: list[str], tagset: list[str], seed: int, dtype=np.float32):
        cfg.validate()
        if cfg.use_dense and dense_dim < 1:
            raise ValueError("use_dense requires a dense provider (dense_dim >= 1)")
        if cfg.use_sparse and sparse_dim < 1:
            raise ValueError("use_sparse requires sparse_dim >= 1")
        if len(intents) != len(set(intents)):
            raise ValueError("duplicate intents in inventory")
        self.cfg = cfg
        self.sparse_dim = sparse_dim
        self.dense_dim = dense_dim
        self.intents = list(intents)
        self.tagset = list(tagset)
        self.seed = seed
        self.dtype = dtype
        self._intent_index = {name: i for i, name in enumerate(self.intents)}

        rng = np.random.default_rng(seed)
        in_width = 0
        self.sparse_proj = None
        if cfg.use_sparse:
            self.sparse_proj = SparseLinear(sparse_dim, cfg.sparse_proj_dim, rng,
                                            "sparse_proj", dtype)
            in_width += cfg.sparse_proj_dim
        if cfg.use_dense:
            in_width += dense_dim
        self.fusion_proj = Linear(in_width, cfg.transformer_dim, rng, "fusion", dtype)
        self.positional = Embedding(cfg.max_len + 1, cfg.transformer_dim, rng, "pos", dtype)
        self.encoder = TransformerEncoder(cfg.transformer_dim, cfg.heads, cfg.ff_dim,
                                          cfg.layers, cfg.dropout, rng, "enc", dtype)
        self.intent_out_proj = Linear(cfg.transformer_dim, cfg.embed_dim, rng,
                                      "intent_proj", dtype)
        self.label_table = Embedding(len(intents), cfg.embed_dim, rng, "labels", dtype)
        self.emission_proj = None
        self.crf = None
        if cfg.entity_head:
            self.emission_proj = Linear(cfg.transformer_dim, len(tagset), rng,
                                        "emission", dtype)
            self.crf = CRF(len(tagset), "crf", dtype)
        self._cache: dict | None = None

    def params(self) -> list[Param]:
        out: list[Param] = []
        if self.sparse_proj is not None:
            out += self.sparse_proj.params()
        out += self.fusion_proj.params()
        out += self.positional.params()
        out += self.encoder.params()
        out += self.intent_out_proj.params()
        out += self.label_table.params()
        if self.emission_proj is not None:
            out += self.emission_proj.params()
            out += self.crf.params()
        return out

    # -- forward ----------------------------------------------------------

    def _clip_length(self, bundle: FeatureBundle) -> int:
        if bundle.length > self.cfg.max_len:
            warnings.warn(
                f"utterance of {bundle.length} tokens truncated to max_len="
                f"{self.cfg.max_len}",
                stacklevel=3,
            )
            return self.cfg.max_len
        return bundle.length

    def encode_batch(self, bundles: list[FeatureBundle],
                     rng: np.random.Generator | None = None,
                     training: bool = False) -> tuple[np.ndarray, np.ndarray, list[int]]:
        """(cls_vecs [B,embed], transformer outputs [B,T,D], lengths).

        Sequence i occupies positions 0..len_i-1 with CLS at len_i; the
        rest is padding excluded via the attention mask.
        """
        cfg = self.cfg
        B = len(bundles)
        lengths = [self._clip_length(b) for b in bundles]
        T = max(lengths) + 1

        idx_b, idx_t = [], []
        flat_sparse: list[np.ndarray] = []
        for i, (b, n) in enumerate(zip(bundles, lengths)):
            for t in range(n):
                idx_b.append(i)
                idx_t.append(t)
                if cfg.use_sparse:
                    flat_sparse.append(b.token_sparse[t])
            idx_b.append(i)
            idx_t.append(lengths[i])
            if cfg.use_sparse:
                flat_sparse.append(b.cls_sparse)
        idx_b = np.array(idx_b)
        idx_t = np.array(idx_t)

        parts = []
        if cfg.use_sparse:
            sp_out = self.sparse_proj.forward(flat_sparse)
            xs = np.zeros((B, T, cfg.sparse_proj_dim), dtype=self.dtype)
            xs[idx_b, idx_t] = sp_out
            parts.append(xs)
        if cfg.use_dense:
            xd = np.zeros((B, T, self.dense_dim), dtype=self.dtype)
            for i, (b, n) in enumerate(zip(bundles, lengths)):
                if b.cls_dense is None:
                    raise ValueError("model uses dense features but bundle has none")
                if b.cls_dense.shape[0] != self.dense_dim:
                    raise ValueError(
                        f"dense width {b.cls_dense.shape[0]} != model {self.dense_dim}"
                    )
                if b.token_dense is not None:
                    xd[i, :n] = b.token_dense[:n]
                xd[i, n] = b.cls_dense
            parts.append(xd)
        x_in = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=2)

        mask = np.zeros((B, T), dtype=bool)
        mask[idx_b, idx_t] = True
        pos_ids = np.where(mask, np.arange(T)[None, :], 0)

        x = self.fusion_proj.forward(x_in) + self.positional.forward(pos_ids)
        out = self.encoder.forward(x, mask, rng, training)
        cls_rows = out[np.arange(B), lengths]
        cls_vecs = self.intent_out_proj.forward(cls_rows)
        self._cache = {
            "bundles": bundles, "lengths": lengths, "mask": mask,
            "idx_b": idx_b, "idx_t": idx_t, "out_shape": out.shape,
        }
        return cls_vecs, out, lengths

    def encode(self, bundle: FeatureBundle) -> EncodeResult:
        cls_vecs, out, lengths = self.encode_batch([bundle])
        return EncodeResult(cls_vec=cls_vecs[0], token_vecs=out[0, : lengths[0]])

    def _backward_from(self, d_cls_vecs: np.ndarray, d_out: np.ndarray) -> None:
        """Push gradients from cls_vecs and transformer outputs to all params."""
        cache = self._cache
        B = d_out.shape[0]
        d_cls_rows = self.intent_out_proj.backward(d_cls_vecs)
        d_out = d_out.copy()
        d_out[np.arange(B), cache["lengths"]] += d_cls_rows
        d_x = self.encoder.backward(d_out)
        self.positional.backward(d_x * cache["mask"][:, :, None])
        d_in = self.fusion_proj.backward(d_x)
        if self.cfg.use_sparse:
            d_sp = d_in[..., : self.cfg.sparse_proj_dim]
            self.sparse_proj.backward(d_sp[cache["idx_b"], cache["idx_t"]])

    # -- intent head ------------------------------------------------------

    def intent_similarities(self, cls_vec: np.ndarray) -> np.ndarray:
        """Raw dot-product score per intent, in inventory order."""
        return self.label_table.E.value @ cls_vec

    def confidences(self, scores: np.ndarray) -> np.ndarray:
        return softmax(scores.astype(np.float64) / self.cfg.loss_temperature)

    def intent_loss_batch(self, cls_vecs: np.ndarray, gold_ids: np.ndarray,
                          rng: np.random.Generator) -> tuple[float, np.ndarray]:
        return negative_sampling_loss(self.label_table, cls_vecs, gold_ids,
                                      self.cfg.n_negatives, rng)

    # -- combined objective ------------------------------------------------

    def loss_and_backward(self, bundles: list[FeatureBundle], gold_ids: np.ndarray,
                          gold_tags: list[list[int]] | None,
                          rng: np.random.Generator, training: bool = True) -> float:
        """Mean total loss over the batch; grads end up on params().

        total = intent_loss + entity_weight * crf_nll (when the entity head
        is enabled, which requires gold tag sequences).
        """
        zero_grads(self.params())
        cls_vecs, out, lengths = self.encode_batch(bundles, rng, training)
        loss, d_cls = self.intent_loss_batch(cls_vecs, gold_ids, rng)

        d_out = np.zeros_like(out)
        if self.cfg.entity_head:
            if gold_tags is None:
                raise ValueError("entity head enabled but no gold tags given")
            emissions = self.emission_proj.forward(out)
            d_em = np.zeros_like(emissions)
            w = self.cfg.entity_weight / len(bundles)
            nll_sum = 0.0
            for i, (n, tags) in enumerate(zip(lengths, gold_tags)):
                nll, d_em_i = self.crf.nll(emissions[i, :n], tags[:n])
                nll_sum += nll
                d_em[i, :n] = d_em_i
            loss += self.cfg.entity_weight * nll_sum / len(bundles)
            # crf.nll accumulated unscaled per-sample grads; apply the
            # batch-mean entity weighting in one place
            d_em *= w
            self.crf.transitions.grad *= w
            d_out += self.emission_proj.backward(d_em)

        self._backward_from(d_cls, d_out)
        return loss

    # -- inference ----------------------------------------------------------

    def predict(self, bundle: FeatureBundle,
                token_spans: list[tuple[str, int, int]] | None = None) -> Prediction:
        cls_vecs, out, lengths = self.encode_batch([bundle])
        scores = self.intent_similarities(cls_vecs[0])
        conf = self.confidences(scores)
        order = sorted(range(len(self.intents)),
                       key=lambda i: (-conf[i], self.intents[i]))
        ranking = [(self.intents[i], float(conf[i])) for i in order]

        entities: list[dict] = []
        if self.cfg.entity_head and token_spans:
            emissions = self.emission_proj.forward(out[:, : lengths[0]])[0]
            tag_ids = self.crf.decode(emissions)
            entities = tags_to_spans(tag_ids, token_spans[: lengths[0]], self.tagset)
        return Prediction(ranking=ranking, entities=entities, cls_embedding=cls_vecs[0])

    def predict_intents(self, bundles: list[FeatureBundle]) -> list[str]:
        """Batch top-1 intents; ties resolve alphabetically like predict."""
        cls_vecs, _, _ = self.encode_batch(bundles)
        out = []
        for v in cls_vecs:
            conf = self.confidences(self.intent_similarities(v))
            best = min(range(len(self.intents)), key=lambda i: (-conf[i], self.intents[i]))
            out.append(self.intents[best])
        return out

    def intent_id(self, name: str) -> int:
        return self._intent_index[name]


def build_model(cfg: DietConfig, sparse_dim: int, dense_dim: int, intents: list[str],
                tagset: list[str], seed: int, dtype=np.float32) -> DietModel:
    return DietModel(cfg, sparse_dim, dense_dim, intents, tagset, seed, dtype)


# --------------------------------------------------------------------------
# save / load container (shared by the baselines via model_kind dispatch)


def _provider_meta(provider: DenseProvider | None) -> dict | None:
    if provider is None:
        return None
    meta = {"kind": provider.kind, "dim": provider.dim,
            "fingerprint": provider.fingerprint()}
    if provider.kind == "hash":
        meta["seed"] = provider.seed
    return meta


def save_model(path, model, spec: SparseSpec | None,
               provider: DenseProvider | None) -> None:
    """One-file container: config + vocab + provider (tables embedded) + params.

    Hash providers are stored as (dim, seed) and rebuilt on load; table
    providers ride along so evaluation needs no side files.
    """
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "model_kind": model.MODEL_KIND,
        "config": asdict(model.cfg),
        "sparse_spec": spec.to_dict() if spec is not None else None,
        "provider": _provider_meta(provider),
        "intents": model.intents,
        "tagset": getattr(model, "tagset", []),
        "seed": model.seed,
        "param_names": [p.name for p in model.params()],
    }
    arrays = {f"param:{p.name}": p.value for p in model.params()}
    if provider is not None and provider.kind != "hash":
        keys, vecs = [], []
        for key, vec in provider.items_sorted():
            keys.append(key)
            vecs.append(vec)
        meta["provider"]["keys"] = keys
        arrays["provider:vectors"] = (
            np.stack(vecs) if vecs else np.zeros((0, provider.dim), dtype=np.float32)
        )
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:  # savez on a handle keeps the path verbatim
        np.savez(fh, **arrays)


def _rebuild_provider(meta: dict, z) -> DenseProvider | None:
    pm = meta["provider"]
    if pm is None:
        return None
    if pm["kind"] == "hash":
        return DenseProvider.hash(pm["dim"], pm["seed"])
    vectors = z["provider:vectors"]
    table = {k: vectors[i] for i, k in enumerate(pm["keys"])}
    return DenseProvider(pm["kind"], pm["dim"], table=table)


def load_model(path):
    """(model, sparse_spec, provider). Inverse of save_model, bit-exact params."""
    from . import baselines  # registry import; deferred to avoid a cycle

    z = np.load(path, allow_pickle=False)
    meta = json.loads(bytes(z["meta"]).decode("utf-8"))
    if meta["format_version"] != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {meta['format_version']}")
    cfg_cls, model_cls = _MODEL_KINDS[meta["model_kind"]]
    cfg = cfg_cls(**meta["config"])
    spec = SparseSpec.from_dict(meta["sparse_spec"]) if meta["sparse_spec"] else None
    provider = _rebuild_provider(meta, z)
    model = model_cls(
        cfg,
        sparse_dim=spec.dim if spec else 0,
        dense_dim=provider.dim if provider is not None else 0,
        intents=meta["intents"],
        tagset=meta["tagset"],
        seed=meta["seed"],
    )
    params = {p.name: p for p in model.params()}
    if set(params) != set(meta["param_names"]):
        raise ValueError("parameter inventory mismatch in model file")
    for name, p in params.items():
        stored = z[f"param:{name}"]
        if stored.shape != p.value.shape:
            raise ValueError(f"shape mismatch for {name}")
        p.value[...] = stored
    return model, spec, provider


_MODEL_KINDS: dict[str, tuple[type, type]] = {"diet": (DietConfig, DietModel)}


def register_model_kind(kind: str, cfg_cls: type, model_cls: type) -> None:
    _MODEL_KINDS[kind] = (cfg_cls, model_cls)


def model_kinds() -> list[str]:
    from . import baselines  # noqa: F401  (registers the baseline kinds)

    return sorted(_MODEL_KINDS)


def get_model_kind(kind: str) -> tuple[type, type]:
    """(config class, model class) for a registered kind."""
    from . import baselines  # noqa: F401

    try:
        return _MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; "
                         f"expected one of {sorted(_MODEL_KINDS)}") from None
