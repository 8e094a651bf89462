"""Training loops, class-balanced batching, the runs x k-fold
cross-validation protocol, and the train-on-clean / test-elsewhere
protocol.

All randomness flows from explicit integer seeds: fold assignment uses
base_seed + run, model training inside run r and fold f uses
(base_seed + r) * 100 + f, so any fold can be re-trained in isolation.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .corpus import (
    Dataset,
    DatasetError,
    stratified_kfold,
    tokenize,
    tokenize_with_spans,
)
from .crf import bio_tagset, spans_to_tags
from .diet import get_model_kind
from .evaluation import ScoreSummary, micro_f1
from .featurizer import DenseProvider, featurize, fit_sparse
from .nn import Adam

__all__ = [
    "CVReport",
    "FeatConfig",
    "TrainConfig",
    "TrainResult",
    "TrainTestReport",
    "cross_validate",
    "make_batches",
    "predict_dataset",
    "train",
    "train_test",
]


@dataclass(frozen=True)
class FeatConfig:
    ngram_min: int = 1
    ngram_max: int = 4
    min_freq: int = 1
    oov_bucket: bool = True


@dataclass(frozen=True)
class TrainConfig:
    model_kind: str = "diet"
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    balanced_batching: bool = True
    early_stop_patience: int | None = None
    lr: float = 1e-3
    model_overrides: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        get_model_kind(self.model_kind)


@dataclass
class TrainResult:
    model: object
    spec: object
    provider: DenseProvider | None
    loss_history: list[float]
    intents: list[str]
    tagset: list[str]


def config_fingerprint(cfg: TrainConfig, feat_cfg: FeatConfig,
                       provider: DenseProvider | None,
                       extra: dict | None = None) -> str:
    payload = {
        "train": asdict(cfg),
        "feat": asdict(feat_cfg),
        "provider": provider.fingerprint() if provider is not None else None,
    }
    if extra:
        payload.update(extra)
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _tokenized(ds: Dataset) -> list[list[str]]:
    out = []
    for u in ds.utterances:
        tokens = tokenize(u.text)
        if not tokens:
            raise DatasetError(f"utterance {u.id!r} has no usable tokens")
        out.append(tokens)
    return out


def _gold_tags(ds: Dataset, tagset: list[str]) -> list[list[int]]:
    tags = []
    for u in ds.utterances:
        spans = tokenize_with_spans(u.text)
        tags.append(spans_to_tags(u.entities, spans, tagset))
    return tags


def make_batches(gold_ids: np.ndarray, batch_size: int, balanced: bool,
                 rng: np.random.Generator) -> list[np.ndarray]:
    """Index batches covering every sample exactly once.

    Balanced mode deals each class round-robin over the batches (with a
    random per-class offset), so every batch sees every class whenever a
    class has at least as many samples as there are batches. Batch sizes
    may exceed batch_size by up to the number of classes.
    """
    n = len(gold_ids)
    n_batches = max(1, math.ceil(n / batch_size))
    if not balanced:
        order = rng.permutation(n)
        return [order[i * batch_size:(i + 1) * batch_size]
                for i in range(n_batches)]
    by_class: dict[int, list[int]] = {}
    for i, g in enumerate(gold_ids):
        by_class.setdefault(int(g), []).append(i)
    buckets: list[list[int]] = [[] for _ in range(n_batches)]
    for cls in sorted(by_class):
        ids = np.array(by_class[cls], dtype=np.int64)
        rng.shuffle(ids)
        offset = int(rng.integers(n_batches))
        for j, idx in enumerate(ids):
            buckets[(offset + j) % n_batches].append(int(idx))
    out = []
    for bucket in buckets:
        if not bucket:
            continue
        arr = np.array(bucket, dtype=np.int64)
        rng.shuffle(arr)
        out.append(arr)
    return out


def train(ds_train: Dataset, cfg: TrainConfig,
          feat_cfg: FeatConfig | None = None,
          provider: DenseProvider | None = None) -> TrainResult:
    """Fit features on ds_train only, then run seeded mini-batch epochs."""
    cfg.validate()
    feat_cfg = feat_cfg or FeatConfig()
    if not ds_train.utterances:
        raise DatasetError("empty training dataset")
    intents = sorted({u.intent for u in ds_train.utterances})
    if len(intents) < 2:
        raise DatasetError("training needs at least 2 intents")

    token_lists = _tokenized(ds_train)
    spec = fit_sparse(token_lists, (feat_cfg.ngram_min, feat_cfg.ngram_max),
                      feat_cfg.min_freq, feat_cfg.oov_bucket)
    entity_types = {e.entity for u in ds_train.utterances for e in u.entities}
    tagset = bio_tagset(entity_types)
    bundles = [featurize(spec, provider, toks, u.text)
               for u, toks in zip(ds_train.utterances, token_lists)]
    gold = np.array([intents.index(u.intent) for u in ds_train.utterances])
    tags = _gold_tags(ds_train, tagset)

    cfg_cls, model_cls = get_model_kind(cfg.model_kind)
    overrides = dict(cfg.model_overrides)
    if cfg.model_kind == "diet" and "use_dense" not in overrides:
        overrides["use_dense"] = provider is not None
    model_cfg = cfg_cls(**overrides)
    model = model_cls(model_cfg, sparse_dim=spec.dim,
                      dense_dim=provider.dim if provider is not None else 0,
                      intents=intents, tagset=tagset, seed=cfg.seed)

    opt = Adam(model.params(), lr=cfg.lr)
    rng_batch = np.random.default_rng(cfg.seed)
    rng_train = np.random.default_rng(cfg.seed + 1)
    history: list[float] = []
    best = math.inf
    since_best = 0
    for _ in range(cfg.epochs):
        losses = []
        for idx in make_batches(gold, cfg.batch_size, cfg.balanced_batching,
                                rng_batch):
            loss = model.loss_and_backward(
                [bundles[i] for i in idx], gold[idx], [tags[i] for i in idx],
                rng_train, training=True)
            opt.step()
            losses.append(loss)
        mean_loss = float(np.mean(losses))
        history.append(mean_loss)
        if cfg.early_stop_patience is not None:
            if mean_loss < best - 1e-6:
                best = mean_loss
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.early_stop_patience:
                    break
    return TrainResult(model=model, spec=spec, provider=provider,
                       loss_history=history, intents=intents, tagset=tagset)


def predict_dataset(result: TrainResult, ds: Dataset) -> list[str]:
    token_lists = _tokenized(ds)
    bundles = [featurize(result.spec, result.provider, toks, u.text)
               for u, toks in zip(ds.utterances, token_lists)]
    return result.model.predict_intents(bundles)


# --------------------------------------------------------------------------
# cross-validation


@dataclass
class CVReport:
    model_kind: str
    k: int
    runs: int
    base_seed: int
    per_run_fold_scores: list[list[float]]
    per_run_scores: list[float]
    mean_micro_f1: float
    std_micro_f1: float
    dataset_fingerprint: str
    config_fingerprint: str
    warnings: list[str]

    def summary(self, label: str = "") -> ScoreSummary:
        return ScoreSummary(mean=self.mean_micro_f1, std=self.std_micro_f1,
                            dataset_fingerprint=self.dataset_fingerprint,
                            label=label or self.model_kind)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def cross_validate(ds: Dataset, k: int, runs: int, cfg: TrainConfig,
                   feat_cfg: FeatConfig | None = None,
                   provider: DenseProvider | None = None) -> CVReport:
    """runs x k-fold CV: per run, stratified folds are reshuffled, each
    fold's model trains from scratch, and the run's score is the micro-F1
    of the pooled fold predictions. Reported std is the population std
    over the per-run scores."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    feat_cfg = feat_cfg or FeatConfig()
    all_ids = {u.id for u in ds.utterances}
    per_run_fold: list[list[float]] = []
    per_run: list[float] = []
    warn: list[str] = []
    for r in range(runs):
        plan = stratified_kfold(ds, k, seed=cfg.seed + r)
        warn.extend(w for w in plan.warnings if w not in warn)
        pooled: dict[str, str] = {}
        fold_scores = []
        for f in range(k):
            ds_tr, ds_te = plan.split(ds, f)
            fold_cfg = replace(cfg, seed=(cfg.seed + r) * 100 + f)
            result = train(ds_tr, fold_cfg, feat_cfg, provider)
            preds = predict_dataset(result, ds_te)
            gold = [u.intent for u in ds_te.utterances]
            fold_scores.append(micro_f1(gold, preds))
            for u, p in zip(ds_te.utterances, preds):
                pooled[u.id] = p
        if set(pooled) != all_ids:
            raise RuntimeError("fold predictions do not partition the dataset")
        gold_all = [u.intent for u in ds.utterances]
        pred_all = [pooled[u.id] for u in ds.utterances]
        per_run.append(micro_f1(gold_all, pred_all))
        per_run_fold.append(fold_scores)
    return CVReport(
        model_kind=cfg.model_kind,
        k=k,
        runs=runs,
        base_seed=cfg.seed,
        per_run_fold_scores=per_run_fold,
        per_run_scores=per_run,
        mean_micro_f1=float(np.mean(per_run)),
        std_micro_f1=float(np.std(per_run)),
        dataset_fingerprint=ds.fingerprint(),
        config_fingerprint=config_fingerprint(cfg, feat_cfg, provider,
                                              extra={"k": k, "runs": runs}),
        warnings=warn,
    )


# --------------------------------------------------------------------------
# fixed train/test protocol


@dataclass
class TrainTestReport:
    model_kind: str
    runs: int
    base_seed: int
    scores: list[float]
    mean_micro_f1: float
    std_micro_f1: float
    train_fingerprint: str
    test_fingerprint: str
    config_fingerprint: str

    def summary(self, label: str = "") -> ScoreSummary:
        return ScoreSummary(mean=self.mean_micro_f1, std=self.std_micro_f1,
                            dataset_fingerprint=self.test_fingerprint,
                            label=label or self.model_kind)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def train_test(ds_train: Dataset, ds_test: Dataset, runs: int,
               cfg: TrainConfig, feat_cfg: FeatConfig | None = None,
               provider: DenseProvider | None = None) -> TrainTestReport:
    """Train on ds_train, score on ds_test, mean +- std over `runs` seeds.

    Test rows whose gold intent is missing from the train inventory stay
    in and necessarily score as errors.
    """
    if not ds_test.utterances:
        raise DatasetError("empty test set")
    feat_cfg = feat_cfg or FeatConfig()
    scores = []
    gold = [u.intent for u in ds_test.utterances]
    for r in range(runs):
        result = train(ds_train, replace(cfg, seed=cfg.seed + r),
                       feat_cfg, provider)
        preds = predict_dataset(result, ds_test)
        scores.append(micro_f1(gold, preds))
    return TrainTestReport(
        model_kind=cfg.model_kind,
        runs=runs,
        base_seed=cfg.seed,
        scores=scores,
        mean_micro_f1=float(np.mean(scores)),
        std_micro_f1=float(np.std(scores)),
        train_fingerprint=ds_train.fingerprint(),
        test_fingerprint=ds_test.fingerprint(),
        config_fingerprint=config_fingerprint(cfg, feat_cfg, provider,
                                              extra={"runs": runs}),
    )
