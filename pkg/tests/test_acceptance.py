"""Release gate: one test per shipping criterion, numbered so that
``pytest -v`` prints a pass/fail line for each.

Criteria 1-12 exercise the engine end to end; criterion 13 checks the
embedding exporter that lives in exporter/ and is skipped until that
package has been built.
"""

import itertools
import json
import math
import shutil
import subprocess
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from dietnlu.corpus import (
    Dataset,
    Entity,
    Utterance,
    compute_stats,
    save_dataset,
    stratified_kfold,
    tokenize,
)
from dietnlu.crf import (
    bio_tagset,
    crf_log_z,
    crf_score_path,
    crf_viterbi,
    spans_to_tags,
)
from dietnlu.diet import DietConfig, build_model, negative_sampling_loss
from dietnlu.evaluation import (
    ScoreSummary,
    compare_reports,
    confusion_matrix,
    micro_f1,
    shift_report,
)
from dietnlu.featurizer import (
    DenseProvider,
    featurize,
    fit_sparse,
    hash_embed,
    load_dense_file,
    normalize_key,
    save_dense_file,
)
from dietnlu.nn import Embedding, grad_check
from dietnlu.synthetic import (
    make_benchmark,
    make_centroid_provider,
    make_shifted,
    make_table_pair,
    make_token_centroid_provider,
)
from dietnlu.trainer import TrainConfig, cross_validate, train_test

REPO = Path(__file__).resolve().parents[1]
EXPORTER_CLI = REPO / "exporter" / "dist" / "cli.js"

DIET_BENCH = dict(transformer_dim=64, ff_dim=128, sparse_proj_dim=64, heads=4)
TF_BENCH = dict(transformer_dim=64, ff_dim=128, heads=4)


def bench_cfg(kind: str, overrides: dict) -> TrainConfig:
    return TrainConfig(model_kind=kind, epochs=30, batch_size=32, lr=2e-3,
                       seed=0, model_overrides=overrides)


@pytest.fixture(scope="module")
def benchmark():
    return make_benchmark(seed=0)


@pytest.fixture(scope="module")
def diet_benchmark_cv(benchmark):
    """3 runs of 10-fold CV for the flagship model; shared because it is
    by far the most expensive piece of the gate."""
    provider = DenseProvider.hash(32, 0)
    t0 = time.monotonic()
    report = cross_validate(benchmark, k=10, runs=3,
                            cfg=bench_cfg("diet", DIET_BENCH),
                            provider=provider)
    return report, time.monotonic() - t0


def test_criterion_01_corpus_stats_identities():
    t0 = time.monotonic()
    planting_poc, _ = make_table_pair("planting")
    watering_poc, _ = make_table_pair("watering")
    sp = compute_stats(planting_poc)
    sw = compute_stats(watering_poc)
    assert round(sp.avg_words_per_sample, 2) == 5.26  # 10141 / 1927
    assert round(sw.avg_words_per_sample, 2) == 4.95  # 10469 / 2115
    assert round(sp.avg_samples_per_intent, 1) == 137.6  # 1927 / 14
    assert time.monotonic() - t0 < 1.0


def test_criterion_02_reported_gain_arithmetic():
    t0 = time.monotonic()
    for base, better, gain in [(90.50, 95.88, 5.38), (92.43, 97.69, 5.26)]:
        a = ScoreSummary(mean=base, std=0.5, dataset_fingerprint="shared")
        b = ScoreSummary(mean=better, std=0.4, dataset_fingerprint="shared")
        assert round(compare_reports(a, b)["gain"], 2) == gain
    assert time.monotonic() - t0 < 1.0


def test_criterion_03_shift_fixture_metrics():
    t0 = time.monotonic()
    poc, deployment = make_table_pair("planting")
    report = shift_report(poc, deployment)
    assert abs(report.a.oos_share - 0.288) <= 1e-4
    assert abs(report.b.oos_share - 0.4625) <= 1e-4
    assert set(report.unseen_a_to_b) == {"next-step", "answer-invalid"}
    assert report.unseen_b_to_a == []
    assert time.monotonic() - t0 < 1.0


# --- criterion 4 -----------------------------------------------------------

GRAD_CORPUS = [
    ("yes please", "affirm"),
    ("no thanks", "deny"),
    ("count five now", "counting"),
    ("five flowers", "counting"),
    ("that is", "affirm"),
    ("not really", "deny"),
]


def _grad_fixture(seed: int, dtype=np.float64):
    texts = [t for t, _ in GRAD_CORPUS]
    intents = sorted({i for _, i in GRAD_CORPUS})
    tagset = bio_tagset({"number"})
    spec = fit_sparse([tokenize(t) for t in texts], (1, 3), 1)
    provider = DenseProvider.hash(5, seed=11)
    bundles = [featurize(spec, provider, tokenize(t), t) for t in texts]
    gold = np.array([intents.index(i) for _, i in GRAD_CORPUS])
    tags = []
    for text in texts:
        ents = []
        at = text.find("five")
        if at >= 0:
            ents.append(Entity(start=at, end=at + 4, entity="number",
                               value="five"))
        spans = [(tok, text.find(tok), text.find(tok) + len(tok))
                 for tok in tokenize(text)]
        tags.append(spans_to_tags(ents, spans, tagset))
    cfg = DietConfig(transformer_dim=8, heads=2, ff_dim=16, sparse_proj_dim=8,
                     embed_dim=4, dropout=0.0, max_len=4)
    model = build_model(cfg, spec.dim, provider.dim, intents, tagset,
                        seed=seed, dtype=dtype)
    return model, bundles, gold, tags


def _kink_free_case(seed: int, margin: float = 6e-3):
    # resample until every ReLU pre-activation sits clear of zero, so the
    # finite-difference probe cannot cross a kink
    for attempt in range(60):
        model, bundles, gold, tags = _grad_fixture(seed)
        start = attempt % (len(bundles) - 1)
        batch = bundles[start:start + 2]
        g = gold[start:start + 2]
        tg = tags[start:start + 2]

        def loss_fn():
            return model.loss_and_backward(batch, g, tg,
                                           np.random.default_rng(seed + 1),
                                           training=False)

        loss_fn()
        margins = [float(np.abs(blk.ff._pre).min())
                   for blk in model.encoder.blocks]
        if min(margins) > margin:
            return model, loss_fn
        seed += 1009
    raise AssertionError("no kink-free configuration found")


def test_criterion_04_joint_loss_gradients():
    t0 = time.monotonic()
    worst_by_seed = []
    for seed in range(20):
        model, loss_fn = _kink_free_case(seed)
        report = grad_check(loss_fn, model.params(), h=1e-4,
                            max_coords_per_param=6,
                            rng=np.random.default_rng(seed))
        worst_by_seed.append(report.max_rel_error)
        assert report.ok(1e-3), (
            f"seed {seed}: {report.max_rel_error:.2e} "
            f"at {report.worst_param}[{report.worst_index}]")
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"gradient sweep took {elapsed:.1f}s"


def test_criterion_05_crf_brute_force_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    for T, L in itertools.product(range(1, 5), range(1, 4)):
        for _ in range(50):
            em = rng.normal(size=(T, L))
            tr = rng.normal(size=(L + 2, L + 2))
            paths = list(itertools.product(range(L), repeat=T))
            scores = np.array([crf_score_path(em, tr, list(p))
                               for p in paths])
            m = scores.max()
            brute_log_z = m + math.log(np.exp(scores - m).sum())
            log_z = crf_log_z(em, tr)
            assert abs(log_z - brute_log_z) < 1e-6
            assert crf_viterbi(em, tr) == list(paths[int(np.argmax(scores))])
            assert abs(np.exp(scores - log_z).sum() - 1.0) < 1e-6
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"oracle sweep took {elapsed:.1f}s"


def test_criterion_06_negative_sampling_equals_cross_entropy():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n_labels = int(rng.integers(2, 9))
        dim = int(rng.integers(3, 7))
        B = int(rng.integers(1, 5))
        table = Embedding(n_labels, dim, rng, "labels")
        cls_vecs = rng.normal(size=(B, dim))
        gold = rng.integers(0, n_labels, size=B)
        loss, _ = negative_sampling_loss(table, cls_vecs, gold,
                                         n_negatives=n_labels - 1, rng=rng)
        scores = cls_vecs.astype(np.float64) @ table.E.value.T
        m = scores.max(axis=1, keepdims=True)
        log_probs = scores - (m + np.log(np.exp(scores - m).sum(axis=1,
                                                                keepdims=True)))
        full_ce = -log_probs[np.arange(B), gold].mean()
        assert abs(loss - full_ce) < 1e-6


def test_criterion_07_micro_f1_identities():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n_labels = int(rng.integers(2, 8))
        n = int(rng.integers(1, 60))
        labels = [f"l{i}" for i in range(n_labels)]
        gold = [labels[i] for i in rng.integers(0, n_labels, size=n)]
        pred = [labels[i] for i in rng.integers(0, n_labels, size=n)]
        accuracy = sum(g == p for g, p in zip(gold, pred)) / n
        f1 = micro_f1(gold, pred)
        assert abs(f1 - accuracy) <= 1e-12
        _, mat = confusion_matrix(gold, pred)
        assert abs(np.trace(mat) / mat.sum() - f1) <= 1e-12


def test_criterion_08_cv_protocol_invariants():
    poc, _ = make_table_pair("planting")
    plan = stratified_kfold(poc, 10, seed=4)
    assert set(plan.assignment) == {u.id for u in poc.utterances}
    assert set(plan.assignment.values()) == set(range(10))
    for intent in {u.intent for u in poc.utterances}:
        folds = [plan.assignment[u.id] for u in poc.utterances
                 if u.intent == intent]
        counts = np.bincount(folds, minlength=10)
        assert counts.max() - counts.min() <= 1           # stratified +-1

    utts = []
    for intent, words in [("yes", ["yes", "yep", "sure", "indeed"]),
                          ("no", ["no", "nope", "never", "nah"])]:
        for r in range(3):
            for i, w in enumerate(words):
                utts.append(Utterance(id=f"{intent}{r}{i}",
                                      text=f"{w} {words[(i + 1) % 4]}",
                                      intent=intent))
    toy = Dataset(name="toy", utterances=tuple(utts))
    cfg = TrainConfig(model_kind="embed_baseline", epochs=8, batch_size=8,
                      lr=5e-2, seed=1)
    single = cross_validate(toy, k=3, runs=1, cfg=cfg)
    assert len(single.per_run_fold_scores[0]) == 3        # pooled partition ran
    assert single.std_micro_f1 == 0.0                     # one run, zero spread
    again = cross_validate(toy, k=3, runs=1, cfg=cfg)
    assert single.to_json() == again.to_json()            # fixed seed, same bytes


def test_criterion_09_benchmark_cross_validation(diet_benchmark_cv):
    report, elapsed = diet_benchmark_cv
    assert report.mean_micro_f1 >= 0.90, (
        f"mean micro-F1 {report.mean_micro_f1:.4f} over runs "
        f"{[f'{s:.4f}' for s in report.per_run_scores]}")
    assert elapsed < 600.0, f"benchmark CV took {elapsed:.0f}s"


def test_criterion_10_dense_model_ordering(benchmark):
    plan = stratified_kfold(benchmark, 5, seed=0)
    ds_train, ds_test = plan.split(benchmark, 0)
    provider = make_centroid_provider(benchmark, dim=16, seed=0, noise=1.0)
    diet = train_test(ds_train, ds_test, runs=3,
                      cfg=bench_cfg("diet", DIET_BENCH), provider=provider)
    tf = train_test(ds_train, ds_test, runs=3,
                    cfg=bench_cfg("tf_baseline", TF_BENCH), provider=provider)
    margin = diet.mean_micro_f1 - tf.mean_micro_f1
    assert margin >= 0.02, (
        f"diet {diet.mean_micro_f1:.4f} vs tf {tf.mean_micro_f1:.4f} "
        f"(margin {100 * margin:.2f} points)")


def test_criterion_11_shift_degrades_every_model(benchmark, diet_benchmark_cv):
    shifted = make_shifted(seed=0)
    diet_cv, _ = diet_benchmark_cv
    setups = {
        "diet": (bench_cfg("diet", DIET_BENCH), DenseProvider.hash(32, 0)),
        "embed_baseline": (TrainConfig(model_kind="embed_baseline", epochs=30,
                                       batch_size=32, lr=2e-3, seed=0), None),
        "tf_baseline": (bench_cfg("tf_baseline", TF_BENCH),
                        make_token_centroid_provider(benchmark, dim=16,
                                                     seed=0, noise=0.5)),
    }
    for kind, (cfg, provider) in setups.items():
        if kind == "diet":
            cv_mean = diet_cv.mean_micro_f1
        else:
            cv_mean = cross_validate(benchmark, k=10, runs=3, cfg=cfg,
                                     provider=provider).mean_micro_f1
        out = train_test(benchmark, shifted, runs=3, cfg=cfg,
                         provider=provider)
        assert out.mean_micro_f1 < cv_mean, (
            f"{kind}: shifted {out.mean_micro_f1:.4f} not below "
            f"in-distribution {cv_mean:.4f}")


def test_criterion_12_padding_invariance():
    model, bundles, _, _ = _grad_fixture(seed=0, dtype=np.float32)
    short = bundles[0]                       # 2 tokens
    batch = [short, bundles[2], bundles[3]]  # padded next to 3-token rows
    solo_cls, _, _ = model.encode_batch([short])
    batch_cls, _, _ = model.encode_batch(batch)
    assert np.abs(solo_cls[0] - batch_cls[0]).max() < 1e-5
    conf_solo = model.confidences(model.intent_similarities(solo_cls[0]))
    conf_batch = model.confidences(model.intent_similarities(batch_cls[0]))
    assert np.abs(conf_solo - conf_batch).max() < 1e-5


# --- criterion 13 ----------------------------------------------------------

HASH_KEYS = [
    "yes", "no", "Flowers", "COUNT", "teddy bear", "next  step",
    " padded ", "café", "café", "naïve", "deja vu",
    "one", "two", "three", "TWELVE", "planting", "watering", "garden",
    "soil\tsample", "hello there", "HELLO THERE", "ok", "okay then",
    "what", "why not", "sure thing", "absolutely", "nope", "never mind",
    "A", "b", "C c", "dd", "e^e", "f_f", "g-g", "h.h", "i,i", "j!j",
    "k?", "(l)", "m n o", "p  q", "röntgen", "Über", "straSSe",
    "zig", "zag", "zig zag", "zag zig",
]  # 50 raw keys, mixing case, spacing, and both unicode normal forms


def _norm_fixture() -> list[str]:
    base = ["Yes", "COUNT five", "  spaced  out  ", "café", "café",
            "Tab\there", "Über Ei", "naïve", "plain", "MiXeD"]
    out = []
    for i in range(100):
        word = base[i % len(base)]
        out.append(f"{word} {i}" if i % 3 else f"  {word}{i} ")
    return out


def _run_exporter(args: list[str], cwd: Path) -> dict:
    proc = subprocess.run(["node", str(EXPORTER_CLI), *args],
                          capture_output=True, text=True, cwd=cwd)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout)


def test_criterion_13_exporter_conformance(tmp_path):
    if not EXPORTER_CLI.exists():
        pytest.skip("exporter package not built")
    if shutil.which("node") is None:
        pytest.skip("node runtime not available")

    assert len(HASH_KEYS) == 50
    keys_file = tmp_path / "keys.txt"
    keys_file.write_text("\n".join(HASH_KEYS) + "\n", encoding="utf-8")
    out_ts = tmp_path / "hash_ts.dnse"
    manifest = _run_exporter(
        ["export", "--hash", "--keys", str(keys_file), "--dim", "8",
         "--seed", "3", "--out", str(out_ts)], tmp_path)

    table = {k: hash_embed(normalize_key(k), 8, 3) for k in HASH_KEYS
             if normalize_key(k)}
    engine_bytes = save_dense_file(
        tmp_path / "hash_py.dnse",
        DenseProvider.from_table("token-table", 8, table))
    ts_bytes = out_ts.read_bytes()
    assert ts_bytes == engine_bytes                     # byte-identical files
    assert manifest["kind"] == "token"
    assert manifest["dim"] == 8
    assert manifest["key_count"] == len({normalize_key(k) for k in HASH_KEYS
                                         if normalize_key(k)})

    ds = Dataset(name="fix", utterances=tuple(
        Utterance(id=f"u{i}", text=text, intent="x")
        for i, text in enumerate([
            "count the Flowers", "YES please", "plant two seeds",
            "okay, next step!", "café time"])))
    data_file = tmp_path / "fix.jsonl"
    save_dataset(ds, data_file)

    for kind, expect_kind in (("sentence", "sentence-table"),
                              ("token", "token-table")):
        out = tmp_path / f"{kind}.dnse"
        manifest = _run_exporter(
            ["export", "--data", str(data_file), "--kind", kind,
             "--encoder", "toy-ngram", "--out", str(out)], tmp_path)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            provider = load_dense_file(out)
        assert caught == []                             # zero-warning load
        assert provider.kind == expect_kind
        assert provider.dim == manifest["dim"]
        if kind == "sentence":
            assert set(provider.keys()) == {normalize_key(u.text)
                                            for u in ds.utterances}
        else:
            engine_tokens = {t for u in ds.utterances
                             for t in tokenize(u.text)}
            assert set(provider.keys()) == engine_tokens  # tokenizer parity

    strings = _norm_fixture()
    assert len(strings) == 100
    norm_file = tmp_path / "norm.txt"
    norm_file.write_text("\n".join(strings) + "\n", encoding="utf-8")
    out = tmp_path / "norm.dnse"
    _run_exporter(["export", "--hash", "--keys", str(norm_file), "--dim", "4",
                   "--seed", "0", "--out", str(out)], tmp_path)
    provider = load_dense_file(out)
    assert set(provider.keys()) == {normalize_key(s) for s in strings
                                    if normalize_key(s)}
