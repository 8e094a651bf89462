import json

import pytest

from dietnlu.cli import NumericFailure, _check_finite, main, parse_dense
from dietnlu.cli import UsageError
from dietnlu.corpus import Dataset, Entity, Utterance, compute_stats, load_dataset, save_dataset
from dietnlu.featurizer import DenseProvider, save_dense_file
from dietnlu.synthetic import make_table_pair

WORDS = {
    "yes": ["yes", "yeah", "sure", "absolutely", "indeed", "certainly"],
    "no": ["no", "nope", "never", "negative", "nah", "hardly"],
}


def make_corpus(per_intent=12, name="toy") -> Dataset:
    utts = []
    for intent in ("yes", "no"):
        vocab = WORDS[intent]
        texts = []
        for i in range(len(vocab)):
            texts.append(vocab[i])
            texts.append(f"{vocab[i]} {vocab[(i + 1) % len(vocab)]}")
        for j in range(per_intent):
            utts.append(Utterance(id=f"{intent}-{j}", text=texts[j % len(texts)],
                                  intent=intent))
    return Dataset(name=name, utterances=tuple(utts))


@pytest.fixture
def data_path(tmp_path):
    path = tmp_path / "toy.jsonl"
    save_dataset(make_corpus(), path)
    return str(path)


def train_toy(tmp_path, data_path, extra=()):
    model_path = str(tmp_path / "model.npz")
    code = main(["train", "--data", data_path, "--model", "embed_baseline",
                 "--out", model_path, "--epochs", "40", "--lr", "5e-2",
                 *extra])
    assert code == 0
    return model_path


class TestDenseFlag:
    def test_none(self):
        assert parse_dense("none") is None

    def test_hash(self):
        provider = parse_dense("hash:16:3")
        assert provider.kind == "hash"
        assert provider.dim == 16
        assert provider.seed == 3

    def test_file(self, tmp_path):
        src = DenseProvider.from_table(
            "sentence-table", 2, {"hi": [1.0, 2.0]})
        path = tmp_path / "vecs.dnse"
        save_dense_file(path, src)
        provider = parse_dense(f"file:{path}")
        assert provider.fingerprint() == src.fingerprint()

    @pytest.mark.parametrize("spec", ["hash:16", "hash:a:b", "convert:8", ""])
    def test_bad_specs(self, spec):
        with pytest.raises(UsageError):
            parse_dense(spec)


class TestExitCodes:
    def test_no_command_is_usage_error(self):
        assert main([]) == 1

    def test_unknown_flag_is_usage_error(self, data_path):
        assert main(["stats", "--data", data_path, "--frobnicate"]) == 1

    def test_missing_file_is_data_error(self, capsys, tmp_path):
        path = str(tmp_path / "absent.jsonl")
        assert main(["stats", "--data", path]) == 2
        assert path in capsys.readouterr().err

    def test_malformed_dataset_is_data_error(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "text": "hi"}\n', encoding="utf-8")
        assert main(["stats", "--data", str(path)]) == 2
        assert "intent" in capsys.readouterr().err

    def test_tf_baseline_without_dense_is_usage_error(self, data_path, tmp_path):
        code = main(["crossval", "--data", data_path, "--model", "tf_baseline",
                     "--dense", "none", "--folds", "2", "--runs", "1",
                     "--out", str(tmp_path / "r.json")])
        assert code == 1

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0

    def test_check_finite_raises(self):
        with pytest.raises(NumericFailure):
            _check_finite([1.0, float("nan")], "loss")
        _check_finite([1.0, 2.0], "loss")


class TestStats:
    def test_human_output(self, capsys, tmp_path):
        path = tmp_path / "two.jsonl"
        save_dataset(Dataset(name="two", utterances=(
            Utterance(id="a", text="hello there", intent="greet"),
            Utterance(id="b", text="bye", intent="goodbye"),
        )), path)
        assert main(["stats", "--data", str(path)]) == 0
        out = capsys.readouterr().out
        assert "n_samples" in out and "2" in out
        assert "greet" in out and "goodbye" in out

    def test_json_round_trips(self, capsys, data_path):
        assert main(["stats", "--data", data_path, "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        expected = compute_stats(load_dataset(data_path))
        assert payload["stats"] == expected.to_dict()
        assert payload["class_distribution"] == {"yes": 12, "no": 12}


class TestTrainEvalPredict:
    def test_train_then_eval(self, tmp_path, data_path, capsys):
        model_path = train_toy(tmp_path, data_path)
        out = tmp_path / "eval.json"
        code = main(["eval", "--model", model_path, "--data", data_path,
                     "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["micro_f1"] == 1.0
        assert "micro F1 100.00" in capsys.readouterr().out

    def test_eval_errors_table(self, tmp_path, data_path, capsys):
        model_path = train_toy(tmp_path, data_path)
        # one utterance with yes-vocabulary text mislabeled as "no"
        probe = tmp_path / "probe.jsonl"
        save_dataset(Dataset(name="probe", utterances=(
            Utterance(id="p0", text="yes yeah", intent="yes"),
            Utterance(id="p1", text="sure indeed", intent="no"),
        )), probe)
        code = main(["eval", "--model", model_path, "--data", str(probe),
                     "--out", str(tmp_path / "e.json"), "--errors"])
        assert code == 0
        out = capsys.readouterr().out
        assert "Sample Utterance | Intent | Prediction" in out
        rows = [l for l in out.splitlines() if l.startswith("sure indeed")]
        assert len(rows) == 1
        assert "no" in rows[0]

    def test_predict_confidences_sum_to_one(self, tmp_path, data_path, capsys):
        model_path = train_toy(tmp_path, data_path)
        capsys.readouterr()
        assert main(["predict", "--model", model_path,
                     "--text", "yes certainly"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["ranking"][0]["intent"] == "yes"
        total = sum(r["confidence"] for r in payload["ranking"])
        assert total == pytest.approx(1.0, abs=1e-9)
        confs = [r["confidence"] for r in payload["ranking"]]
        assert confs == sorted(confs, reverse=True)

    def test_predict_emits_entities(self, tmp_path, capsys):
        ds = Dataset(name="ents", utterances=tuple(
            Utterance(id=f"u{i}", text=text, intent=intent, entities=ents)
            for i, (text, intent, ents) in enumerate([
                ("send five flowers", "send",
                 (Entity(start=5, end=9, entity="number", value="five"),)),
                ("send two flowers", "send",
                 (Entity(start=5, end=8, entity="number", value="two"),)),
                ("hello there friend", "greet", ()),
                ("hello again", "greet", ()),
            ])))
        data = tmp_path / "ents.jsonl"
        save_dataset(ds, data)
        model_path = str(tmp_path / "diet.npz")
        assert main(["train", "--data", str(data), "--model", "diet",
                     "--out", model_path, "--epochs", "30", "--lr", "5e-3",
                     "--batch-size", "4"]) == 0
        capsys.readouterr()
        assert main(["predict", "--model", model_path,
                     "--text", "send five flowers"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert isinstance(payload["entities"], list)

    def test_model_file_is_data_error_when_garbage(self, tmp_path, data_path):
        bogus = tmp_path / "bogus.npz"
        bogus.write_bytes(b"not a model")
        assert main(["eval", "--model", str(bogus), "--data", data_path,
                     "--out", str(tmp_path / "e.json")]) == 2


class TestProviderFingerprint:
    def test_matching_dense_flag_passes(self, tmp_path, data_path):
        model_path = str(tmp_path / "m2.npz")
        assert main(["train", "--data", data_path, "--model", "diet",
                     "--dense", "hash:8:0", "--out", model_path,
                     "--epochs", "2"]) == 0
        assert main(["predict", "--model", model_path, "--text", "yes",
                     "--dense", "hash:8:0"]) == 0

    def test_mismatched_dense_flag_is_data_error(self, tmp_path, data_path,
                                                 capsys):
        model_path = str(tmp_path / "m.npz")
        assert main(["train", "--data", data_path, "--model", "diet",
                     "--dense", "hash:8:0", "--out", model_path,
                     "--epochs", "2"]) == 0
        assert main(["predict", "--model", model_path, "--text", "yes",
                     "--dense", "hash:8:1"]) == 2
        assert "fingerprint" in capsys.readouterr().err

    def test_dense_flag_on_sparse_model_is_data_error(self, tmp_path,
                                                      data_path):
        model_path = train_toy(tmp_path, data_path)
        assert main(["predict", "--model", model_path, "--text", "yes",
                     "--dense", "hash:8:0"]) == 2


class TestCrossval:
    def test_reports_byte_identical_across_invocations(self, tmp_path,
                                                       data_path, capsys):
        args = ["crossval", "--data", data_path, "--model", "embed_baseline",
                "--folds", "2", "--runs", "2", "--seed", "7",
                "--epochs", "10", "--lr", "5e-2"]
        out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
        assert main([*args, "--out", str(out_a)]) == 0
        assert main([*args, "--out", str(out_b)]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()
        capsys.readouterr()

    def test_single_run_prints_zero_std(self, tmp_path, data_path, capsys):
        code = main(["crossval", "--data", data_path, "--model",
                     "embed_baseline", "--folds", "2", "--runs", "1",
                     "--epochs", "10", "--lr", "5e-2",
                     "--out", str(tmp_path / "r.json")])
        assert code == 0
        assert "± 0.00" in capsys.readouterr().out


class TestShift:
    def test_synthetic_pair(self, tmp_path, capsys):
        poc, dep = make_table_pair("planting")
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(poc, a)
        save_dataset(dep, b)
        out = tmp_path / "shift.json"
        assert main(["shift", "--a", str(a), "--b", str(b),
                     "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["unseen_a_to_b"] == ["answer-invalid", "next-step"]
        assert report["unseen_b_to_a"] == []
        stdout = capsys.readouterr().out
        assert "answer-invalid, next-step" in stdout

    def test_custom_oos_label(self, tmp_path, capsys):
        ds = make_corpus()
        a = tmp_path / "a.jsonl"
        save_dataset(ds, a)
        out = tmp_path / "shift.json"
        assert main(["shift", "--a", str(a), "--b", str(a), "--oos", "no",
                     "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["a"]["oos_share"] == pytest.approx(0.5)
