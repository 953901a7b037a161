import json

import pytest

from symbiolcd.cli import main


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen", "--seed", "42", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def model(dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.sbf"
    assert main(["train", "--data", str(dataset), "--model-out", str(path), "--estimators", "20"]) == 0
    return path


def test_gen_is_deterministic(dataset, tmp_path):
    assert main(["gen", "--seed", "42", "--out", str(tmp_path)]) == 0
    for name in ("frames.jsonl", "ground_truth.csv"):
        assert (tmp_path / name).read_bytes() == (dataset / name).read_bytes()
    assert sorted(p.name for p in (tmp_path / "descriptors").iterdir()) == \
        sorted(p.name for p in (dataset / "descriptors").iterdir())


def test_gen_bad_revisit(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path), "--revisit", "10:0:40"]) == 1
    assert "overlaps" in capsys.readouterr().err


def test_train_prints_importances(dataset, tmp_path, capsys):
    assert main(["train", "--data", str(dataset), "--model-out", str(tmp_path / "m"),
                 "--estimators", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    values = [float(ln.split()[1]) for ln in lines[-4:]]
    assert [ln.split()[0] for ln in lines[-4:]] == ["matched_labels", "hausdorff_t", "norm_dist", "vbow_score"]
    assert sum(values) == pytest.approx(1.0)


def test_missing_truth_is_io_error(dataset, tmp_path):
    assert main(["train", "--frames", str(dataset / "frames.jsonl"), "--truth", str(tmp_path / "no.csv"),
                 "--model-out", str(tmp_path / "m")]) == 2


def test_predict(dataset, model, tmp_path, capsys):
    out = tmp_path / "det.csv"
    assert main(["predict", "--data", str(dataset), "--model", str(model), "--out", str(out)]) == 0
    first = out.read_bytes()
    assert first.startswith(b"query,reference,prob,matched_labels,hausdorff_t,norm_dist,vbow_score\n")
    assert len(first.splitlines()) > 1
    assert "first detection at frame" in capsys.readouterr().err
    assert main(["predict", "--data", str(dataset), "--model", str(model), "--out", str(out),
                 "--threads", "4"]) == 0
    assert out.read_bytes() == first


def test_predict_zero_noise_hits_each_region(model, tmp_path, capsys):
    clean = tmp_path / "clean"
    assert main(["gen", "--out", str(clean), "--zero-noise"]) == 0
    assert main(["predict", "--data", str(clean), "--model", str(model), "--out", str(tmp_path / "d")]) == 0
    err = capsys.readouterr().err
    assert "missed" not in err and err.count("first detection") == 2


def test_predict_threshold_validation(dataset, model):
    assert main(["predict", "--data", str(dataset), "--model", str(model), "--threshold", "1.01"]) == 1


def test_predict_feature_mismatch(dataset, tmp_path, capsys):
    m = tmp_path / "m3"
    assert main(["train", "--data", str(dataset), "--model-out", str(m), "--features", "cnn-e",
                 "--estimators", "5"]) == 0
    assert main(["predict", "--data", str(dataset), "--model", str(m)]) == 1
    assert "expects features" in capsys.readouterr().err


def test_vocab_warm_start_files(dataset, model, tmp_path):
    v = tmp_path / "vocab.jsonl"
    assert main(["predict", "--data", str(dataset), "--model", str(model), "--out", str(tmp_path / "d"),
                 "--vocab-out", str(v)]) == 0
    assert v.read_bytes().count(b"\n") > 10


def test_eval_reproducible(dataset, tmp_path, capsys):
    args = ["eval", "--data", str(dataset), "--runs", "1", "--split-seed", "7", "--estimators", "10"]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_ablate_prints_three_rows(dataset, capsys):
    assert main(["ablate", "--data", str(dataset), "--estimators", "10"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [ln.split()[0] for ln in lines[1:]] == ["cnn-e", "vbow", "both"]


def test_importance_from_model(model, capsys):
    assert main(["importance", "--model", str(model)]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 4


def test_bow_build(dataset, tmp_path):
    assert main(["bow-build", "--descriptors", str(dataset / "descriptors"), "--out", str(tmp_path / "t.sbv"),
                 "--bow-k", "4", "--bow-depth", "2"]) == 0
    assert (tmp_path / "t.sbv").read_bytes()[:4] == b"SBV1"


def test_config_file_and_flag_precedence(dataset, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"estimators": 1, "threshold": 2.0}))
    # the config threshold is invalid; the flag overrides it
    assert main(["predict", "--config", str(cfg), "--data", str(dataset), "--model",
                 str(tmp_path / "absent"), "--threshold", "0.5"]) == 2
    assert main(["predict", "--config", str(cfg), "--data", str(dataset), "--model",
                 str(tmp_path / "absent")]) == 1
    cfg.write_text(json.dumps({"no_such_setting": 1}))
    assert main(["train", "--config", str(cfg), "--data", str(dataset), "--model-out", str(tmp_path / "m")]) == 1


@pytest.mark.parametrize("cmd", ["gen", "bow-build", "train", "predict", "eval", "ablate", "importance"])
def test_help_documents_defaults(cmd, capsys):
    assert main([cmd, "--help"]) == 0
    out = capsys.readouterr().out
    assert "--seed" in out and "default" in out
