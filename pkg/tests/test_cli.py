import os

import numpy as np
import pytest

from tunet import cli, data, model

SMALL_FLAGS = ["--depth", "2", "--base-channels", "8", "--series-length", "64"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert run("synth", "--series", 16, "--test", 4, "--cls", 6, "--n", 64, "--seed", 7, "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    rc = run("train", "--manifest", corpus / "manifest.csv", "--epochs", 40, "--batch-size", 8,
             "--seed", 1, "--out", out, *SMALL_FLAGS)
    assert rc == 0
    return out


def test_synth_outputs(corpus):
    train, test = data.load_dataset(corpus / "manifest.csv", cls=6)
    assert len(train) == 16 and len(test) == 4
    assert train.series[0].values.shape == (64, 52)
    assert (corpus / "run_manifest.txt").read_text().count("corpus_sha256=") == 1


def test_synth_byte_identical(corpus, tmp_path):
    assert run("synth", "--series", 16, "--test", 4, "--cls", 6, "--n", 64, "--seed", 7, "--out", tmp_path) == 0
    for name in ["manifest.csv", "series/train00003.csv", "series/test00001.labels"]:
        assert (tmp_path / name).read_bytes() == (corpus / name).read_bytes()


def test_train_outputs(trained):
    log = (trained / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,lr,loss,accuracy" and len(log) == 41
    manifest = (trained / "run_manifest.txt").read_text()
    for key in ("seed=1", "epochs=40", "corpus_sha256=", "checkpoint_sha256=", "final_loss="):
        assert key in manifest
    assert (trained / "normalization.csv").exists()


def test_train_zero_epochs_is_initialization(corpus, tmp_path):
    assert run("train", "--manifest", corpus / "manifest.csv", "--epochs", 0, "--seed", 3,
               "--out", tmp_path, *SMALL_FLAGS) == 0
    params, cfg = model.load_checkpoint(tmp_path / "checkpoint.tunet")
    init = model.build(cfg, 32)
    for name in init:
        np.testing.assert_array_equal(params[name], init[name])


def test_eval_overfit_training_set(corpus, trained, tmp_path, capsys):
    rc = run("eval", "--manifest", corpus / "manifest.csv", "--checkpoint", trained / "checkpoint.tunet",
             "--split", "train", "--out", tmp_path, *SMALL_FLAGS)
    assert rc == 0
    rows = dict(line.split(",", 1) for line in (tmp_path / "metrics.csv").read_text().splitlines()[1:]
                if line.startswith("accuracy"))
    acc = float(rows["accuracy"].split(",")[1])
    assert acc >= 0.99
    out = capsys.readouterr().out
    for a in ("AP@0.5", "AP@0.6", "AP@0.7", "AP@0.8", "AP@0.9"):
        assert a in out


def test_eval_swapped_task(corpus, trained, tmp_path):
    rc = run("eval", "--manifest", corpus / "manifest.csv", "--checkpoint", trained / "checkpoint.tunet",
             "--task", "classify", "--out", tmp_path, *SMALL_FLAGS)
    assert rc == cli.EXIT_CHECKPOINT


def test_predict_confidence_csv(corpus, trained, tmp_path):
    series = corpus / "series" / "test00000.csv"
    assert run("predict", "--checkpoint", trained / "checkpoint.tunet", "--series", series,
               "--out", tmp_path, *SMALL_FLAGS) == 0
    lines = (tmp_path / "test00000_confidence.csv").read_text().splitlines()
    assert lines[0] == "sample,p0,p1,label"
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert rows.shape == (64, 4)
    np.testing.assert_array_equal(rows[:, 0], np.arange(64))
    np.testing.assert_allclose(rows[:, 1:3].sum(axis=1), 1.0, atol=1e-5)
    # argmax column agrees with the library prediction
    params, mcfg = model.load_checkpoint(trained / "checkpoint.tunet")
    s = data.read_series(series)
    mean, std = np.loadtxt(trained / "normalization.csv", delimiter=",")
    labels, _ = model.predict(params, ((s.values - mean) / std).T[None], mcfg)
    np.testing.assert_array_equal(rows[:, 3], labels[0])


def test_predict_malformed_series(trained, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3\n4,5,6\n")
    rc = run("predict", "--checkpoint", trained / "checkpoint.tunet", "--series", bad, "--out", tmp_path, *SMALL_FLAGS)
    assert rc == cli.EXIT_DATA


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# comment\ntask = classify\ncls=4\nepochs=12\nlr_init=0.001\n")
    args = cli.build_parser().parse_args(["train", "--config", str(conf), "--epochs", "3"])
    cfg = cli.resolve_config(args)
    assert (cfg.task, cfg.cls, cfg.epochs, cfg.lr_init) == ("classify", 4, 3, 0.001)
    assert cfg.model_config().num_classes == 5
    conf.write_text("bogus=1\n")
    assert run("train", "--config", conf) == cli.EXIT_CONFIG


def test_defaults_mirror_training_recipe():
    cfg = cli.resolve_config(cli.build_parser().parse_args(["train"]))
    assert (cfg.batch_size, cfg.lr_init, cfg.epochs, cfg.lr_decay, cfg.decay_every) == (128, 0.005, 200, 0.5, 10)


def test_missing_manifest_is_data_error(tmp_path):
    assert run("train", "--manifest", tmp_path / "none.csv", "--out", tmp_path) == cli.EXIT_DATA


def test_gradcheck_pass_and_fault(capsys, tmp_path):
    assert run("gradcheck", "--seeds", 2, "--out", tmp_path) == 0
    first = capsys.readouterr().out
    assert "all checks passed" in first
    assert run("gradcheck", "--seeds", 2) == 0
    again = capsys.readouterr().out
    strip = lambda s: [l for l in s.splitlines() if "rel err" in l]
    assert strip(first) == strip(again)
    assert run("gradcheck", "--seeds", 1, "--inject-fault", "conv1d") == cli.EXIT_GRADCHECK
    out = capsys.readouterr().out
    assert any(l.startswith("conv1d ") and "FAIL" in l for l in out.splitlines())
