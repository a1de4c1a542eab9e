"""Exit criteria of the build, one test per criterion.

A pass/fail line per criterion is printed in the terminal summary.
"""
import os
import time

import numpy as np
import pytest

from tunet import cli, data, layers, metrics, model, optim
from tunet.gradcheck import run_gradcheck
from oracles import naive_conv1d

PAPER_MANIFEST = os.environ.get("TUNET_PAPER_MANIFEST")


@pytest.mark.criterion(1, "gradient correctness, rel err <= 1e-5 over 5 seeds, < 30 s")
def test_gradient_correctness(capsys):
    started = time.perf_counter()
    rc = cli.main(["gradcheck", "--seeds", "5"])
    elapsed = time.perf_counter() - started
    out = capsys.readouterr().out
    print(out)
    assert rc == 0, out
    results = run_gradcheck(range(5))
    assert {r.layer for r in results} >= {"conv1d", "deconv1d", "maxpool1d", "relu", "softmax_xent", "tunet"}
    assert all(r.worst <= 1e-5 for r in results)
    assert elapsed < 30.0


def _random_conv(rng, integer):
    b, ci, co = rng.integers(1, 3), rng.integers(1, 5), rng.integers(1, 5)
    k = int(rng.integers(1, 5))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 3))
    length = int(rng.integers(k, 17))
    while (length + 2 * pad - k) % stride:
        length += 1
    if integer:
        draw = lambda *s: rng.integers(-8, 9, s).astype(np.float64)
    else:
        draw = lambda *s: rng.standard_normal(s)
    x, w, bias = draw(b, ci, length), draw(co, ci, k), draw(co)
    return x, layers.Conv1dParams(w, bias, stride, pad)


@pytest.mark.criterion(2, "conv equals naive oracle on 100 instances; deconv adjoint <= 1e-10")
def test_oracle_equivalence():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        # integer-valued data: every summation order is exact, so equality is bitwise
        x, p = _random_conv(rng, integer=True)
        out, _ = layers.conv1d_forward(x, p)
        np.testing.assert_array_equal(out, naive_conv1d(x, p.weights, p.bias, p.stride, p.padding))
    for _ in range(100):
        x, p = _random_conv(rng, integer=False)
        out, _ = layers.conv1d_forward(x, p)
        ref = naive_conv1d(x, p.weights, p.bias, p.stride, p.padding)
        np.testing.assert_allclose(out, ref, rtol=1e-13, atol=1e-13)
    for _ in range(100):
        ci, co = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        k, stride = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        lin = int(rng.integers(1, 9))
        w = rng.standard_normal((co, ci, k))
        y = rng.standard_normal((2, co, lin))
        x = rng.standard_normal((2, ci, (lin - 1) * stride + k))
        cx, _ = layers.conv1d_forward(x, layers.Conv1dParams(w, np.zeros(co), stride, 0))
        dy, _ = layers.deconv1d_forward(y, layers.Deconv1dParams(w, np.zeros(ci), stride))
        lhs, rhs = float(np.sum(cx * y)), float(np.sum(x * dy))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs))


@pytest.mark.criterion(3, "shape contract 1x52x192 -> 1x2x192 and 1x7x192")
def test_shape_contract():
    x = np.random.default_rng(0).standard_normal((1, 52, 192)).astype(np.float32)
    detect = model.TUnetConfig(num_classes=2)
    classify = model.TUnetConfig(num_classes=6 + 1)
    assert model.forward(model.build(detect, 32), x, detect)[0].shape == (1, 2, 192)
    assert model.forward(model.build(classify, 32), x, classify)[0].shape == (1, 7, 192)


@pytest.mark.criterion(4, "synthetic detection: train >= 0.99, held-out >= 0.90, <= 10 min")
def test_learnability_desk_scale():
    train, test = data.synth_generate(64, cls=6, n=192, seed=0, num_test=16)
    train, test = data.normalize(train), data.normalize(test)
    mcfg = model.TUnetConfig(num_classes=2, seed=0)
    tcfg = optim.TrainConfig(epochs=100, seed=0)
    params = model.build(mcfg, tcfg.precision)
    started = time.perf_counter()
    optim.fit(params, train, mcfg, tcfg, task="detect")
    elapsed = time.perf_counter() - started
    _, train_acc = optim.evaluate_loss(params, train, mcfg, "detect")
    _, test_acc = optim.evaluate_loss(params, test, mcfg, "detect")
    print(f"train acc {train_acc:.4f}  held-out acc {test_acc:.4f}  {elapsed:.0f} s")
    assert train_acc >= 0.99
    assert test_acc >= 0.90
    assert elapsed <= 600


@pytest.mark.criterion(5, "AP@a and mean AP reproduce the published table arithmetic")
def test_metric_fidelity():
    assert metrics.mean_ap([1, 1, 1, 1, 0.92]) == pytest.approx(0.984, abs=1e-12)
    assert round(metrics.mean_ap([1, 1, 1, 1, 0.92]), 2) == 0.98
    assert metrics.mean_ap([0.99, 0.94, 0.87, 0.81, 0.69]) == pytest.approx(0.86, abs=1e-12)
    accs = [1.0] * 200 + [0.9] * 56 + [0.89] * 22
    assert len(accs) == 278
    ap09 = metrics.ap_at(accs, 0.9)
    assert ap09 == 256 / 278 and round(ap09, 2) == 0.92
    assert round(278 * 0.92) == 256
    report = metrics.ap_report(accs)
    assert report.ap_values[:4] == [1.0, 1.0, 1.0, 1.0]


@pytest.mark.criterion(6, "identical seeds at 64-bit give bit-identical checkpoints and logs")
def test_determinism(tmp_path):
    corpus = tmp_path / "corpus"
    assert cli.main(["synth", "--series", "12", "--n", "64", "--seed", "3", "--out", str(corpus)]) == 0
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        rc = cli.main(["train", "--manifest", str(corpus / "manifest.csv"), "--precision", "64",
                       "--epochs", "4", "--batch-size", "5", "--depth", "2", "--base-channels", "8",
                       "--series-length", "64", "--seed", "11", "--out", str(out)])
        assert rc == 0
        runs.append(((out / "checkpoint.tunet").read_bytes(), (out / "train_log.csv").read_bytes()))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]
    params, _ = model.load_checkpoint(tmp_path / "a" / "checkpoint.tunet")
    assert params["head.w"].dtype == np.float64


@pytest.mark.criterion(7, "released dataset: detection >= 0.90, classification >= 0.82")
@pytest.mark.skipif(not PAPER_MANIFEST, reason="TUNET_PAPER_MANIFEST not set; released dataset not present")
@pytest.mark.parametrize("task,threshold", [("detect", 0.90), ("classify", 0.82)])
def test_paper_reproduction(task, threshold):
    train, test = data.load_dataset(PAPER_MANIFEST, cls=6)
    assert len(train) == 1116 and len(test) == 278
    train, test = data.normalize(train), data.normalize(test)
    mcfg = model.TUnetConfig(num_classes=2 if task == "detect" else 7)
    tcfg = optim.TrainConfig()
    params = model.build(mcfg, tcfg.precision)
    optim.fit(params, train, mcfg, tcfg, task=task)
    _, acc = optim.evaluate_loss(params, test, mcfg, task)
    print(f"{task}: pooled test sample accuracy {acc:.4f}")
    assert acc >= threshold
