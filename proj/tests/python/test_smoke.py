"""End-to-end smoke tests for the python bindings and the CLI file formats.

Requires the PHOS_BIN environment variable to point at the phos executable
when the CLI round-trip test should run.
"""

import json
import math
import os
import shutil
import struct
import subprocess

import numpy as np
import pytest

import phos


def test_bin_math_matches_hand_values():
    assert phos.bin_widths(4, 1800.0) == [450.0] * 4

    p = np.array([[1.0, 1.0, 0.0, 0.0]])
    pw = phos.weighted_bin_predictions(p, 4, 1800.0)
    assert pw.tolist() == [[450.0, 450.0, 0.0, 0.0]]
    assert phos.os_prediction(pw, 1800.0).tolist() == [900.0]

    assert phos.monotonic_penalty(np.array([[0.2, 0.8, 0.5]])) == pytest.approx(
        0.3
    )
    assert phos.transition_bin(np.array([0.9, 0.7, 0.2, 0.1])) == 2

    saliency = np.zeros((1, 1, 2, 2, 2))
    prob = phos.bin_probabilities(saliency)
    assert prob[0, 0] == pytest.approx(1.0 / (1.0 + math.exp(-math.log(8.0))))


def test_loss_and_metrics():
    y_hat = np.array([900.0])
    p = np.array([[0.9, 0.5, 0.1]])
    assert phos.total_loss(y_hat, np.array([1000.0]), p, 10000.0) == 100.0

    mse, median_se, std_se = phos.squared_error_stats(
        np.array([2.0, 4.0]), np.array([1.0, 2.0])
    )
    assert (mse, median_se, std_se) == (2.5, 2.5, 1.5)

    assert phos.spearman_r(
        np.array([1.0, 2.0, 3.0]), np.array([10.0, 20.0, 30.0])
    ) == pytest.approx(1.0)
    assert phos.spearman_r(np.array([1.0, 1.0]), np.array([1.0, 2.0])) is None

    a = np.array([1, 1, 0, 0], dtype=np.uint8)
    b = np.array([1, 0, 1, 0], dtype=np.uint8)
    assert phos.dice(a, b) == 0.5

    acc = phos.classification_accuracy(
        np.array([100.0, 400.0]), np.array([120.0, 500.0])
    )
    assert acc == 0.5


def test_saliency_mask_popcount():
    rng = np.random.default_rng(3)
    volume = rng.normal(size=(8, 8, 8))
    mask = phos.saliency_mask(volume, 0.05)
    assert mask.shape == (8, 8, 8)
    assert int(mask.sum()) == int(0.05 * 512)
    # the selected voxels are the largest ones
    threshold = np.sort(volume.ravel())[-int(0.05 * 512)]
    assert volume[mask.astype(bool)].min() >= threshold


def test_volume_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    vol = rng.normal(size=(4, 4, 4)).astype(np.float32).astype(np.float64)
    path = str(tmp_path / "vol.svol")
    phos.save_volume(vol, path)
    back = phos.load_volume(path)
    np.testing.assert_array_equal(back, vol)

    # the header is the documented one
    with open(path, "rb") as f:
        magic = f.read(4)
        version, rank = struct.unpack("<II", f.read(8))
        dims = struct.unpack("<" + "I" * rank, f.read(4 * rank))
    assert magic == b"SVOL"
    assert version == 1
    assert dims == (4, 4, 4)

    with pytest.raises(phos.DataError):
        phos.load_volume(str(tmp_path / "missing.svol"))


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    binary = os.environ.get("PHOS_BIN")
    if not binary or not shutil.which(binary):
        pytest.skip("PHOS_BIN not set")
    root = tmp_path_factory.mktemp("cli")
    config = {
        "network": {
            "input_size": 16,
            "channels": [2, 4, 4, 4],
            "seed": 5,
        },
        "train": {"batch_size": 4, "epochs": 2, "seed": 7},
        "phantom": {
            "edge": 16,
            "n_cases": 12,
            "radius_min": 3.0,
            "radius_max": 5.0,
            "seed": 9,
        },
    }
    cfg = root / "config.json"
    cfg.write_text(json.dumps(config))
    subprocess.run(
        [binary, "synth", "--config", cfg, "--out", root / "ph"], check=True
    )
    subprocess.run(
        [
            binary,
            "train",
            "--config",
            cfg,
            "--manifest",
            root / "ph" / "manifest.csv",
            "--out",
            root / "fit",
        ],
        check=True,
    )
    return root


def test_cli_artifacts_and_model_inference(cli_run):
    manifest = (cli_run / "ph" / "manifest.csv").read_text().splitlines()
    assert manifest[0] == "id,age,resection,survival_days,flair,t1,t1ce,t2,mask"
    assert len(manifest) == 13

    history = [
        json.loads(line)
        for line in (cli_run / "fit" / "history.jsonl").read_text().splitlines()
    ]
    assert [h["epoch"] for h in history] == [1, 2]
    assert all("val_mae" in h for h in history)

    model = phos.Model(str(cli_run / "fit" / "best.ckpt"))
    assert model.head == "posthoc"
    assert model.n_bins == 4
    assert model.parameter_count > 0

    first = manifest[1].split(",")
    vols = [
        phos.load_volume(str(cli_run / "ph" / first[4 + i])) for i in range(4)
    ]
    image = np.stack(vols)[None, ...]
    # the model expects z-scored inputs; a crude standardization is enough
    # to exercise the forward pass and its output contract
    image = (image - image.mean()) / image.std()
    pred = model.predict(image, np.zeros(1))
    assert pred.shape == (1,)
    assert 0.0 < pred[0] < 1800.0

    n_star, saliency, mask = model.explain(image, np.zeros(1))
    assert 1 <= n_star <= model.n_bins
    assert saliency.shape == mask.shape
    assert int(mask.sum()) == max(1, int(0.05 * mask.size))
