"""End-to-end smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import poisonbench as pb


def tiny_dataset(seed=42):
    return pb.generate_synthetic(
        {
            "num_classes": 4,
            "per_class_train": 25,
            "per_class_test": 10,
            "image_size": 16,
            "seed": seed,
        }
    )


PATCH = {"kind": "patch", "intensity": 1.0, "patch": {"pattern": "white", "size": 3}}

ARCH = {"name": "conv_small", "num_classes": 4, "width": 2, "image_size": 16}

TRAIN = {
    "epochs": 2,
    "batch_size": 32,
    "lr": 0.05,
    "lr_decay_epochs": [],
    "augmentation": "none",
    "seed": 7,
}


def test_synthetic_dataset_shapes():
    ds = tiny_dataset()
    assert ds.num_classes == 4
    assert ds.train_size == 100
    assert ds.test_size == 40

    imgs = ds.train_images()
    labels = ds.train_labels()
    assert imgs.shape == (100, 3, 16, 16)
    assert imgs.dtype == np.uint8
    assert labels.shape == (100,)
    assert sorted(set(labels.tolist())) == [0, 1, 2, 3]

    again = tiny_dataset()
    assert np.array_equal(imgs, again.train_images())


def test_apply_trigger():
    ds = tiny_dataset()
    img = ds.test_images()[0]

    stamped = pb.apply_trigger(img, PATCH)
    assert stamped.shape == img.shape
    assert (stamped[:, -3:, -3:] == 255).all()

    identity = {
        "kind": "additive_specific",
        "intensity": 0.0,
        "additive": {"master_seed": 5},
    }
    assert np.array_equal(pb.apply_trigger(img, identity), img)

    with pytest.raises(ValueError):
        pb.apply_trigger(img, {"kind": "hologram"})


def test_poison_train_evaluate():
    ds = tiny_dataset()
    plan = {
        "policy": "poisoned",
        "target_class": 0,
        "global_rate": 0.05,
        "trigger": PATCH,
        "seed": 11,
    }
    pd = pb.assemble_poisoned(ds, plan)
    assert len(pd.modified) == 5  # floor(0.05 * 100)
    assert math.isclose(pd.rate(), 0.05)
    assert len(pd.original_labels) == 5
    assert all(lbl != 0 for lbl in pd.original_labels)

    model = pb.train_model(ARCH, pd.dataset, TRAIN)
    pred = model.predict(ds.test_images())
    assert pred.shape == (40,)
    assert pred.dtype == np.int32
    assert ((pred >= 0) & (pred < 4)).all()

    report = pb.evaluate(model, ds, PATCH, 0)
    assert set(report) >= {
        "benign_accuracy",
        "attack_success_rate",
        "per_class_accuracy",
    }
    assert 0.0 < report["benign_accuracy"] <= 100.0
    assert 0.0 <= report["attack_success_rate"] <= 100.0
    assert len(report["per_class_accuracy"]) == 4

    cam = model.gradcam(ds.test_images()[0], 0)
    assert cam.shape == (16, 16)
    assert cam.min() >= 0.0 and cam.max() <= 1.0

    with pytest.raises(ValueError):
        model.predict(ds.test_images()[0])  # 3-dim, not a batch


def test_verify_theorem():
    params = {
        "n_benign": 20,
        "n_poison": 4,
        "num_classes": 2,
        "dim": 2,
        "gamma_rbf": 0.5,
        "trigger_scale": 0.5,
        "num_queries": 50,
    }
    report = pb.verify_theorem(params, 13)
    assert report["num_queries"] == 50
    assert math.isfinite(report["gap"])
    assert report["std_error"] > 0.0
    assert pb.verify_theorem(params, 13)["gap"] == report["gap"]


def test_experiment_configs():
    config = pb.desk_config(7, "out")
    assert config["dataset"]["synthetic"]["num_classes"] == 10
    assert config["arch"]["name"] == "conv_small"

    badnets = pb.configure_attack(config, "badnets")
    assert badnets["plan"]["trigger"]["kind"] == "patch"
    assert badnets["plan"]["policy"] == "poisoned"

    presets = pb.list_presets()
    assert ("table6", "main attack grid: BA/ASR per attack") in presets
    names = [name for name, _ in presets]
    assert "theory" in names
