"""The standalone writer's bytes must load bit-exactly through linprune."""

import numpy as np
import pytest

import linprune
from linprune_export.lndp_writer import write_batch, write_model_from_descriptors


def test_model_descriptors_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    w1 = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    b1 = rng.standard_normal(4).astype(np.float32)
    wd = rng.standard_normal((2, 4 * 16)).astype(np.float32)
    descriptors = [
        ("conv2d", {"stride": 1, "padding": 1, "weights": w1, "bias": b1}),
        ("batchnorm", {"epsilon": 1e-5,
                       "gamma": np.ones(4, np.float32),
                       "beta": np.zeros(4, np.float32),
                       "running_mean": np.zeros(4, np.float32),
                       "running_var": np.ones(4, np.float32)}),
        ("activation", {"op": "relu"}),
        ("pool", {"op": "max", "window": 2, "stride": 2}),
        ("flatten", {}),
        ("dense", {"weights": wd, "bias": None}),
    ]
    path = tmp_path / "m.lndp"
    write_model_from_descriptors(path, (3, 8, 8), descriptors, metadata={"source": "test"})

    model = linprune.load_model(path)
    assert linprune.validate(model)[-1] == (2,)
    assert model.metadata == {"source": "test"}
    assert model.layers[0].weights.tobytes() == w1.tobytes()
    assert model.layers[0].bias.tobytes() == b1.tobytes()
    assert model.layers[5].weights.tobytes() == wd.tobytes()
    assert model.layers[1].epsilon == 1e-5
    assert model.layers[3].window == 2


def test_batch_roundtrip_bitwise(tmp_path):
    rng = np.random.default_rng(1)
    images = rng.standard_normal((5, 3, 4, 4)).astype(np.float32)
    labels = [3, 1, 0, 2, 1]
    path = tmp_path / "b.lnds"
    write_batch(path, images, labels=labels, num_classes=4)

    batch = linprune.load_batch(path)
    assert batch.images.tobytes() == images.tobytes()
    assert batch.labels.tolist() == labels
    assert batch.num_classes == 4


def test_batch_label_count_checked(tmp_path):
    with pytest.raises(ValueError):
        write_batch(tmp_path / "b.lnds", np.zeros((2, 1, 2, 2), np.float32), labels=[1])


def test_files_are_byte_identical_to_linprune_writer(tmp_path):
    """Both implementations of the format must emit identical bytes."""
    rng = np.random.default_rng(2)
    images = rng.standard_normal((3, 3, 5, 5)).astype(np.float32)
    labels = [0, 2, 1]
    ours = tmp_path / "ours.lnds"
    theirs = tmp_path / "theirs.lnds"
    write_batch(ours, images, labels=labels, num_classes=3)
    linprune.save_batch(
        linprune.CalibrationBatch(images, labels=np.asarray(labels), num_classes=3), theirs
    )
    assert ours.read_bytes() == theirs.read_bytes()
