"""Checkpoint export: parity, manifest integrity, and rejections."""

import json

import numpy as np
import pytest
import torch
from torch import nn

import linprune
from linprune_export import (
    ExportError,
    build_cifar_vgg,
    export_model,
    load_checkpoint,
    sha256_of,
    verify_parity,
)


def probe(rng, shape, n):
    return rng.standard_normal((n,) + shape).astype(np.float32)


class TestToyExport:
    def test_conv_dense_parity(self, tmp_path):
        torch.manual_seed(0)
        toy = nn.Sequential(
            nn.Conv2d(3, 6, 3, padding=1), nn.ReLU(),
            nn.MaxPool2d(2, 2),
            nn.Flatten(), nn.Linear(6 * 4 * 4, 5),
        ).eval()
        out = tmp_path / "toy.lndp"
        export_model(toy, (3, 8, 8), out, tmp_path / "toy.json")
        rng = np.random.default_rng(0)
        assert verify_parity(toy, out, probe(rng, (3, 8, 8), 8)) <= 1e-5

    def test_bn_and_avgpool_parity(self, tmp_path):
        torch.manual_seed(1)
        net = nn.Sequential(
            nn.Conv2d(2, 4, 3, padding=1),
            nn.BatchNorm2d(4), nn.ReLU(),
            nn.AvgPool2d(2, 2),
            nn.Flatten(), nn.Linear(4 * 3 * 3, 2),
        )
        # populate running stats with a forward pass in train mode
        net.train()(torch.randn(16, 2, 6, 6))
        net.eval()
        out = tmp_path / "net.lndp"
        export_model(net, (2, 6, 6), out, tmp_path / "net.json")
        rng = np.random.default_rng(1)
        assert verify_parity(net, out, probe(rng, (2, 6, 6), 8)) <= 1e-5

    def test_adaptive_avgpool_lowered(self, tmp_path):
        torch.manual_seed(2)
        net = nn.Sequential(
            nn.Conv2d(3, 4, 3, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d((1, 1)),
            nn.Flatten(), nn.Linear(4, 3),
        ).eval()
        out = tmp_path / "net.lndp"
        export_model(net, (3, 8, 8), out, tmp_path / "net.json")
        rng = np.random.default_rng(2)
        assert verify_parity(net, out, probe(rng, (3, 8, 8), 6)) <= 1e-5

    def test_dropout_skipped_and_recorded(self, tmp_path):
        toy = nn.Sequential(
            nn.Conv2d(3, 4, 3, padding=1), nn.ReLU(), nn.Dropout(0.5),
            nn.Flatten(), nn.Linear(4 * 64, 2),
        ).eval()
        manifest = export_model(toy, (3, 8, 8), tmp_path / "m.lndp", tmp_path / "m.json")
        assert any("identity" in entry["reason"] for entry in manifest.skipped_modules)
        model = linprune.load_model(tmp_path / "m.lndp")
        assert len(model.layers) == 4  # dropout gone


class TestRejections:
    def test_unsupported_module_named(self, tmp_path):
        net = nn.Sequential(nn.Conv2d(3, 4, 3), nn.Sigmoid(),
                            nn.Flatten(), nn.Linear(4 * 36, 2)).eval()
        with pytest.raises(ExportError, match="Sigmoid"):
            export_model(net, (3, 8, 8), tmp_path / "m.lndp")

    def test_missing_running_stats_rejected(self, tmp_path):
        net = nn.Sequential(
            nn.Conv2d(3, 4, 3, padding=1),
            nn.BatchNorm2d(4, track_running_stats=False),
            nn.Flatten(), nn.Linear(4 * 64, 2),
        ).eval()
        with pytest.raises(ExportError, match="running statistics"):
            export_model(net, (3, 8, 8), tmp_path / "m.lndp")

    def test_grouped_conv_rejected(self, tmp_path):
        net = nn.Sequential(nn.Conv2d(4, 4, 3, groups=2),
                            nn.Flatten(), nn.Linear(4 * 36, 2)).eval()
        with pytest.raises(ExportError, match="grouped"):
            export_model(net, (4, 8, 8), tmp_path / "m.lndp")


class TestManifest:
    def test_every_layer_maps_to_one_source(self, tmp_path):
        vgg = build_cifar_vgg("vgg11", batch_norm=True).eval()
        manifest = export_model(vgg, (3, 32, 32), tmp_path / "m.lndp",
                                tmp_path / "m.json")
        model = linprune.load_model(tmp_path / "m.lndp")
        indices = [entry["index"] for entry in manifest.layer_map]
        assert indices == list(range(len(model.layers)))
        assert len({entry["index"] for entry in manifest.layer_map}) == len(model.layers)

    def test_checksums_match_files_on_disk(self, tmp_path):
        vgg = build_cifar_vgg("vgg11", batch_norm=False).eval()
        out = tmp_path / "m.lndp"
        manifest_path = tmp_path / "m.json"
        export_model(vgg, (3, 32, 32), out, manifest_path)
        stored = json.loads(manifest_path.read_text())["checksums"]
        assert stored[str(out)] == sha256_of(out)


class TestVgg16:
    def test_full_depth_parity_on_cifar_shaped_batch(self, tmp_path):
        torch.manual_seed(3)
        vgg = build_cifar_vgg("vgg16", batch_norm=True)
        # give BN non-trivial statistics so folding is actually exercised
        vgg.train()(torch.randn(32, 3, 32, 32))
        vgg.eval()
        out = tmp_path / "vgg16.lndp"
        export_model(vgg, (3, 32, 32), out, tmp_path / "vgg16.json")
        rng = np.random.default_rng(3)
        diff = verify_parity(vgg, out, probe(rng, (3, 32, 32), 256))
        assert diff <= 1e-3

    def test_state_dict_checkpoint_roundtrip(self, tmp_path):
        torch.manual_seed(4)
        vgg = build_cifar_vgg("vgg16", batch_norm=True)
        vgg.train()(torch.randn(8, 3, 32, 32))
        vgg.eval()
        ckpt = tmp_path / "ckpt.pth"
        torch.save({"state_dict": vgg.state_dict()}, ckpt)
        loaded = load_checkpoint(ckpt, arch="vgg16")
        with torch.no_grad():
            x = torch.randn(4, 3, 32, 32)
            assert torch.max(torch.abs(loaded(x) - vgg(x))).item() == 0.0

    def test_full_module_checkpoint(self, tmp_path):
        torch.manual_seed(5)
        vgg = build_cifar_vgg("vgg11", batch_norm=False).eval()
        ckpt = tmp_path / "full.pt"
        torch.save(vgg, ckpt)
        loaded = load_checkpoint(ckpt)
        with torch.no_grad():
            x = torch.randn(2, 3, 32, 32)
            assert torch.max(torch.abs(loaded(x) - vgg(x))).item() == 0.0

    def test_emitted_model_passes_validation(self, tmp_path):
        vgg = build_cifar_vgg("vgg13", batch_norm=True).eval()
        out = tmp_path / "m.lndp"
        export_model(vgg, (3, 32, 32), out)
        model = linprune.load_model(out)
        trace = linprune.validate(model)
        assert trace[-1] == (10,)

    def test_export_is_deterministic(self, tmp_path):
        torch.manual_seed(6)
        vgg = build_cifar_vgg("vgg11", batch_norm=True).eval()
        a, b = tmp_path / "a.lndp", tmp_path / "b.lndp"
        export_model(vgg, (3, 32, 32), a)
        export_model(vgg, (3, 32, 32), b)
        assert a.read_bytes() == b.read_bytes()
