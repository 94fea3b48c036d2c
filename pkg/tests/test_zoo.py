"""Architecture registry and checkpoint persistence."""
import pytest
import torch

from pathgen.errors import ConfigError, DataFormatError
from pathgen.zoo import build_model, load_checkpoint, save_checkpoint, toy3


class TestRegistry:
    def test_known_architectures(self):
        for arch, classes, k_in in (("toy3", 2, 3), ("alexnet32", 10, 3), ("vgg11bn32", 10, 3)):
            net = build_model(arch)
            assert net.arch == arch
            assert net.num_classes == classes
            assert net.input_size[0] == k_in

    def test_unknown_architecture(self):
        with pytest.raises(ConfigError, match="unknown architecture"):
            build_model("resnet50")

    def test_class_count_override(self):
        net = build_model("toy3", num_classes=5)
        assert net.num_classes == 5
        assert net(torch.rand(1, 3, 16, 16)).shape == (1, 5)


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        torch.manual_seed(0)
        net = toy3()
        save_checkpoint(tmp_path / "m.pt", net)
        loaded = load_checkpoint(tmp_path / "m.pt")
        x = torch.rand(1, 3, 16, 16)
        with torch.no_grad():
            assert torch.equal(net(x), loaded(x))

    def test_missing_path(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_checkpoint(tmp_path / "missing.pt")

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "junk.pt"
        path.write_bytes(b"not a torch archive")
        with pytest.raises(DataFormatError, match="cannot read"):
            load_checkpoint(path)

    def test_incomplete_payload(self, tmp_path):
        path = tmp_path / "partial.pt"
        torch.save({"arch": "toy3"}, path)
        with pytest.raises(DataFormatError, match="missing field"):
            load_checkpoint(path)