"""Bit-exact persistence of pathway masks."""
import struct

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from pathgen.errors import DataFormatError
from pathgen.maskfile import read_mask, write_mask
from pathgen.masks import PathwayMask


def random_pathway(rng, max_layers=3, max_dim=6) -> PathwayMask:
    k = int(rng.integers(1, max_layers + 1))
    masks = []
    for _ in range(k):
        shape = tuple(int(rng.integers(1, max_dim + 1)) for _ in range(3))
        masks.append(torch.from_numpy(rng.integers(0, 2, size=shape).astype(np.float32)))
    return PathwayMask(masks)


class TestRoundTrip:
    def test_many_random_masks_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(200):
            mask = random_pathway(rng)
            path = tmp_path / f"m{i}.npwy"
            write_mask(path, mask)
            loaded = read_mask(path)
            assert loaded.layer_shapes == mask.layer_shapes
            for a, b in zip(loaded.masks, mask.masks):
                assert torch.equal(a, b)

    @given(st.integers(0, 2**32 - 1))
    @settings(
        max_examples=30,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    def test_round_trip_property(self, tmp_path, seed):
        # The tmp_path reuse across examples is fine: each write overwrites.
        rng = np.random.default_rng(seed)
        mask = random_pathway(rng)
        path = tmp_path / "prop.npwy"
        write_mask(path, mask)
        loaded = read_mask(path)
        for a, b in zip(loaded.masks, mask.masks):
            assert torch.equal(a, b)

    def test_known_bit_layout(self, tmp_path):
        # Elements (1,0,1) pack LSB-first into 0b00000101 = 0x05.
        mask = PathwayMask([torch.tensor([1.0, 0.0, 1.0]).reshape(1, 1, 3)])
        path = tmp_path / "bits.npwy"
        write_mask(path, mask)
        raw = path.read_bytes()
        assert raw[:4] == b"NPWY"
        version, layers = struct.unpack_from("<HI", raw, 4)
        assert version == 1 and layers == 1
        assert struct.unpack_from("<III", raw, 10) == (1, 1, 3)
        assert raw[22] == 0x05


class TestErrors:
    def make_file(self, tmp_path):
        mask = PathwayMask([torch.ones(2, 3, 3)])
        path = tmp_path / "m.npwy"
        write_mask(path, mask)
        return path

    def test_corrupted_checksum_detected(self, tmp_path):
        path = self.make_file(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[-6] ^= 0xFF  # flip a payload bit
        path.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError, match="checksum"):
            read_mask(path)

    def test_truncated_file(self, tmp_path):
        path = self.make_file(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-3])
        with pytest.raises(DataFormatError, match="size mismatch|truncated"):
            read_mask(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.npwy"
        path.write_bytes(b"JUNKJUNKJUNKJUNK")
        with pytest.raises(DataFormatError, match="magic"):
            read_mask(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError, match="not found"):
            read_mask(tmp_path / "nope.npwy")

    def test_relaxed_mask_rejected_on_write(self, tmp_path):
        mask = PathwayMask([torch.full((1, 2, 2), 0.5)])
        with pytest.raises(ValueError, match="finalized"):
            write_mask(tmp_path / "bad.npwy", mask)

    def test_batched_mask_rejected_on_write(self, tmp_path):
        mask = PathwayMask([torch.ones(2, 1, 2, 2)])
        with pytest.raises(ValueError, match="one sample"):
            write_mask(tmp_path / "bad.npwy", mask)
