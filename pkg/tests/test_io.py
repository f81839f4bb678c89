import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hgm.io import file_sha256, load_image_dir, load_png, save_png, to_uint8


class TestPng:
    @given(hnp.arrays(np.float64, (5, 4, 3), elements=st.floats(0, 1)))
    def test_round_trip_within_half_step(self, x):
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as d:
            save_png(Path(d) / "x.png", x)
            back = load_png(Path(d) / "x.png")
        assert np.max(np.abs(back - x)) <= 1 / 510 + 1e-12

    def test_grey(self, tmp_path, rng):
        x = rng.random((6, 6, 1))
        save_png(tmp_path / "g.png", x)
        assert load_png(tmp_path / "g.png", channels=1).shape == (6, 6, 1)

    def test_clamps_and_rounds(self):
        np.testing.assert_array_equal(to_uint8(np.array([-1.0, 0.25, 2.0, 1.4 / 255])), [0, 64, 255, 1])

    def test_rejects_two_channels(self, tmp_path):
        with pytest.raises(ValueError):
            save_png(tmp_path / "x.png", np.zeros((2, 2, 2)))

    def test_same_image_same_bytes(self, tmp_path, rng):
        x = rng.random((8, 8, 3))
        save_png(tmp_path / "a.png", x)
        save_png(tmp_path / "b.png", x)
        assert file_sha256(tmp_path / "a.png") == file_sha256(tmp_path / "b.png")


class TestImageDir:
    def test_sorted_loading(self, tmp_path, rng):
        for name in ["b", "a", "c"]:
            save_png(tmp_path / f"{name}.png", rng.random((4, 4, 3)))
        ids, stack = load_image_dir(tmp_path)
        assert ids == ["a", "b", "c"] and stack.shape == (3, 4, 4, 3)

    def test_mixed_sizes(self, tmp_path, rng):
        save_png(tmp_path / "a.png", rng.random((4, 4, 3)))
        save_png(tmp_path / "b.png", rng.random((6, 4, 3)))
        with pytest.raises(ValueError):
            load_image_dir(tmp_path)

    def test_empty(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image_dir(tmp_path)
