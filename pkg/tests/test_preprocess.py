"""Preprocessing pipeline: resize, unit scale, normalization, round-trip."""

import numpy as np
import pytest
from PIL import Image

from pcos_ensemble.errors import DecodeError, ShapeError
from pcos_ensemble.preprocess import (
    PreprocessConfig,
    channel_bounds,
    denormalize,
    load_and_resize,
    normalize,
    preprocess_image,
    to_unit_array,
)

CFG = PreprocessConfig()


class TestLoadAndResize:
    def test_rectangular_input_becomes_224_square(self, tmp_path):
        path = tmp_path / "rect.png"
        Image.new("RGB", (512, 384), (10, 20, 30)).save(path)
        out = load_and_resize(path, CFG)
        assert out.size == (224, 224)

    def test_identity_resize_preserves_pixels(self, tmp_path):
        path = tmp_path / "same.png"
        Image.new("L", (224, 224), 137).save(path)
        out = load_and_resize(path, CFG)
        arr = np.asarray(out)
        assert arr.shape == (224, 224, 3)
        assert (arr == 137).all()

    def test_bilinear_downsample_of_constant_is_constant(self, tmp_path):
        path = tmp_path / "const.png"
        Image.new("RGB", (448, 448), (200, 200, 200)).save(path)
        out = load_and_resize(path, CFG)
        assert (np.asarray(out) == 200).all()

    def test_grayscale_replicated_across_channels(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.fromarray(
            np.arange(64, dtype=np.uint8).reshape(8, 8) * 3, mode="L"
        ).save(path)
        arr = np.asarray(load_and_resize(path, CFG))
        assert (arr[..., 0] == arr[..., 1]).all()
        assert (arr[..., 1] == arr[..., 2]).all()

    def test_regressed_file_raises_decode_error(self, tmp_path):
        path = tmp_path / "broken.png"
        path.write_bytes(b"\x89PNG\r\n\x1a\nnot really")
        with pytest.raises(DecodeError):
            load_and_resize(path, CFG)


class TestUnitArray:
    def test_boundary_values(self):
        img = Image.new("RGB", (224, 224), (255, 0, 128))
        arr = to_unit_array(img)
        assert arr.shape == (3, 224, 224)
        assert arr.dtype == np.float32
        assert arr[0, 0, 0] == 1.0
        assert arr[1, 0, 0] == 0.0
        assert abs(arr[2, 0, 0] - 128 / 255) < 1e-7  # ~0.50196

    def test_channel_first_layout(self):
        img = Image.new("RGB", (224, 224), (255, 0, 0))
        arr = to_unit_array(img)
        assert (arr[0] == 1.0).all() and (arr[1] == 0.0).all()


class TestNormalize:
    def test_plane_at_channel_mean_centers_to_zero(self):
        arr = np.zeros((3, 224, 224), dtype=np.float32)
        arr[0] = 0.485
        out = normalize(arr, CFG)
        np.testing.assert_allclose(out.data[0], 0.0, atol=1e-6)

    def test_plane_at_one_hits_upper_bound(self):
        arr = np.ones((3, 224, 224), dtype=np.float32)
        out = normalize(arr, CFG)
        expected = (1.0 - 0.485) / 0.229  # = 2.2489...
        np.testing.assert_allclose(out.data[0], expected, atol=1e-4)
        assert abs(expected - 2.2489) < 1e-4

    def test_defaults_are_imagenet_statistics(self):
        assert CFG.channel_mean == (0.485, 0.456, 0.406)
        assert CFG.channel_std == (0.229, 0.224, 0.225)

    def test_wrong_shape_raises(self):
        with pytest.raises(ShapeError):
            normalize(np.zeros((224, 224), dtype=np.float32), CFG)
        with pytest.raises(ShapeError):
            normalize(np.zeros((1, 224, 224), dtype=np.float32), CFG)

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            PreprocessConfig(channel_std=(0.0, 0.2, 0.2))


class TestPipelineProperties:
    def test_round_trip_within_1e6(self, mini_corpus):
        rec = mini_corpus.records[0]
        pp = preprocess_image(rec.path, CFG)
        img = load_and_resize(rec.path, CFG)
        unit = to_unit_array(img)
        np.testing.assert_allclose(denormalize(pp.data, CFG), unit, atol=1e-6)

    def test_bounds_invariant_on_every_corpus_image(self, mini_corpus):
        low, high = channel_bounds(CFG)
        for rec in mini_corpus.records:
            data = preprocess_image(rec.path, CFG).data
            assert data.shape == (3, 224, 224)
            assert (data >= low).all() and (data <= high).all()

    def test_deterministic_bitwise(self, mini_corpus):
        rec = mini_corpus.records[0]
        a = preprocess_image(rec.path, CFG).data
        b = preprocess_image(rec.path, CFG).data
        assert (a == b).all()

    def test_source_recorded(self, mini_corpus):
        rec = mini_corpus.records[0]
        assert str(rec.path) == preprocess_image(rec.path, CFG).source
