"""Backbone construction and inference contracts."""

import numpy as np
import pytest
import torch

from pcos_ensemble.backbones import (
    BACKBONE_KINDS,
    RESIDUAL,
    BackboneSpec,
    ModelHandle,
    build_model,
    count_parameters,
    forward_logits,
)
from pcos_ensemble.errors import ShapeError, WeightsUnavailable


@pytest.fixture(scope="module")
def tiny_models():
    return {
        kind: build_model(BackboneSpec(kind=kind), seed=0)
        for kind in BACKBONE_KINDS
    }


def _random_batch(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, 3, 224, 224)).astype(np.float32)


class TestSpecValidation:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            BackboneSpec(kind="vgg")

    def test_tiny_pretrained_rejected(self):
        with pytest.raises(ValueError):
            BackboneSpec(kind=RESIDUAL, scale="tiny", pretrained=True)

    def test_head_width_fixed_at_two(self):
        with pytest.raises(ValueError):
            BackboneSpec(kind=RESIDUAL, num_classes=3)


class TestTinyModels:
    def test_all_five_kinds_build_and_emit_2_logits(self, tiny_models):
        batch = _random_batch(4)
        for kind, handle in tiny_models.items():
            out = forward_logits(handle, batch)
            assert out.values.shape == (4, 2), kind
            assert np.isfinite(out.values).all(), kind
            assert out.model_id == kind

    def test_parameter_count_under_one_million(self, tiny_models):
        for kind, handle in tiny_models.items():
            assert count_parameters(handle) < 1_000_000, kind

    def test_duplicated_input_gives_identical_rows(self, tiny_models):
        one = _random_batch(1)
        batch = np.repeat(one, 3, axis=0)
        for handle in tiny_models.values():
            out = forward_logits(handle, batch).values
            np.testing.assert_array_equal(out[0], out[1])
            np.testing.assert_array_equal(out[1], out[2])

    def test_eval_mode_forward_is_deterministic(self, tiny_models):
        batch = _random_batch(5, seed=3)
        for handle in tiny_models.values():
            a = forward_logits(handle, batch).values
            b = forward_logits(handle, batch).values
            # CPU kernels: exact equality, no tolerance needed
            np.testing.assert_array_equal(a, b)

    def test_empty_batch_gives_0x2_matrix(self, tiny_models):
        for handle in tiny_models.values():
            out = forward_logits(handle, [])
            assert out.values.shape == (0, 2)

    def test_seeded_build_is_reproducible(self):
        a = build_model(BackboneSpec(kind=RESIDUAL), seed=11)
        b = build_model(BackboneSpec(kind=RESIDUAL), seed=11)
        batch = _random_batch(2)
        np.testing.assert_array_equal(
            forward_logits(a, batch).values, forward_logits(b, batch).values
        )

    def test_malformed_batch_raises_shape_error(self, tiny_models):
        handle = next(iter(tiny_models.values()))
        with pytest.raises(ShapeError):
            forward_logits(handle, np.zeros((2, 1, 224, 224), dtype=np.float32))

    def test_train_mode_inference_rejected(self, tiny_models):
        handle = next(iter(tiny_models.values()))
        handle.train()
        try:
            with pytest.raises(RuntimeError):
                forward_logits(handle, _random_batch(1))
        finally:
            handle.eval()


class TestPaperScale:
    def test_residual_paper_scale_builds_offline(self):
        handle = build_model(BackboneSpec(kind=RESIDUAL, scale="paper"))
        out = forward_logits(handle, _random_batch(1))
        assert out.values.shape == (1, 2)

    def test_pretrained_without_cache_raises_with_fetch_path(self, monkeypatch):
        monkeypatch.delenv("MODEL_CACHE_DIR", raising=False)
        spec = BackboneSpec(kind=RESIDUAL, scale="paper", pretrained=True)
        with pytest.raises(WeightsUnavailable) as exc:
            build_model(spec)
        assert "https://" in str(exc.value)

    def test_pretrained_with_empty_cache_names_expected_file(
        self, monkeypatch, tmp_path
    ):
        monkeypatch.setenv("MODEL_CACHE_DIR", str(tmp_path))
        spec = BackboneSpec(kind=RESIDUAL, scale="paper", pretrained=True)
        with pytest.raises(WeightsUnavailable) as exc:
            build_model(spec)
        assert str(tmp_path) in str(exc.value)
