"""Image-to-tensor preprocessing: resize, unit scale, channel normalization.

Pipeline: decode -> RGB (grayscale replicated across channels) -> bilinear
resize to 224x224 -> scale to [0, 1] -> per-channel standardization with
ImageNet statistics. All stages are pure and deterministic, so the same
file and config always produce a bitwise-equal array.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DecodeError, ShapeError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class PreprocessConfig:
    target_size: int = 224
    channel_mean: tuple[float, float, float] = IMAGENET_MEAN
    channel_std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        if self.target_size <= 0:
            raise ValueError("target_size must be positive")
        if any(s <= 0 for s in self.channel_std):
            raise ValueError("channel_std components must be positive")


@dataclass
class PreprocessedImage:
    data: np.ndarray  # float32, (3, target_size, target_size)
    source: str


def load_and_resize(path: Path | str, config: PreprocessConfig) -> Image.Image:
    """Decode ``path`` into an RGB image of exactly target_size.

    Grayscale inputs are replicated across the three channels; resampling is
    bilinear. Files that regressed since the integrity scan raise DecodeError.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            rgb = img.convert("RGB")
    except Exception as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc
    size = (config.target_size, config.target_size)
    return rgb.resize(size, Image.BILINEAR)


def to_unit_array(image: Image.Image) -> np.ndarray:
    """8-bit RGB image -> channel-first float32 array with values v/255."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected an RGB image, got array shape {arr.shape}")
    return np.ascontiguousarray(arr.transpose(2, 0, 1)) / np.float32(255.0)


def normalize(
    arr: np.ndarray, config: PreprocessConfig, source: str = "array"
) -> PreprocessedImage:
    """Per channel c: out = (in - mean_c) / std_c."""
    expected = (3, config.target_size, config.target_size)
    if arr.ndim != 3 or arr.shape != expected:
        raise ShapeError(f"expected array of shape {expected}, got {arr.shape}")
    mean = np.asarray(config.channel_mean, dtype=np.float32).reshape(3, 1, 1)
    std = np.asarray(config.channel_std, dtype=np.float32).reshape(3, 1, 1)
    data = (arr.astype(np.float32) - mean) / std
    return PreprocessedImage(data=data, source=source)


def denormalize(data: np.ndarray, config: PreprocessConfig) -> np.ndarray:
    """Inverse of normalize: out = in * std_c + mean_c."""
    mean = np.asarray(config.channel_mean, dtype=np.float32).reshape(3, 1, 1)
    std = np.asarray(config.channel_std, dtype=np.float32).reshape(3, 1, 1)
    return data * std + mean


def channel_bounds(config: PreprocessConfig) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise (low, high) bounds of normalized values per channel."""
    mean = np.asarray(config.channel_mean, dtype=np.float32).reshape(3, 1, 1)
    std = np.asarray(config.channel_std, dtype=np.float32).reshape(3, 1, 1)
    low = (np.float32(0.0) - mean) / std
    high = (np.float32(1.0) - mean) / std
    return low, high


def preprocess_image(
    path: Path | str,
    config: PreprocessConfig | None = None,
    source: str | None = None,
) -> PreprocessedImage:
    """Full pipeline for one file: decode, resize, unit-scale, normalize."""
    config = config or PreprocessConfig()
    image = load_and_resize(path, config)
    unit = to_unit_array(image)
    return normalize(unit, config, source=source or str(path))
