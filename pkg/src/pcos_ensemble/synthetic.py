"""Seeded generator for an ultrasound-like two-class image corpus.

Healthy ("notinfected") images are a smooth illumination field multiplied by
smoothed exponential speckle. PCOS-positive ("infected") images are the same
texture with k dark soft-edged discs stamped in, mimicking follicles. The
discs remove intensity mass, so the classes are separable and tiny models
can learn the task in minutes.

Determinism: one random stream is consumed in a fixed order: split (train,
test), then class (infected, notinfected), then image index ascending;
within an image: illumination field, speckle, disc count, then disc
geometry. Identical config and seed reproduce byte-identical corpora.

A sidecar ``meta.json`` at the corpus root records the per-image disc
geometry for white-box assertions.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter, zoom

from .data_ingest import (
    CLASS_LABELS,
    INFECTED,
    SPLITS,
    DatasetManifest,
    ImageRecord,
)
from .errors import NonEmptyOutput

# Multiplier applied inside a follicle disc; low enough to be a clear signal.
FOLLICLE_DARKNESS = 0.25
# Soft edge width in pixels, so discs survive resampling.
_EDGE_WIDTH = 1.5


@dataclass(frozen=True)
class SynthesisConfig:
    per_class_train: int
    per_class_test: int
    image_size: int = 256
    follicle_count_range: tuple[int, int] = (3, 12)
    follicle_radius_range: tuple[int, int] = (6, 18)
    speckle_grain: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.per_class_train < 0 or self.per_class_test < 0:
            raise ValueError("per-class counts must be nonnegative")
        if self.image_size <= 0:
            raise ValueError("image_size must be positive")
        for name, (lo, hi) in (
            ("follicle_count_range", self.follicle_count_range),
            ("follicle_radius_range", self.follicle_radius_range),
        ):
            if lo > hi:
                raise ValueError(f"{name} is empty: {(lo, hi)}")
        if self.follicle_radius_range[1] >= self.image_size / 4:
            raise ValueError(
                "max follicle radius must be under a quarter of image_size"
            )
        if self.speckle_grain <= 0:
            raise ValueError("speckle_grain must be positive")


def _texture(rng: np.random.Generator, cfg: SynthesisConfig) -> np.ndarray:
    s = cfg.image_size
    # illumination varies slowly: draw it at 1/8 resolution and upsample
    low = max(4, s // 8)
    field = gaussian_filter(rng.standard_normal((low, low)), sigma=low / 8)
    field = (field - field.mean()) / (field.std() + 1e-9)
    field = zoom(field, s / low, order=1)[:s, :s]
    base = 0.62 + 0.06 * field
    speckle = gaussian_filter(rng.exponential(1.0, (s, s)), sigma=cfg.speckle_grain)
    speckle /= speckle.mean()
    return base * speckle


def _place_discs(
    rng: np.random.Generator, cfg: SynthesisConfig
) -> list[tuple[float, float, float]]:
    lo, hi = cfg.follicle_count_range
    rmin, rmax = cfg.follicle_radius_range
    s = cfg.image_size
    k = int(rng.integers(lo, hi + 1))
    placed: list[tuple[float, float, float]] = []
    for _ in range(k):
        cx = cy = r = 0.0
        for _attempt in range(50):
            r = float(rng.uniform(rmin, rmax))
            cx = float(rng.uniform(r + 2, s - r - 2))
            cy = float(rng.uniform(r + 2, s - r - 2))
            if all(
                (cx - px) ** 2 + (cy - py) ** 2 >= (r + pr + 2) ** 2
                for px, py, pr in placed
            ):
                break
        # overlap allowed once attempts run out; count always honored
        placed.append((cx, cy, r))
    return placed


def _stamp_discs(
    tex: np.ndarray, discs: list[tuple[float, float, float]]
) -> np.ndarray:
    s = tex.shape[0]
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    for cx, cy, r in discs:
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        mask = np.clip((r - dist) / _EDGE_WIDTH, 0.0, 1.0)
        tex = tex * (1.0 - (1.0 - FOLLICLE_DARKNESS) * mask)
    return tex


def _render(
    rng: np.random.Generator, cfg: SynthesisConfig, infected: bool
) -> tuple[np.ndarray, list[tuple[float, float, float]]]:
    tex = _texture(rng, cfg)
    discs = _place_discs(rng, cfg) if infected else []
    if discs:
        tex = _stamp_discs(tex, discs)
    pixels = np.rint(np.clip(tex, 0.0, 1.0) * 255.0).astype(np.uint8)
    return pixels, discs


def generate_corpus(config: SynthesisConfig, outdir: Path | str) -> DatasetManifest:
    """Write the canonical directory layout plus ``meta.json`` under ``outdir``.

    ``outdir`` must be empty or absent. Returns a manifest of the generated
    files (all valid by construction); no manifest file is written, so two
    runs with the same config and seed are byte-identical on disk.
    """
    outdir = Path(outdir).resolve()
    if outdir.exists() and any(outdir.iterdir()):
        raise NonEmptyOutput(f"output directory is not empty: {outdir}")

    rng = np.random.default_rng(config.seed)
    per_split = {"train": config.per_class_train, "test": config.per_class_test}
    records: list[ImageRecord] = []
    meta_images: dict[str, dict] = {}

    for split in SPLITS:
        for label in CLASS_LABELS:
            class_dir = outdir / split / label
            class_dir.mkdir(parents=True, exist_ok=True)
            for i in range(per_split[split]):
                pixels, discs = _render(rng, config, infected=label == INFECTED)
                path = class_dir / f"{label}_{i:04d}.png"
                Image.fromarray(pixels, mode="L").save(path, format="PNG")
                rel = path.relative_to(outdir).as_posix()
                meta_images[rel] = {
                    "discs": [
                        {"cx": round(cx, 3), "cy": round(cy, 3), "r": round(r, 3)}
                        for cx, cy, r in discs
                    ],
                    "mean_intensity": round(float(pixels.mean()), 4),
                }
                records.append(ImageRecord(path=path, label=label, split=split))

    meta = {"config": asdict(config), "images": meta_images}
    (outdir / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    manifest = DatasetManifest(root=outdir, records=records)
    manifest.recount()
    return manifest


def load_corpus_meta(root: Path | str) -> dict:
    """Read the sidecar metadata written by generate_corpus."""
    return json.loads((Path(root) / "meta.json").read_text(encoding="utf-8"))
