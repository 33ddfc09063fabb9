"""Fine-tuning loop: Adam + cross-entropy, per-epoch checkpoints.

The loop follows the standard order per batch: forward predictions, loss,
zero gradients, backpropagation, optimizer step. Two checkpoints are kept:
``best.pt`` (lowest epoch training loss) and ``last.pt``. A seeded fraction
of the train split is held out for ensemble weight search and never trained
on.

Determinism: with a fixed seed on CPU two runs produce identical loss
curves (exact float equality); nondeterministic accelerator kernels would
relax this to a documented tolerance, but this package runs on CPU.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .backbones import (
    WINDOWED_ATTENTION,
    BackboneSpec,
    ModelHandle,
    build_model,
)
from .data_ingest import (
    INFECTED,
    DatasetManifest,
    ImageRecord,
    split_train_holdout,
)
from .errors import CorruptCheckpoint, EmptyTrainSplit, NonFiniteLoss, SpecMismatch
from .preprocess import PreprocessConfig, preprocess_image

CHECKPOINT_FORMAT_VERSION = 1
LR_RANGE = (1e-4, 1e-3)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int | None = None  # resolved per family: 32 conv, 16 transformer
    epochs: int = 100
    seed: int = 0
    mixed_precision: bool = False
    checkpoint_dir: Path = Path("checkpoints")
    holdout_fraction: float = 0.1  # reserved for ensemble weight search
    holdout_seed: int = 0
    num_workers: int = 2
    deterministic: bool = True

    def __post_init__(self):
        lo, hi = LR_RANGE
        if not lo <= self.learning_rate <= hi:
            raise ValueError(
                f"learning_rate must be within [{lo}, {hi}]: {self.learning_rate}"
            )
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        self.checkpoint_dir = Path(self.checkpoint_dir)


@dataclass
class TrainReport:
    per_epoch_loss: list[float] = field(default_factory=list)
    final_checkpoint: Path | None = None
    best_checkpoint: Path | None = None
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "per_epoch_loss": self.per_epoch_loss,
            "final_checkpoint": str(self.final_checkpoint or ""),
            "best_checkpoint": str(self.best_checkpoint or ""),
            "wall_time": self.wall_time,
        }


def default_batch_size(kind: str) -> int:
    """32 for the convolutional families, 16 for the transformer family."""
    return 16 if kind == WINDOWED_ATTENTION else 32


def _reestimate_batchnorm(module: torch.nn.Module, x: torch.Tensor,
                          batch_size: int) -> None:
    """Replace BatchNorm running stats with exact stats under current weights.

    With few batches per epoch the EMA buffers lag the fast-moving weights
    and eval-mode outputs collapse; a cumulative no-grad pass over the fit
    data fixes that. Touches only buffers, so training dynamics and loss
    curves are unchanged.
    """
    bns = [
        m for m in module.modules()
        if isinstance(m, torch.nn.modules.batchnorm._BatchNorm)
    ]
    if not bns:
        return
    momenta = [bn.momentum for bn in bns]
    for bn in bns:
        bn.reset_running_stats()
        bn.momentum = None  # cumulative moving average
    was_training = module.training
    module.train()
    with torch.no_grad():
        for start in range(0, x.shape[0], batch_size):
            module(x[start:start + batch_size])
    for bn, m in zip(bns, momenta):
        bn.momentum = m
    module.train(was_training)


def load_records_as_tensors(
    records: list[ImageRecord],
    preprocess_config: PreprocessConfig | None = None,
    workers: int = 2,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Preprocess records into an in-memory (inputs, labels) tensor pair.

    Labels follow the logit column order: notinfected = 0, infected = 1.
    """
    cfg = preprocess_config or PreprocessConfig()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        images = list(pool.map(lambda r: preprocess_image(r.path, cfg), records))
    x = torch.from_numpy(np.stack([im.data for im in images]))
    y = torch.tensor(
        [1 if r.label == INFECTED else 0 for r in records], dtype=torch.long
    )
    return x, y


def train(
    model: ModelHandle,
    manifest: DatasetManifest,
    config: TrainConfig,
    preprocess_config: PreprocessConfig | None = None,
) -> TrainReport:
    """Fit ``model`` on the manifest's train split (minus the holdout)."""
    fit_records, _ = split_train_holdout(
        manifest, fraction=config.holdout_fraction, seed=config.holdout_seed
    )
    if not fit_records:
        raise EmptyTrainSplit(f"no valid training images under {manifest.root}")

    if config.deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
    torch.manual_seed(config.seed)

    x, y = load_records_as_tensors(
        fit_records, preprocess_config, workers=config.num_workers
    )
    batch_size = config.batch_size or default_batch_size(model.spec.kind)
    module = model.module
    optimizer = torch.optim.Adam(module.parameters(), lr=config.learning_rate)
    shuffler = torch.Generator().manual_seed(config.seed)

    config.checkpoint_dir.mkdir(parents=True, exist_ok=True)
    last_path = config.checkpoint_dir / "last.pt"
    best_path = config.checkpoint_dir / "best.pt"

    report = TrainReport()
    best_loss = float("inf")
    start = time.perf_counter()
    module.train()
    model.mode = "train"

    for epoch in range(config.epochs):
        order = torch.randperm(x.shape[0], generator=shuffler)
        batch_losses = []
        for bi, base in enumerate(range(0, x.shape[0], batch_size)):
            idx = order[base:base + batch_size]
            with torch.autocast(
                "cpu", dtype=torch.bfloat16, enabled=config.mixed_precision
            ):
                logits = module(x[idx])
                loss = F.cross_entropy(logits, y[idx])
            if not torch.isfinite(loss):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch}, batch {bi}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            batch_losses.append(float(loss.detach()))
        epoch_loss = float(np.mean(batch_losses))
        report.per_epoch_loss.append(epoch_loss)
        _reestimate_batchnorm(module, x, batch_size)
        save_checkpoint(model, last_path, seed=config.seed, epoch=epoch)
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            save_checkpoint(model, best_path, seed=config.seed, epoch=epoch)

    if config.epochs == 0:
        # still emit a usable checkpoint of the untouched parameters
        save_checkpoint(model, last_path, seed=config.seed, epoch=-1)
        save_checkpoint(model, best_path, seed=config.seed, epoch=-1)

    module.eval()
    model.mode = "eval"
    report.final_checkpoint = last_path
    report.best_checkpoint = best_path
    report.wall_time = time.perf_counter() - start

    report_path = config.checkpoint_dir / "train_report.json"
    report_path.write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return report


def save_checkpoint(
    model: ModelHandle,
    path: Path | str,
    seed: int | None = None,
    epoch: int | None = None,
) -> Path:
    """Write a versioned checkpoint: spec fields, parameters, seed, epoch."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": model.spec.kind,
        "scale": model.spec.scale,
        "pretrained": model.spec.pretrained,
        "num_classes": model.spec.num_classes,
        "state_dict": model.module.state_dict(),
        "seed": seed,
        "epoch": epoch,
    }
    torch.save(payload, path)
    return path


def peek_checkpoint_spec(path: Path | str) -> BackboneSpec:
    """Read the BackboneSpec recorded in a checkpoint without building it."""
    payload = _read_checkpoint(path)
    return BackboneSpec(
        kind=payload["kind"],
        scale=payload["scale"],
        pretrained=False,
        num_classes=payload["num_classes"],
    )


def _read_checkpoint(path: Path | str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CorruptCheckpoint(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    if (
        not isinstance(payload, dict)
        or payload.get("format_version") != CHECKPOINT_FORMAT_VERSION
    ):
        raise CorruptCheckpoint(f"unknown checkpoint format in {path}")
    return payload


def load_checkpoint(spec: BackboneSpec, path: Path | str) -> ModelHandle:
    """Rebuild a model from a checkpoint; kind and scale must match ``spec``.

    The architecture is constructed from scratch (never fetching pretrained
    weights) and the stored parameters are loaded, so logits round-trip
    within 1e-6 of the saved model.
    """
    payload = _read_checkpoint(path)
    if payload["kind"] != spec.kind or payload["scale"] != spec.scale:
        raise SpecMismatch(
            f"checkpoint holds {payload['kind']}/{payload['scale']}, "
            f"requested {spec.kind}/{spec.scale}"
        )
    handle = build_model(replace(spec, pretrained=False))
    handle.module.load_state_dict(payload["state_dict"])
    handle.eval()
    return ModelHandle(spec=spec, module=handle.module, mode="eval")
