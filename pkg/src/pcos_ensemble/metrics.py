"""Confusion matrix, derived metrics, split evaluation, and report files.

The positive class is ``infected`` throughout. Metrics are always computed
from exact integer counts, never by averaging per-batch values, so results
do not depend on batch size. Zero-denominator ratios are reported as 0 and
flagged instead of raising, so degenerate desk-scale splits never crash a
batch evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .backbones import ModelHandle, forward_logits
from .data_ingest import INFECTED, NOTINFECTED, DatasetManifest
from .errors import EmptyInput, LengthMismatch
from .fusion import EnsembleSpec, fuse_logits
from .preprocess import PreprocessConfig, preprocess_image


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: ConfusionMatrix
    model_id: str = ""
    undefined: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "model": self.model_id,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": {
                "tp": self.confusion.tp,
                "fp": self.confusion.fp,
                "fn": self.confusion.fn,
                "tn": self.confusion.tn,
            },
            "undefined": list(self.undefined),
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "MetricsReport":
        cm = raw["confusion"]
        return cls(
            accuracy=float(raw["accuracy"]),
            precision=float(raw["precision"]),
            recall=float(raw["recall"]),
            f1=float(raw["f1"]),
            confusion=ConfusionMatrix(
                tp=int(cm["tp"]), fp=int(cm["fp"]),
                fn=int(cm["fn"]), tn=int(cm["tn"]),
            ),
            model_id=raw.get("model", ""),
            undefined=tuple(raw.get("undefined", ())),
        )


def confusion(
    predictions: Sequence[str], labels: Sequence[str]
) -> ConfusionMatrix:
    """Count tp/fp/fn/tn with ``infected`` as the positive class."""
    if len(predictions) != len(labels):
        raise LengthMismatch(
            f"{len(predictions)} predictions vs {len(labels)} labels"
        )
    if not labels:
        raise EmptyInput("cannot build a confusion matrix from zero records")
    tp = fp = fn = tn = 0
    for pred, true in zip(predictions, labels):
        if true == INFECTED:
            if pred == INFECTED:
                tp += 1
            else:
                fn += 1
        else:
            if pred == INFECTED:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def compute_metrics(cm: ConfusionMatrix, model_id: str = "") -> MetricsReport:
    """accuracy, precision, recall, f1 from exact counts."""
    if cm.total == 0:
        raise EmptyInput("confusion matrix has no records")
    undefined: list[str] = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    accuracy = (cm.tp + cm.tn) / cm.total
    precision = ratio(cm.tp, cm.tp + cm.fp, "precision")
    recall = ratio(cm.tp, cm.tp + cm.fn, "recall")
    f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "f1")
    return MetricsReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=cm,
        model_id=model_id,
        undefined=tuple(undefined),
    )


def _split_inputs(
    manifest: DatasetManifest,
    split: str,
    preprocess_config: PreprocessConfig | None,
) -> tuple[np.ndarray, list[str], list[str]]:
    records = manifest.valid_records(split)
    if not records:
        raise EmptyInput(f"no valid records in split {split!r}")
    cfg = preprocess_config or PreprocessConfig()
    arrays = []
    for rec in records:
        try:
            arrays.append(preprocess_image(rec.path, cfg).data)
        except Exception as exc:
            raise type(exc)(
                f"{exc} (record {manifest.record_id(rec)})"
            ) from exc
    ids = [manifest.record_id(r) for r in records]
    labels = [r.label for r in records]
    return np.stack(arrays), ids, labels


def evaluate_model(
    handle: ModelHandle,
    manifest: DatasetManifest,
    split: str = "test",
    preprocess_config: PreprocessConfig | None = None,
    batch_size: int = 32,
) -> MetricsReport:
    """Inference over a split in manifest order; argmax per record."""
    x, _ids, labels = _split_inputs(manifest, split, preprocess_config)
    logits = forward_logits(handle, x, batch_size=batch_size).values
    preds = [
        INFECTED if row[1] > row[0] else NOTINFECTED for row in logits
    ]
    return compute_metrics(confusion(preds, labels), model_id=handle.model_id)


def evaluate_ensemble(
    spec: EnsembleSpec,
    models: Mapping[str, ModelHandle] | Sequence[ModelHandle],
    manifest: DatasetManifest,
    split: str = "test",
    preprocess_config: PreprocessConfig | None = None,
    batch_size: int = 32,
    model_id: str = "ensemble",
) -> MetricsReport:
    """Fused inference over a split in manifest order."""
    if not isinstance(models, Mapping):
        models = {m.model_id: m for m in models}
    x, _ids, labels = _split_inputs(manifest, split, preprocess_config)
    from .fusion import _resolve_members  # shared member lookup

    handles = _resolve_members(spec, models)
    member_values = [
        forward_logits(h, x, batch_size=batch_size).values for h in handles
    ]
    preds = [p.label for p in fuse_logits(spec, member_values)]
    return compute_metrics(confusion(preds, labels), model_id=model_id)


def evaluate(
    subject: ModelHandle | EnsembleSpec,
    manifest: DatasetManifest,
    split: str = "test",
    models: Mapping[str, ModelHandle] | Sequence[ModelHandle] | None = None,
    preprocess_config: PreprocessConfig | None = None,
    batch_size: int = 32,
) -> MetricsReport:
    """Evaluate a single model or an ensemble spec plus its member models."""
    if isinstance(subject, EnsembleSpec):
        if models is None:
            raise ValueError("ensemble evaluation needs the member models")
        return evaluate_ensemble(
            subject, models, manifest, split, preprocess_config, batch_size
        )
    return evaluate_model(
        subject, manifest, split, preprocess_config, batch_size
    )


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

CSV_HEADER = "model,accuracy,precision,recall,f1"


def emit_report(
    reports: MetricsReport | Sequence[MetricsReport],
    outdir: Path | str,
) -> list[Path]:
    """Write metrics.json, metrics.csv (one row per model), and a confusion
    heatmap PNG annotated with the absolute counts.

    The heatmap shows the last report in the list; callers put the headline
    subject (typically the ensemble) last.
    """
    if isinstance(reports, MetricsReport):
        reports = [reports]
    reports = list(reports)
    if not reports:
        raise EmptyInput("no reports to emit")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    json_path = outdir / "metrics.json"
    json_path.write_text(
        json.dumps({"reports": [r.to_dict() for r in reports]}, indent=2) + "\n",
        encoding="utf-8",
    )

    csv_path = outdir / "metrics.csv"
    lines = [CSV_HEADER]
    for r in reports:
        lines.append(
            f"{r.model_id},{r.accuracy:.6f},{r.precision:.6f},"
            f"{r.recall:.6f},{r.f1:.6f}"
        )
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    png_path = outdir / "confusion_matrix.png"
    plot_confusion_matrix(reports[-1].confusion, reports[-1].model_id, png_path)
    return [json_path, csv_path, png_path]


def load_reports(path: Path | str) -> list[MetricsReport]:
    """Parse a metrics.json written by emit_report."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [MetricsReport.from_dict(r) for r in raw["reports"]]


def plot_confusion_matrix(
    cm: ConfusionMatrix, model_id: str, path: Path | str
) -> Path:
    """2x2 heatmap with count annotations; counts are also embedded as PNG
    text metadata so tooling can read them back without OCR."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    grid = np.array([[cm.tn, cm.fp], [cm.fn, cm.tp]], dtype=float)
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    im = ax.imshow(grid, cmap="Blues")
    ax.set_xticks([0, 1], [NOTINFECTED, INFECTED])
    ax.set_yticks([0, 1], [NOTINFECTED, INFECTED])
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    ax.set_title(f"confusion matrix: {model_id}" if model_id else "confusion matrix")
    threshold = grid.max() / 2 if grid.max() > 0 else 0.5
    for i in range(2):
        for j in range(2):
            color = "white" if grid[i, j] > threshold else "black"
            ax.text(j, i, f"{int(grid[i, j])}", ha="center", va="center",
                    color=color, fontsize=14)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    path = Path(path)
    metadata = {
        "Title": f"confusion matrix {model_id}".strip(),
        "Description": json.dumps(
            {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn}
        ),
    }
    fig.savefig(path, metadata=metadata)
    plt.close(fig)
    return path
