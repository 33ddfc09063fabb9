"""Weighted logit fusion across ensemble members, plus weight search.

Each member contributes a scalar score: its logit margin
(logit_infected - logit_notinfected). The fused probability is

    p = sigmoid(sum_i w_i * s_i)

with nonnegative weights summing to one. For a 2-logit head this sigmoid
of the margin equals the softmax probability of the positive class, which
is what makes the scalarization consistent with cross-entropy training.

Two fusion modes are provided. ``sigmoid_weighted`` thresholds the fused
probability; ``logit_mean`` averages the 2-vectors with the weights and
takes the argmax. Under uniform weights the hard labels provably coincide:
sigmoid(mean(z1 - z0)) > 0.5 iff mean(z1) > mean(z0).

Weight search is an exhaustive scan of the simplex lattice at a given step,
which always contains the one-hot vertices, so the optimized ensemble can
never score below its best member on the optimization split.

Presets: denconst = DenseNet + ConvNeXt + Swin families; denconrest = all
five families. Both default to uniform weights.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .backbones import (
    COMPOUND_SCALED,
    DENSE_CONNECTED,
    MODERNIZED_DEPTHWISE,
    RESIDUAL,
    WINDOWED_ATTENTION,
    LogitMatrix,
    ModelHandle,
    forward_logits,
)
from .data_ingest import INFECTED, NOTINFECTED
from .errors import (
    AllZeroWeights,
    DegenerateSplit,
    LabelMismatch,
    LengthMismatch,
    MemberMissing,
    NegativeWeight,
)
from .preprocess import PreprocessedImage

SIGMOID_WEIGHTED = "sigmoid_weighted"
LOGIT_MEAN = "logit_mean"
FUSION_MODES = (SIGMOID_WEIGHTED, LOGIT_MEAN)

SIMPLEX_TOL = 1e-9

DENCONST_MEMBERS = (DENSE_CONNECTED, MODERNIZED_DEPTHWISE, WINDOWED_ATTENTION)
DENCONREST_MEMBERS = (
    DENSE_CONNECTED,
    MODERNIZED_DEPTHWISE,
    RESIDUAL,
    COMPOUND_SCALED,
    WINDOWED_ATTENTION,
)


@dataclass
class EnsembleSpec:
    members: list[str]
    weights: list[float]
    mode: str = SIGMOID_WEIGHTED
    threshold: float = 0.5

    def __post_init__(self):
        if len(self.members) != len(self.weights):
            raise LengthMismatch(
                f"{len(self.members)} members but {len(self.weights)} weights"
            )
        if any(w < 0 for w in self.weights):
            raise NegativeWeight(f"weights must be nonnegative: {self.weights}")
        if abs(sum(self.weights) - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"weights must sum to 1: {self.weights}")
        if self.mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode: {self.mode!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "members": self.members,
                "weights": self.weights,
                "mode": self.mode,
                "threshold": self.threshold,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "EnsembleSpec":
        raw = json.loads(text)
        return cls(
            members=list(raw["members"]),
            weights=[float(w) for w in raw["weights"]],
            mode=raw.get("mode", SIGMOID_WEIGHTED),
            threshold=float(raw.get("threshold", 0.5)),
        )


@dataclass
class FusedPrediction:
    probability_infected: float
    label: str


def denconst_spec() -> EnsembleSpec:
    n = len(DENCONST_MEMBERS)
    return EnsembleSpec(members=list(DENCONST_MEMBERS), weights=[1.0 / n] * n)


def denconrest_spec(weights: Sequence[float] | None = None) -> EnsembleSpec:
    n = len(DENCONREST_MEMBERS)
    w = list(weights) if weights is not None else [1.0 / n] * n
    return EnsembleSpec(members=list(DENCONREST_MEMBERS), weights=w)


def normalize_weights(raw: Sequence[float]) -> np.ndarray:
    """Project nonnegative raw weights onto the simplex: out_i = raw_i / sum."""
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("weights must be a nonempty 1-D sequence")
    if np.any(arr < 0):
        raise NegativeWeight(f"weights must be nonnegative: {arr.tolist()}")
    total = float(arr.sum())
    if total == 0.0:
        raise AllZeroWeights("at least one weight must be positive")
    out = arr / total
    return out / out.sum()  # second pass pins the sum to 1 within 1e-9


def model_score(logits: Sequence[float] | np.ndarray) -> float:
    """Scalarize a [notinfected, infected] logit pair as its margin."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.shape != (2,):
        raise LengthMismatch(f"expected a 2-vector of logits, got shape {arr.shape}")
    return float(arr[1] - arr[0])


def margin_scores(values: np.ndarray) -> np.ndarray:
    """Row-wise logit margins for a (batch, 2) matrix."""
    values = np.asarray(values, dtype=np.float64)
    return values[:, 1] - values[:, 0]


def fuse(scores: Sequence[float] | np.ndarray, weights: Sequence[float] | np.ndarray) -> float:
    """sigmoid(sum_i w_i * s_i) for one image's member scores."""
    s = np.asarray(scores, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if s.shape != w.shape or s.ndim != 1:
        raise LengthMismatch(
            f"scores and weights must be 1-D and equal length: {s.shape} vs {w.shape}"
        )
    return float(expit(np.dot(w, s)))


def _resolve_members(
    spec: EnsembleSpec,
    models: Mapping[str, ModelHandle] | Sequence[ModelHandle],
) -> list[ModelHandle]:
    if not isinstance(models, Mapping):
        models = {m.model_id: m for m in models}
    missing = [m for m in spec.members if m not in models]
    if missing:
        raise MemberMissing(f"no model for ensemble member(s): {missing}")
    return [models[m] for m in spec.members]


def predict_ensemble(
    spec: EnsembleSpec,
    models: Mapping[str, ModelHandle] | Sequence[ModelHandle],
    batch: Sequence[PreprocessedImage] | np.ndarray,
) -> list[FusedPrediction]:
    """Fuse member inference over a batch, in member order."""
    handles = _resolve_members(spec, models)
    logits = [forward_logits(h, batch).values for h in handles]
    return fuse_logits(spec, logits)


def fuse_logits(
    spec: EnsembleSpec, member_values: Sequence[np.ndarray]
) -> list[FusedPrediction]:
    """Fuse precomputed (batch, 2) logit arrays, one per member."""
    if len(member_values) != len(spec.members):
        raise LengthMismatch(
            f"{len(spec.members)} members but {len(member_values)} logit arrays"
        )
    w = np.asarray(spec.weights, dtype=np.float64)
    if spec.mode == SIGMOID_WEIGHTED:
        margins = np.stack([margin_scores(v) for v in member_values], axis=1)
        probs = expit(margins @ w)
        labels = probs > spec.threshold
    else:
        fused = sum(
            wi * np.asarray(v, dtype=np.float64)
            for wi, v in zip(w, member_values)
        )
        labels = np.argmax(fused, axis=1) == 1
        probs = expit(fused[:, 1] - fused[:, 0])  # softmax of a 2-vector
    return [
        FusedPrediction(
            probability_infected=float(p),
            label=INFECTED if flag else NOTINFECTED,
        )
        for p, flag in zip(probs, labels)
    ]


# ---------------------------------------------------------------------------
# simplex lattice weight search
# ---------------------------------------------------------------------------

def simplex_lattice(members: int, step: float) -> np.ndarray:
    """All nonnegative weight vectors summing to 1 in multiples of ``step``.

    The lattice is the set of integer compositions of n = round(1/step),
    scaled by 1/n, and always contains the one-hot vertices.
    """
    if members < 1:
        raise ValueError("need at least one member")
    n = int(round(1.0 / step))
    if n < 1:
        raise ValueError(f"step too large: {step}")
    # stars and bars: choose bar positions among n + members - 1 slots
    points = []
    for bars in combinations(range(n + members - 1), members - 1):
        prev = -1
        counts = []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(n + members - 1 - prev - 1)
        points.append(counts)
    return np.asarray(points, dtype=np.float64) / n


def _objective_values(
    margins: np.ndarray,
    y: np.ndarray,
    weight_grid: np.ndarray,
    objective: str,
    threshold: float,
) -> np.ndarray:
    probs = expit(margins @ weight_grid.T)  # (samples, candidates)
    preds = probs > threshold
    pos = y[:, None]
    tp = np.sum(preds & pos, axis=0).astype(np.float64)
    fp = np.sum(preds & ~pos, axis=0).astype(np.float64)
    fn = np.sum(~preds & pos, axis=0).astype(np.float64)
    tn = np.sum(~preds & ~pos, axis=0).astype(np.float64)
    if objective == "accuracy":
        return (tp + tn) / y.size
    denom = 2 * tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1e-300), 0.0)
    return f1


def fusion_objective(
    member_logits: Sequence[LogitMatrix | np.ndarray],
    labels: Sequence[str],
    weights: Sequence[float],
    objective: str = "f1",
    threshold: float = 0.5,
) -> float:
    """Objective achieved by one weight vector on a labeled split."""
    margins, y = _aligned_margins(member_logits, labels)
    grid = np.asarray(weights, dtype=np.float64).reshape(1, -1)
    return float(_objective_values(margins, y, grid, objective, threshold)[0])


def _aligned_margins(
    member_logits: Sequence[LogitMatrix | np.ndarray], labels: Sequence[str]
) -> tuple[np.ndarray, np.ndarray]:
    arrays = [
        m.values if isinstance(m, LogitMatrix) else np.asarray(m)
        for m in member_logits
    ]
    n = len(labels)
    for a in arrays:
        if a.shape[0] != n:
            raise LabelMismatch(
                f"{a.shape[0]} logit rows do not match {n} labels"
            )
    margins = np.stack([margin_scores(a) for a in arrays], axis=1)
    y = np.asarray([lbl == INFECTED for lbl in labels], dtype=bool)
    return margins, y


def optimize_weights(
    member_logits: Sequence[LogitMatrix | np.ndarray],
    labels: Sequence[str],
    objective: str = "f1",
    step: float = 0.05,
    threshold: float = 0.5,
) -> np.ndarray:
    """Brute-force maximizer of the objective over the simplex lattice.

    Ties break toward the vector closest to uniform (Euclidean), then
    lexicographically. With <= 5 members and the default step this is a
    ~10k-point scan: exact and reproducible.
    """
    if len(member_logits) < 2:
        raise ValueError("weight optimization needs at least 2 members")
    if objective not in ("f1", "accuracy"):
        raise ValueError(f"unknown objective: {objective!r}")
    margins, y = _aligned_margins(member_logits, labels)
    if y.all() or not y.any():
        raise DegenerateSplit("optimization labels contain a single class")

    grid = simplex_lattice(len(member_logits), step)
    values = _objective_values(margins, y, grid, objective, threshold)
    best = values.max()
    candidates = grid[values == best]
    uniform = np.full(grid.shape[1], 1.0 / grid.shape[1])
    dist = np.sum((candidates - uniform) ** 2, axis=1)
    nearest = candidates[dist == dist.min()]
    order = np.lexsort(nearest.T[::-1])  # lexicographic by first coordinate
    return nearest[order[0]]


# ---------------------------------------------------------------------------
# logit CSV dump format (decouples training from fusion experiments)
# ---------------------------------------------------------------------------

LOGIT_CSV_HEADER = ("record_id", "label", "logit_notinfected", "logit_infected")


def write_logit_csv(
    path: Path | str,
    record_ids: Sequence[str],
    labels: Sequence[str],
    values: np.ndarray,
) -> Path:
    values = np.asarray(values)
    if not len(record_ids) == len(labels) == values.shape[0]:
        raise LengthMismatch("record ids, labels, and logit rows must align")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOGIT_CSV_HEADER)
        for rid, lbl, row in zip(record_ids, labels, values):
            writer.writerow([rid, lbl, repr(float(row[0])), repr(float(row[1]))])
    return path


def read_logit_csv(path: Path | str) -> tuple[list[str], list[str], np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != LOGIT_CSV_HEADER:
            raise ValueError(f"unexpected logit CSV header in {path}: {header}")
        ids, labels, rows = [], [], []
        for rec in reader:
            ids.append(rec[0])
            labels.append(rec[1])
            rows.append((float(rec[2]), float(rec[3])))
    values = (
        np.asarray(rows, dtype=np.float64)
        if rows else np.zeros((0, 2), dtype=np.float64)
    )
    return ids, labels, values
