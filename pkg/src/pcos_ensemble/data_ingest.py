"""Dataset discovery, integrity checking, and cleaning.

Expected corpus layout:

    root/
      train/{infected,notinfected}/*.png|jpg|jpeg|bmp
      test/{infected,notinfected}/*.png|jpg|jpeg|bmp

Both the "notinfected" and "noninfected" folder spellings occur in the wild;
they are accepted and canonicalized to "notinfected". "infected" is the
positive class everywhere downstream.

Corrupted files are detected by fully decoding every image, not just reading
its header. Cleaning quarantines by default so that no data is silently
destroyed; deletion is opt-in.
"""

from __future__ import annotations

import json
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import EmptyClass, MissingSplit

logger = logging.getLogger(__name__)

INFECTED = "infected"
NOTINFECTED = "notinfected"
CLASS_LABELS = (INFECTED, NOTINFECTED)
SPLITS = ("train", "test")

# Accepted folder spellings, canonicalized.
_LABEL_ALIASES = {
    "infected": INFECTED,
    "notinfected": NOTINFECTED,
    "noninfected": NOTINFECTED,
}

# Ultrasound exports in practice; anything else is ignored with a warning.
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}

STATUS_VALID = "valid"
STATUS_CORRUPTED = "corrupted"
STATUS_UNREADABLE = "unreadable"

QUARANTINE_DIRNAME = "_quarantine"
DEFAULT_WORKERS = 2


def canonical_label(name: str) -> str | None:
    """Map a folder name to its canonical class label, or None if unknown."""
    return _LABEL_ALIASES.get(name.lower())


@dataclass
class ImageRecord:
    path: Path  # absolute
    label: str
    split: str
    status: str = STATUS_VALID


@dataclass
class DatasetManifest:
    root: Path
    records: list[ImageRecord] = field(default_factory=list)
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    generated_at: str = ""

    def valid_records(self, split: str | None = None) -> list[ImageRecord]:
        return [
            r for r in self.records
            if r.status == STATUS_VALID and (split is None or r.split == split)
        ]

    def flagged_records(self) -> list[ImageRecord]:
        return [r for r in self.records if r.status != STATUS_VALID]

    def record_id(self, record: ImageRecord) -> str:
        """Stable identifier: root-relative path with forward slashes."""
        return record.path.relative_to(self.root).as_posix()

    def recount(self) -> None:
        counts = {s: {c: 0 for c in CLASS_LABELS} for s in SPLITS}
        for r in self.records:
            if r.status == STATUS_VALID:
                counts[r.split][r.label] += 1
        self.counts = counts


@dataclass
class CleanReport:
    mode: str
    removed: int
    reasons: dict[str, str]  # record id -> status that flagged it


def verify_integrity(record: ImageRecord) -> ImageRecord:
    """Return a copy of the record with its status set by a full decode.

    ``Image.verify()`` only checks structure, so the file is reopened and
    fully loaded; truncated payloads surface here. Failures are encoded in
    the status, never raised.
    """
    path = record.path
    try:
        if not path.is_file() or path.stat().st_size == 0:
            return replace(record, status=STATUS_UNREADABLE)
    except OSError:
        return replace(record, status=STATUS_UNREADABLE)
    try:
        with Image.open(path) as img:
            img.verify()
        with Image.open(path) as img:
            img.load()  # force full pixel decode
    except (UnidentifiedImageError, SyntaxError):
        return replace(record, status=STATUS_UNREADABLE)
    except Exception:
        return replace(record, status=STATUS_CORRUPTED)
    return replace(record, status=STATUS_VALID)


def scan_dataset(
    root: Path | str,
    *,
    verify: bool = True,
    workers: int = DEFAULT_WORKERS,
) -> DatasetManifest:
    """Inventory the two-class train/test corpus under ``root``.

    Every image file becomes a record; with ``verify`` (the default) each
    file is fully decoded in a bounded thread pool and flagged if broken.
    Counts cover valid records only. Non-image files are skipped with a
    warning. Raises MissingSplit / EmptyClass naming the offending folder.
    """
    root = Path(root).resolve()
    records: list[ImageRecord] = []

    for split in SPLITS:
        split_dir = root / split
        if not split_dir.is_dir():
            raise MissingSplit(f"required subfolder missing: {split_dir}")

        found: dict[str, list[Path]] = {c: [] for c in CLASS_LABELS}
        class_dirs: dict[str, list[Path]] = {c: [] for c in CLASS_LABELS}
        for entry in sorted(split_dir.iterdir()):
            if not entry.is_dir():
                logger.warning("ignoring stray entry %s", entry)
                continue
            label = canonical_label(entry.name)
            if label is None:
                logger.warning("ignoring unrecognized class folder %s", entry)
                continue
            class_dirs[label].append(entry)
            for f in sorted(entry.iterdir()):
                if not f.is_file():
                    continue
                if f.suffix.lower() not in IMAGE_EXTENSIONS:
                    logger.warning("ignoring non-image file %s", f)
                    continue
                found[label].append(f)

        for label in CLASS_LABELS:
            if not class_dirs[label]:
                raise MissingSplit(
                    f"no '{label}' class folder under {split_dir}"
                )
        for label in CLASS_LABELS:
            if not found[label]:
                raise EmptyClass(f"no images in {class_dirs[label][0]}")
            records.extend(
                ImageRecord(path=f, label=label, split=split)
                for f in found[label]
            )

    if verify:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            records = list(pool.map(verify_integrity, records))
        for r in records:
            if r.status != STATUS_VALID:
                logger.warning("flagged %s image: %s", r.status, r.path)

    manifest = DatasetManifest(
        root=root,
        records=records,
        generated_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    manifest.recount()
    return manifest


def clean_dataset(
    manifest: DatasetManifest,
    mode: str = "quarantine",
) -> CleanReport:
    """Remove flagged records from disk according to ``mode``.

    dry_run reports candidates and touches nothing. quarantine moves
    flagged files to ``<root>/_quarantine/`` preserving their relative
    paths; delete unlinks them. After quarantine/delete the manifest drops
    the flagged records and its counts are recomputed. Filesystem errors
    propagate; files already moved stay moved and each move is logged.
    """
    if mode not in ("dry_run", "quarantine", "delete"):
        raise ValueError(f"unknown clean mode: {mode!r}")

    flagged = manifest.flagged_records()
    reasons = {manifest.record_id(r): r.status for r in flagged}

    if mode == "dry_run" or not flagged:
        return CleanReport(mode=mode, removed=0, reasons=reasons)

    for r in flagged:
        rel = r.path.relative_to(manifest.root)
        if mode == "quarantine":
            dest = manifest.root / QUARANTINE_DIRNAME / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.move(str(r.path), str(dest))
            logger.info("quarantined %s -> %s", rel.as_posix(), dest)
        else:
            r.path.unlink()
            logger.info("deleted %s", rel.as_posix())

    removed_paths = {r.path for r in flagged}
    manifest.records = [r for r in manifest.records if r.path not in removed_paths]
    manifest.recount()
    return CleanReport(mode=mode, removed=len(flagged), reasons=reasons)


def save_manifest(manifest: DatasetManifest, path: Path | str) -> Path:
    """Serialize the manifest as portable JSON (relative forward-slash paths)."""
    path = Path(path)
    payload = {
        "root": str(manifest.root),
        "generated_at": manifest.generated_at,
        "counts": manifest.counts,
        "records": [
            {
                "path": manifest.record_id(r),
                "label": r.label,
                "split": r.split,
                "status": r.status,
            }
            for r in manifest.records
        ],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(path: Path | str, root: Path | str | None = None) -> DatasetManifest:
    """Load a manifest written by save_manifest; ``root`` overrides the stored one."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    base = Path(root) if root is not None else Path(payload["root"])
    manifest = DatasetManifest(
        root=base,
        records=[
            ImageRecord(
                path=base / r["path"],
                label=r["label"],
                split=r["split"],
                status=r["status"],
            )
            for r in payload["records"]
        ],
        generated_at=payload.get("generated_at", ""),
    )
    manifest.recount()
    return manifest


def split_train_holdout(
    manifest: DatasetManifest,
    fraction: float = 0.1,
    seed: int = 0,
) -> tuple[list[ImageRecord], list[ImageRecord]]:
    """Split valid train records into (fit, holdout) portions, stratified.

    The holdout is reserved for ensemble weight search. Selection is seeded
    and keyed on sorted record paths, so every caller sees the same split.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"holdout fraction must be in [0, 1): {fraction}")
    rng = np.random.default_rng(seed)
    fit: list[ImageRecord] = []
    holdout: list[ImageRecord] = []
    for label in CLASS_LABELS:
        recs = sorted(
            (r for r in manifest.valid_records("train") if r.label == label),
            key=lambda r: manifest.record_id(r),
        )
        n_hold = int(np.ceil(fraction * len(recs))) if fraction > 0 else 0
        order = rng.permutation(len(recs))
        chosen = set(order[:n_hold].tolist())
        for i, r in enumerate(recs):
            (holdout if i in chosen else fit).append(r)
    fit.sort(key=lambda r: manifest.record_id(r))
    holdout.sort(key=lambda r: manifest.record_id(r))
    return fit, holdout
